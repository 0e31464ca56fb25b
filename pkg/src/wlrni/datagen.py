"""EXP / CEXP dataset generation, validation and serialization.

A pair is built from a core pair (an unsatisfiable chain-plus-bridge formula
and a satisfiable "cut chain" variant over the same variables) conjoined with
one shared random satisfiable planar component. CEXP corrupts a fraction of
the pairs by adding literal edges to a copy of the unsatisfiable side until
it turns satisfiable, then pruning unnecessary additions.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .graph import (
    NodeType,
    TypedGraph,
    are_isomorphic,
    decode_graph,
    encode_cnf,
)
from .logic import Clause, CnfFormula, Literal, is_satisfiable, neg, pos
from .wl import WlKind, wl_distinguishes

log = logging.getLogger(__name__)

MAX_CLAUSE_WIDTH = 5
PLANAR_RETRY_LIMIT = 1000
PAIR_RETRY_LIMIT = 100


class GenerationError(RuntimeError):
    pass


class Direction(enum.Enum):
    INC = "inc"
    DEC = "dec"


class Subset(enum.Enum):
    EXP = "exp"
    CORRUPT = "corrupt"


# -- core gadgets ----------------------------------------------------------


def chain(direction: Direction, i: int, j: int) -> CnfFormula:
    """Cyclic implication chain forcing x_i..x_{j-1} to be equal.

    Clause k links x_k to its cyclic successor; DEC flips every polarity.
    The formula ranges over variables 0..j-1.
    """
    if j - i < 2:
        raise ValueError(f"chain needs at least 2 variables, got [{i}, {j})")
    span = j - i
    clauses = []
    for k in range(i, j):
        nxt = i + (k - i + 1) % span
        if direction is Direction.INC:
            clauses.append(Clause((neg(k), pos(nxt))))
        else:
            clauses.append(Clause((pos(k), neg(nxt))))
    return CnfFormula(j, tuple(clauses))


def bridge(two_n: int) -> CnfFormula:
    """Force x_i and x_{2n-1-i} to take opposite values."""
    if two_n < 2 or two_n % 2:
        raise ValueError(f"bridge needs a positive even variable count, got {two_n}")
    clauses = []
    for i in range(two_n // 2):
        mirror = two_n - 1 - i
        clauses.append(Clause((pos(i), pos(mirror))))
        clauses.append(Clause((neg(i), neg(mirror))))
    return CnfFormula(two_n, tuple(clauses))


def _and(num_vars: int, *parts: CnfFormula) -> CnfFormula:
    """Conjunction of formulas over a shared variable range."""
    return CnfFormula(num_vars, tuple(c for p in parts for c in p.clauses))


def make_core_pair(n: int) -> tuple[CnfFormula, CnfFormula]:
    """Return (unsat, sat) core formulas over 2n variables."""
    if n < 2:
        raise ValueError(f"core pair needs n >= 2, got {n}")
    two_n = 2 * n
    unsat = _and(two_n, chain(Direction.INC, 0, two_n), bridge(two_n))
    sat = _and(two_n, chain(Direction.INC, 0, n), chain(Direction.DEC, n, two_n), bridge(two_n))
    return unsat, sat


# -- planar base graphs ----------------------------------------------------


@dataclass(frozen=True)
class BaseGraph:
    """Plane bipartite graph with a rotation system (cyclic neighbour order)."""

    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    rotation: tuple[tuple[int, ...], ...]


def _rotation_from_faces(num_nodes: int, faces: Sequence[Sequence[int]]) -> list[list[int]]:
    succ: list[dict[int, int]] = [{} for _ in range(num_nodes)]
    for face in faces:
        m = len(face)
        for idx, v in enumerate(face):
            succ[v][face[idx - 1]] = face[(idx + 1) % m]
    rotation = []
    for v in range(num_nodes):
        start = min(succ[v])
        order = [start]
        while (nxt := succ[v][order[-1]]) != start:
            order.append(nxt)
        rotation.append(order)
    return rotation


def random_quadrangulation(num_nodes: int, rng: np.random.Generator) -> BaseGraph:
    """Grow a random plane quadrangulation from a 4-cycle.

    Each step picks a face (a, b, c, d) and one of its diagonals, and joins
    the diagonal's endpoints through a new vertex, splitting the face in two.
    The result is simple, bipartite, planar and 2-connected.
    """
    if num_nodes < 4:
        raise ValueError("quadrangulation needs at least 4 nodes")
    faces = [[0, 1, 2, 3], [0, 3, 2, 1]]
    edges = [(0, 1), (1, 2), (2, 3), (0, 3)]
    for w in range(4, num_nodes):
        face = faces.pop(int(rng.integers(len(faces))))
        shift = int(rng.integers(2))
        a, b, c, d = face[shift:] + face[:shift]
        faces += [[a, b, c, w], [a, w, c, d]]
        edges += [(min(a, w), w), (min(c, w), w)]
    rotation = _rotation_from_faces(num_nodes, faces)
    return BaseGraph(num_nodes, tuple(sorted(edges)), tuple(map(tuple, rotation)))


def _two_coloring(num_nodes: int, adj: Sequence[Sequence[int]]) -> list[int]:
    side = [-1] * num_nodes
    for root in range(num_nodes):
        if side[root] >= 0:
            continue
        side[root] = 0
        stack = [root]
        while stack:
            v = stack.pop()
            for u in adj[v]:
                if side[u] < 0:
                    side[u] = 1 - side[v]
                    stack.append(u)
                elif side[u] == side[v]:
                    raise ValueError("graph is not bipartite")
    return side


def parse_base_graphs(text: str) -> list[BaseGraph]:
    """Read base graphs: a "V E" line, then E lines "u v" (0-based), repeated.

    Each graph must be bipartite, 2-connected and planar; the rotation
    system comes from a planar embedding.
    """
    import networkx as nx

    tokens = [line.split() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    graphs = []
    pos_ = 0
    while pos_ < len(tokens):
        nv, ne = map(int, tokens[pos_])
        rows = tokens[pos_ + 1 : pos_ + 1 + ne]
        if len(rows) != ne:
            raise ValueError(f"base graph at line {pos_ + 1}: expected {ne} edges")
        edges = sorted({(min(int(u), int(v)), max(int(u), int(v))) for u, v in rows})
        pos_ += 1 + ne
        g = nx.Graph()
        g.add_nodes_from(range(nv))
        g.add_edges_from(edges)
        if len(edges) != ne or any(u == v for u, v in edges):
            raise ValueError("base graph must be simple")
        if not nx.is_bipartite(g):
            raise ValueError("base graph is not bipartite")
        if nv < 3 or not nx.is_biconnected(g):
            raise ValueError("base graph is not 2-connected")
        planar, embedding = nx.check_planarity(g)
        if not planar:
            raise ValueError("base graph is not planar")
        rotation = []
        for v in range(nv):
            order = list(embedding.neighbors_cw_order(v))
            k = order.index(min(order))
            rotation.append(tuple(order[k:] + order[:k]))
        graphs.append(BaseGraph(nv, tuple(edges), tuple(rotation)))
    return graphs


def _runs(items: Sequence[int], width: int) -> list[list[int]]:
    """Split into the fewest consecutive runs of at most ``width``, sizes balanced."""
    parts = math.ceil(len(items) / width)
    bounds = [round(k * len(items) / parts) for k in range(parts + 1)]
    return [list(items[bounds[k] : bounds[k + 1]]) for k in range(parts)]


def planar_formula(base: BaseGraph, rng: np.random.Generator, max_width: int = MAX_CLAUSE_WIDTH) -> CnfFormula:
    """Turn a bipartite plane graph into a CNF formula.

    The larger side becomes the variables (ties: the side of node 0), the
    other side the disjunctions. Wide disjunctions are split into runs that
    are consecutive in the rotation, literal signs are drawn per occurrence,
    and duplicate clauses are dropped.
    """
    adj: list[list[int]] = [[] for _ in range(base.num_nodes)]
    for u, v in base.edges:
        adj[u].append(v)
        adj[v].append(u)
    side = _two_coloring(base.num_nodes, adj)
    sizes = [side.count(0), side.count(1)]
    var_side = 0 if sizes[0] >= sizes[1] else 1
    var_nodes = [v for v in range(base.num_nodes) if side[v] == var_side]
    var_index = {v: i for i, v in enumerate(var_nodes)}
    clauses: list[Clause] = []
    seen: set[frozenset[Literal]] = set()
    for d in range(base.num_nodes):
        if side[d] == var_side:
            continue
        for run in _runs(base.rotation[d], max_width):
            signs = rng.integers(2, size=len(run))
            lits = [Literal(var_index[v], bool(s)) for v, s in zip(run, signs)]
            key = frozenset(lits)
            if key in seen:
                continue
            seen.add(key)
            clauses.append(Clause(lits))
    return CnfFormula(len(var_nodes), tuple(clauses))


def gen_planar_component(
    num_base_nodes: int,
    rng: np.random.Generator,
    *,
    bases: Sequence[BaseGraph] | None = None,
    max_width: int = MAX_CLAUSE_WIDTH,
    retry_limit: int = PLANAR_RETRY_LIMIT,
) -> CnfFormula:
    """Sample base graphs and sign patterns until the formula is satisfiable.

    With ``bases`` given, base graphs of the requested size are drawn from
    that pool instead of being grown.
    """
    pool = None
    if bases is not None:
        pool = [b for b in bases if b.num_nodes == num_base_nodes]
        if not pool:
            raise GenerationError(f"no imported base graph with {num_base_nodes} nodes")
    for _ in range(retry_limit):
        if pool is None:
            base = random_quadrangulation(num_base_nodes, rng)
        else:
            base = pool[int(rng.integers(len(pool)))]
        formula = planar_formula(base, rng, max_width)
        if is_satisfiable(formula):
            return formula
    raise GenerationError(f"no satisfiable planar component in {retry_limit} attempts")


# -- pairs -----------------------------------------------------------------


@dataclass(frozen=True)
class GraphPair:
    pair_id: int
    n: int
    subset: Subset
    sat_graph: TypedGraph
    unsat_graph: TypedGraph
    sat_formula: CnfFormula
    unsat_formula: CnfFormula
    seed_trace: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class PairReport:
    pair_id: int
    subset: Subset
    sat_labels_ok: bool
    non_isomorphic: bool
    wl1_indistinguishable: bool | None = None
    fwl2_distinguishable: bool | None = None
    wl1_distinguishable: bool | None = None

    @property
    def ok(self) -> bool:
        flags = [self.sat_labels_ok, self.non_isomorphic]
        if self.subset is Subset.EXP:
            flags += [self.wl1_indistinguishable, self.fwl2_distinguishable]
        else:
            flags.append(self.wl1_distinguishable)
        return all(flags)


def validate_pair(pair: GraphPair) -> PairReport:
    labels = is_satisfiable(pair.sat_formula) and not is_satisfiable(pair.unsat_formula)
    non_iso = not are_isomorphic(pair.sat_graph, pair.unsat_graph)
    wl1 = wl_distinguishes(WlKind.WL1, pair.sat_graph, pair.unsat_graph)
    if pair.subset is Subset.EXP:
        # FWL2 is only needed when 1-WL already fails to separate the pair
        fwl2 = True if wl1 else wl_distinguishes(WlKind.FWL2, pair.sat_graph, pair.unsat_graph)
        return PairReport(pair.pair_id, pair.subset, labels, non_iso, not wl1, fwl2)
    return PairReport(pair.pair_id, pair.subset, labels, non_iso, wl1_distinguishable=wl1)


def assemble_exp_pair(pair_id: int, n: int, planar: CnfFormula, seed_trace: dict | None = None) -> GraphPair:
    core_unsat, core_sat = make_core_pair(n)
    unsat = planar.conjoin(core_unsat)
    sat = planar.conjoin(core_sat)
    return GraphPair(
        pair_id, n, Subset.EXP, encode_cnf(sat), encode_cnf(unsat), sat, unsat, seed_trace or {}
    )


def gen_exp_pair(
    n: int,
    planar_base_nodes: int,
    rng: np.random.Generator,
    *,
    pair_id: int = 0,
    bases: Sequence[BaseGraph] | None = None,
    retry_limit: int = PAIR_RETRY_LIMIT,
) -> GraphPair:
    for attempt in range(1, retry_limit + 1):
        planar = gen_planar_component(planar_base_nodes, rng, bases=bases)
        pair = assemble_exp_pair(
            pair_id, n, planar, {"pair_id": pair_id, "attempts": attempt, "base_nodes": planar_base_nodes}
        )
        if validate_pair(pair).ok:
            return pair
        log.debug("pair %d attempt %d failed validation", pair_id, attempt)
    raise GenerationError(f"pair {pair_id}: no valid EXP pair in {retry_limit} attempts")


def _with_literal(formula: CnfFormula, clause_idx: int, lit: Literal) -> CnfFormula:
    clauses = list(formula.clauses)
    clauses[clause_idx] = Clause(clauses[clause_idx].literals + (lit,))
    return CnfFormula(formula.num_vars, tuple(clauses))


def _apply_additions(
    base: CnfFormula, added: Iterable[tuple[int, Literal]]
) -> CnfFormula:
    out = base
    for clause_idx, lit in added:
        out = _with_literal(out, clause_idx, lit)
    return out


def add_literals_until_sat(
    formula: CnfFormula,
    rng: np.random.Generator,
    *,
    min_added: int = 3,
    max_width: int = MAX_CLAUSE_WIDTH,
) -> list[tuple[int, Literal]]:
    """Add random non-redundant literals until >= min_added and satisfiable.

    Returns the additions in insertion order as (clause index, literal).
    """
    current = formula
    added: list[tuple[int, Literal]] = []
    while len(added) < min_added or not is_satisfiable(current):
        open_clauses = [
            j
            for j, c in enumerate(current.clauses)
            if c.width < max_width and len(c.variables()) < current.num_vars
        ]
        if not open_clauses:
            raise GenerationError("no clause can take another literal")
        j = open_clauses[int(rng.integers(len(open_clauses)))]
        used = current.clauses[j].variables()
        candidates = [
            Literal(v, s) for v in range(current.num_vars) if v not in used for s in (False, True)
        ]
        lit = candidates[int(rng.integers(len(candidates)))]
        current = _with_literal(current, j, lit)
        added.append((j, lit))
    return added


def minimize_additions(
    formula: CnfFormula, added: Sequence[tuple[int, Literal]]
) -> list[tuple[int, Literal]]:
    """Single pass in insertion order: drop an addition if the formula stays satisfiable without it."""
    kept = list(added)
    for edge in added:
        trial = [e for e in kept if e != edge]
        if is_satisfiable(_apply_additions(formula, trial)):
            kept = trial
    return kept


def corrupt_pair(pair: GraphPair, rng: np.random.Generator) -> GraphPair:
    if pair.subset is not Subset.EXP:
        raise ValueError("only EXP pairs can be corrupted")
    added = add_literals_until_sat(pair.unsat_formula, rng)
    kept = minimize_additions(pair.unsat_formula, added)
    sat = _apply_additions(pair.unsat_formula, kept)
    trace = dict(pair.seed_trace, added=len(added), kept=len(kept))
    return replace(
        pair,
        subset=Subset.CORRUPT,
        sat_formula=sat,
        sat_graph=encode_cnf(sat),
        seed_trace=trace,
    )


def added_edges(pair: GraphPair) -> set[tuple[int, int]]:
    return set(pair.sat_graph.edges) - set(pair.unsat_graph.edges)


def check_minimality(pair: GraphPair) -> bool:
    """Removing any single added literal edge must make the formula unsatisfiable."""
    extra = sorted(added_edges(pair))
    if not extra:
        return False
    nv = pair.sat_formula.num_vars
    for u, v in extra:
        lit_node, clause_node = (u, v) if u < 2 * nv else (v, u)
        lit = Literal(lit_node // 2, bool(lit_node % 2))
        j = clause_node - 2 * nv
        clauses = list(pair.sat_formula.clauses)
        clauses[j] = Clause(l for l in clauses[j] if l != lit)
        if is_satisfiable(CnfFormula(nv, tuple(clauses))):
            return False
    return True


# -- datasets --------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorConfig:
    num_pairs: int = 600
    n_min: int = 2
    n_max: int = 4
    planar_sizes: tuple[tuple[int, int], ...] = ((12, 500), (15, 100))
    max_clause_width: int = MAX_CLAUSE_WIDTH
    corrupt_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.n_min <= self.n_max:
            raise ValueError("need 2 <= n_min <= n_max")
        if self.max_clause_width < 2:
            raise ValueError("clause width cap must be >= 2")
        if not 0.0 <= self.corrupt_fraction <= 1.0:
            raise ValueError("corrupt_fraction must lie in [0, 1]")
        if self.num_pairs < 1:
            raise ValueError("num_pairs must be positive")
        if not self.planar_sizes or any(k <= 0 for _, k in self.planar_sizes):
            raise ValueError("planar_sizes needs positive weights")

    def to_json(self) -> dict:
        d = asdict(self)
        d["planar_sizes"] = [list(p) for p in self.planar_sizes]
        return d


def pair_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox stream for ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *key])))


_ALLOC_STREAM = 2**32 - 1
_CORRUPT_STREAM = 1


def allocate_sizes(config: GeneratorConfig) -> list[int]:
    """Planar base size per pair id, in the configured proportions (largest remainder)."""
    total = sum(k for _, k in config.planar_sizes)
    exact = [config.num_pairs * k / total for _, k in config.planar_sizes]
    counts = [math.floor(x) for x in exact]
    order = sorted(range(len(exact)), key=lambda i: (counts[i] - exact[i], i))
    for i in order[: config.num_pairs - sum(counts)]:
        counts[i] += 1
    sizes = [s for (s, _), c in zip(config.planar_sizes, counts) for _ in range(c)]
    return [sizes[i] for i in pair_rng(config.seed, _ALLOC_STREAM).permutation(len(sizes))]


def corrupted_ids(config: GeneratorConfig) -> set[int]:
    k = round(config.num_pairs * config.corrupt_fraction)
    rng = pair_rng(config.seed, _ALLOC_STREAM, _CORRUPT_STREAM)
    return {int(i) for i in rng.choice(config.num_pairs, size=k, replace=False)}


def _generate_one(args) -> GraphPair:
    config, pair_id, base_nodes, corrupt, bases = args
    rng = pair_rng(config.seed, pair_id)
    n = int(rng.integers(config.n_min, config.n_max + 1))
    pair = gen_exp_pair(n, base_nodes, rng, pair_id=pair_id, bases=bases)
    pair = replace(pair, seed_trace=dict(pair.seed_trace, seed=config.seed))
    if corrupt:
        pair = corrupt_pair(pair, pair_rng(config.seed, pair_id, _CORRUPT_STREAM))
    return pair


@dataclass(frozen=True)
class Dataset:
    pairs: tuple[GraphPair, ...]
    manifest: dict

    def counts(self) -> dict[str, int]:
        out = {s.value: 0 for s in Subset}
        for p in self.pairs:
            out[p.subset.value] += 1
        return out


def generate_dataset(
    config: GeneratorConfig, *, jobs: int = 1, bases: Sequence[BaseGraph] | None = None
) -> Dataset:
    sizes = allocate_sizes(config)
    corrupt = corrupted_ids(config)
    tasks = [(config, i, sizes[i], i in corrupt, bases) for i in range(config.num_pairs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            pairs = list(pool.map(_generate_one, tasks, chunksize=4))
    else:
        pairs = [_generate_one(t) for t in tasks]
    manifest = {
        "tool": "wlrni",
        "version": __version__,
        "config": config.to_json(),
        "seed": config.seed,
        "num_pairs": len(pairs),
        "counts": {s.value: sum(p.subset is s for p in pairs) for s in Subset},
    }
    return Dataset(tuple(pairs), manifest)


# -- serialization ---------------------------------------------------------


def graph_record(pair: GraphPair, role: str) -> dict:
    g = pair.sat_graph if role == "sat" else pair.unsat_graph
    return {
        "pair_id": pair.pair_id,
        "role": role,
        "subset": pair.subset.value,
        "n": pair.n,
        "num_nodes": g.num_nodes,
        "node_types": [t.code for t in g.node_types],
        "edges": [list(e) for e in g.sorted_edges()],
        "label": 1 if role == "sat" else 0,
    }


def dataset_lines(pairs: Iterable[GraphPair]) -> str:
    lines = []
    for pair in pairs:
        for role in ("sat", "unsat"):
            lines.append(json.dumps(graph_record(pair, role), separators=(",", ":")))
    return "\n".join(lines) + "\n"


def manifest_path(path: Path) -> Path:
    return path.with_name(path.stem + ".manifest.json")


def write_dataset(dataset: Dataset, path: str | Path) -> Path:
    path = Path(path)
    body = dataset_lines(dataset.pairs).encode("utf-8")
    path.write_bytes(body)
    manifest = dict(dataset.manifest, sha256=hashlib.sha256(body).hexdigest(), num_graphs=2 * len(dataset.pairs))
    mpath = manifest_path(path)
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return mpath


def record_to_graph(rec: dict) -> TypedGraph:
    return TypedGraph(
        rec["num_nodes"], [NodeType.from_code(c) for c in rec["node_types"]], [tuple(e) for e in rec["edges"]]
    )


def read_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    body = path.read_bytes()
    mpath = manifest_path(path)
    manifest = json.loads(mpath.read_text(encoding="utf-8")) if mpath.exists() else {}
    if "sha256" in manifest and manifest["sha256"] != hashlib.sha256(body).hexdigest():
        raise ValueError(f"{path}: checksum does not match manifest")
    by_pair: dict[int, dict[str, dict]] = {}
    for lineno, line in enumerate(body.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        rec = json.loads(line)
        roles = by_pair.setdefault(rec["pair_id"], {})
        if rec["role"] in roles:
            raise ValueError(f"{path}:{lineno}: duplicate {rec['role']} graph for pair {rec['pair_id']}")
        roles[rec["role"]] = rec
    pairs = []
    for pid in sorted(by_pair):
        roles = by_pair[pid]
        if set(roles) != {"sat", "unsat"}:
            raise ValueError(f"pair {pid} lacks a sat or unsat graph")
        sat_g, unsat_g = record_to_graph(roles["sat"]), record_to_graph(roles["unsat"])
        pairs.append(
            GraphPair(
                pid,
                roles["sat"]["n"],
                Subset(roles["sat"]["subset"]),
                sat_g,
                unsat_g,
                decode_graph(sat_g),
                decode_graph(unsat_g),
                {"seed": manifest.get("seed"), "pair_id": pid},
            )
        )
    if sorted(p.pair_id for p in pairs) != list(range(len(pairs))):
        raise ValueError("pair ids are not dense")
    if manifest and manifest.get("num_pairs") != len(pairs):
        raise ValueError("manifest pair count does not match data")
    return Dataset(tuple(pairs), manifest)


@dataclass(frozen=True)
class ValidationReport:
    entries: tuple[PairReport, ...]

    @property
    def valid(self) -> bool:
        return all(e.ok for e in self.entries)

    def counts(self) -> dict[str, int]:
        out = {"pairs": len(self.entries), "passed": sum(e.ok for e in self.entries)}
        for flag in (
            "sat_labels_ok",
            "non_isomorphic",
            "wl1_indistinguishable",
            "fwl2_distinguishable",
            "wl1_distinguishable",
        ):
            vals = [getattr(e, flag) for e in self.entries if getattr(e, flag) is not None]
            out[flag] = sum(vals)
            out[flag + "_applicable"] = len(vals)
        return out


def validate_dataset(dataset: Dataset, *, jobs: int = 1) -> ValidationReport:
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(validate_pair, dataset.pairs, chunksize=4))
    else:
        entries = [validate_pair(p) for p in dataset.pairs]
    return ValidationReport(tuple(entries))

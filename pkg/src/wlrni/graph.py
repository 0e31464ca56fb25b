"""Typed clause graphs, the CNF graph encoding, and exact isomorphism."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .logic import Clause, CnfFormula, Literal


class GraphError(ValueError):
    pass


class NodeType(enum.IntEnum):
    LITERAL = 0
    DISJUNCTION = 1

    @property
    def code(self) -> str:
        return "L" if self is NodeType.LITERAL else "D"

    @classmethod
    def from_code(cls, code: str) -> NodeType:
        try:
            return {"L": cls.LITERAL, "D": cls.DISJUNCTION}[code]
        except KeyError:
            raise GraphError(f"unknown node type code {code!r}") from None


def _norm_edge(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class TypedGraph:
    """Undirected simple graph whose nodes are literals or disjunctions.

    ``provenance`` is descriptive metadata and takes no part in equality.
    """

    num_nodes: int
    node_types: tuple[NodeType, ...]
    edges: frozenset[tuple[int, int]]
    provenance: tuple[str, ...] | None = field(default=None, compare=False)

    def __init__(
        self,
        num_nodes: int,
        node_types: Iterable[NodeType],
        edges: Iterable[tuple[int, int]],
        provenance: Sequence[str] | None = None,
    ):
        types = tuple(NodeType(t) for t in node_types)
        if len(types) != num_nodes:
            raise GraphError(f"{len(types)} node types for {num_nodes} nodes")
        norm = set()
        for u, v in edges:
            if u == v:
                raise GraphError(f"self-loop at {u}")
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise GraphError(f"edge ({u}, {v}) out of range")
            e = _norm_edge(int(u), int(v))
            if e in norm:
                raise GraphError(f"duplicate edge {e}")
            norm.add(e)
        if provenance is not None and len(provenance) != num_nodes:
            raise GraphError("provenance length mismatch")
        object.__setattr__(self, "num_nodes", num_nodes)
        object.__setattr__(self, "node_types", types)
        object.__setattr__(self, "edges", frozenset(norm))
        object.__setattr__(
            self, "provenance", None if provenance is None else tuple(provenance)
        )

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes))
        if self.edges:
            idx = np.array(sorted(self.edges))
            a[idx[:, 0], idx[:, 1]] = 1.0
            a[idx[:, 1], idx[:, 0]] = 1.0
        return a

    @cached_property
    def type_array(self) -> np.ndarray:
        return np.array([int(t) for t in self.node_types], dtype=np.int64)

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def degree_profile(self) -> list[tuple[int, int]]:
        """Sorted (type, degree) sequence; an isomorphism invariant."""
        return sorted((int(t), self.degree(v)) for v, t in enumerate(self.node_types))

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def permute(self, perm: Sequence[int]) -> TypedGraph:
        """Relabel node ``v`` as ``perm[v]``."""
        if sorted(perm) != list(range(self.num_nodes)):
            raise GraphError("not a permutation")
        types = [None] * self.num_nodes
        prov = None if self.provenance is None else [None] * self.num_nodes
        for v, p in enumerate(perm):
            types[p] = self.node_types[v]
            if prov is not None:
                prov[p] = self.provenance[v]
        edges = [(perm[u], perm[v]) for u, v in self.edges]
        return TypedGraph(self.num_nodes, types, edges, prov)


def empty_graph() -> TypedGraph:
    return TypedGraph(0, (), ())


def _lit_node(lit: Literal) -> int:
    return 2 * lit.var_index + int(lit.negated)


def encode_cnf(formula: CnfFormula) -> TypedGraph:
    """Clause-graph encoding.

    Node ``2v`` is the positive and ``2v+1`` the negative literal of
    variable ``v``; clause ``j`` is node ``2*num_vars + j``.
    """
    nv = formula.num_vars
    types = [NodeType.LITERAL] * (2 * nv) + [NodeType.DISJUNCTION] * len(formula.clauses)
    prov = [f"x{v}{s}" for v in range(nv) for s in "+-"]
    edges = [(2 * v, 2 * v + 1) for v in range(nv)]
    for j, clause in enumerate(formula.clauses):
        if clause.is_tautology:
            raise GraphError(f"clause {j} is tautological: {clause}")
        prov.append(f"c{j}")
        edges.extend((_lit_node(lit), 2 * nv + j) for lit in clause)
    return TypedGraph(len(types), types, edges, prov)


def check_enc_invariants(g: TypedGraph) -> None:
    """Raise GraphError unless ``g`` has the shape of a clause-graph encoding."""
    for v, t in enumerate(g.node_types):
        nbr_types = [g.node_types[u] for u in g.adjacency[v]]
        if t is NodeType.LITERAL:
            if nbr_types.count(NodeType.LITERAL) != 1:
                raise GraphError(f"literal node {v} must have exactly one literal neighbour")
        elif NodeType.LITERAL not in nbr_types or NodeType.DISJUNCTION in nbr_types:
            raise GraphError(f"disjunction node {v} must touch only literal nodes")


def decode_graph(g: TypedGraph) -> CnfFormula:
    """Recover a formula whose encoding is ``g`` up to node relabelling.

    The positive literal of each variable is taken to be the lower-indexed
    node of its complementary pair; flipping a variable's polarity does not
    change satisfiability.
    """
    check_enc_invariants(g)
    var_of: dict[int, Literal] = {}
    nv = 0
    for v, t in enumerate(g.node_types):
        if t is NodeType.LITERAL and v not in var_of:
            (mate,) = [u for u in g.adjacency[v] if g.node_types[u] is NodeType.LITERAL]
            var_of[v] = Literal(nv, False)
            var_of[mate] = Literal(nv, True)
            nv += 1
    clauses = []
    for v, t in enumerate(g.node_types):
        if t is NodeType.DISJUNCTION:
            clauses.append(Clause(sorted(var_of[u] for u in g.adjacency[v])))
    return CnfFormula(nv, tuple(clauses))


def disjoint_union(g: TypedGraph, h: TypedGraph) -> TypedGraph:
    off = g.num_nodes
    prov = None
    if g.provenance is not None or h.provenance is not None:
        prov = list(g.provenance or [""] * g.num_nodes) + list(h.provenance or [""] * h.num_nodes)
    edges = list(g.edges) + [(u + off, v + off) for u, v in h.edges]
    return TypedGraph(g.num_nodes + h.num_nodes, g.node_types + h.node_types, edges, prov)


# -- isomorphism -----------------------------------------------------------

ISO_NODE_CAP = 256


def _split_histograms(colors: Sequence[int], split: int) -> tuple[list[int], list[int]]:
    return sorted(colors[:split]), sorted(colors[split:])


def are_isomorphic(g: TypedGraph, h: TypedGraph, cap: int = ISO_NODE_CAP) -> bool:
    """Exact isomorphism test by individualization and 1-WL refinement.

    Both graphs are refined jointly; a node of ``g`` from the smallest
    non-singleton color class is individualized together with each
    same-colored candidate in ``h`` in turn. Refinement is equivariant, so
    the search is complete, and a discrete coloring is checked edge by edge.
    """
    from .wl import refine_colors

    if max(g.num_nodes, h.num_nodes) > cap:
        raise GraphError(f"isomorphism search refused above {cap} nodes")
    if (
        g.num_nodes != h.num_nodes
        or len(g.edges) != len(h.edges)
        or g.degree_profile() != h.degree_profile()
    ):
        return False
    n = g.num_nodes
    if n == 0:
        return True
    union = disjoint_union(g, h)
    adj = union.adjacency

    def search(colors: list[int]) -> bool:
        colors, _ = refine_colors(adj, colors)
        left, right = _split_histograms(colors, n)
        if left != right:
            return False
        counts: dict[int, int] = {}
        for c in colors[:n]:
            counts[c] = counts.get(c, 0) + 1
        cells = [(k, c) for c, k in counts.items() if k > 1]
        if not cells:
            where = {c: v - n for v, c in enumerate(colors[n:], start=n)}
            mapping = [where[colors[v]] for v in range(n)]
            return all(_norm_edge(mapping[u], mapping[v]) in h.edges for u, v in g.edges)
        _, target = min(cells)
        v = colors.index(target)
        fresh = max(colors) + 1
        for u in range(n, 2 * n):
            if colors[u] != target:
                continue
            trial = list(colors)
            trial[v] = trial[u] = fresh
            if search(trial):
                return True
        return False

    return search([int(t) for t in union.node_types])


def are_isomorphic_bruteforce(g: TypedGraph, h: TypedGraph) -> bool:
    """Factorial scan over all bijections; for small graphs only."""
    if g.num_nodes != h.num_nodes or len(g.edges) != len(h.edges):
        return False
    for perm in itertools.permutations(range(h.num_nodes)):
        if any(g.node_types[v] != h.node_types[perm[v]] for v in range(g.num_nodes)):
            continue
        if all(_norm_edge(perm[u], perm[v]) in h.edges for u, v in g.edges):
            return True
    return False

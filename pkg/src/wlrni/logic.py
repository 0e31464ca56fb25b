"""Propositional CNF formulas, DIMACS I/O and a DPLL solver.

Variables are 0-based indices. Inside the solver, literals are signed
integers ``±(var_index + 1)`` so that complements are a single negation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union


class FormulaError(ValueError):
    """Raised for structurally invalid formulas or assignments."""


class DimacsError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True, order=True)
class Literal:
    var_index: int
    negated: bool = False

    def __post_init__(self):
        if self.var_index < 0:
            raise FormulaError(f"negative variable index {self.var_index}")

    def complement(self) -> Literal:
        return Literal(self.var_index, not self.negated)

    def to_int(self) -> int:
        return -(self.var_index + 1) if self.negated else self.var_index + 1

    @classmethod
    def from_int(cls, value: int) -> Literal:
        if value == 0:
            raise FormulaError("0 is not a literal")
        return cls(abs(value) - 1, value < 0)

    def __str__(self) -> str:
        return f"{'¬' if self.negated else ''}x{self.var_index}"


def pos(i: int) -> Literal:
    return Literal(i, False)


def neg(i: int) -> Literal:
    return Literal(i, True)


@dataclass(frozen=True)
class Clause:
    literals: tuple[Literal, ...]

    def __init__(self, literals: Iterable[Literal]):
        lits = tuple(literals)
        if not lits:
            raise FormulaError("empty clause")
        if len(set(lits)) != len(lits):
            raise FormulaError(f"duplicate literal in clause {lits}")
        object.__setattr__(self, "literals", lits)

    @property
    def width(self) -> int:
        return len(self.literals)

    @property
    def is_tautology(self) -> bool:
        s = set(self.literals)
        return any(lit.complement() in s for lit in s)

    def variables(self) -> set[int]:
        return {lit.var_index for lit in self.literals}

    def __iter__(self):
        return iter(self.literals)

    def __len__(self) -> int:
        return len(self.literals)

    def __str__(self) -> str:
        return "(" + " ∨ ".join(map(str, self.literals)) + ")"


@dataclass(frozen=True)
class CnfFormula:
    num_vars: int
    clauses: tuple[Clause, ...] = field(default=())

    def __post_init__(self):
        if self.num_vars < 0:
            raise FormulaError("negative variable count")
        clauses = tuple(c if isinstance(c, Clause) else Clause(c) for c in self.clauses)
        object.__setattr__(self, "clauses", clauses)
        for c in clauses:
            for lit in c:
                if lit.var_index >= self.num_vars:
                    raise FormulaError(
                        f"literal {lit} out of range for {self.num_vars} variables"
                    )

    @classmethod
    def from_ints(cls, num_vars: int, clauses: Iterable[Iterable[int]]) -> CnfFormula:
        """Build from 1-based signed integer clauses, DIMACS style."""
        return cls(num_vars, tuple(Clause(Literal.from_int(v) for v in c) for c in clauses))

    def to_ints(self) -> list[list[int]]:
        return [[lit.to_int() for lit in c] for c in self.clauses]

    def conjoin(self, other: CnfFormula) -> CnfFormula:
        """Conjunction with ``other`` placed on fresh variables after ours."""
        shift = self.num_vars
        moved = tuple(
            Clause(Literal(l.var_index + shift, l.negated) for l in c) for c in other.clauses
        )
        return CnfFormula(self.num_vars + other.num_vars, self.clauses + moved)

    def __str__(self) -> str:
        return " ∧ ".join(map(str, self.clauses)) if self.clauses else "⊤"


Assignment = Mapping[int, bool]


@dataclass(frozen=True)
class Satisfiable:
    witness: dict[int, bool]

    @property
    def is_sat(self) -> bool:
        return True


@dataclass(frozen=True)
class Unsatisfiable:
    @property
    def is_sat(self) -> bool:
        return False


SatResult = Union[Satisfiable, Unsatisfiable]


def eval_assignment(formula: CnfFormula, a: Assignment) -> bool:
    used = {lit.var_index for c in formula.clauses for lit in c}
    missing = sorted(v for v in used if v not in a)
    if missing:
        raise FormulaError(f"assignment misses variables {missing}")
    return all(any(a[lit.var_index] != lit.negated for lit in c) for c in formula.clauses)


# -- DPLL ------------------------------------------------------------------


def _simplify(clauses: list[frozenset[int]], lit: int) -> list[frozenset[int]] | None:
    """Assign ``lit`` true. Returns None on an empty clause."""
    out = []
    for c in clauses:
        if lit in c:
            continue
        if -lit in c:
            c = c - {-lit}
            if not c:
                return None
        out.append(c)
    return out


def _dpll(clauses: list[frozenset[int]], trail: dict[int, bool], num_vars: int) -> bool:
    while True:
        # unit propagation
        unit = next((c for c in clauses if len(c) == 1), None)
        if unit is not None:
            (lit,) = unit
            trail[abs(lit) - 1] = lit > 0
            clauses = _simplify(clauses, lit)
            if clauses is None:
                return False
            continue
        # pure literals, smallest variable first for determinism
        present = set().union(*clauses) if clauses else set()
        pure = sorted((l for l in present if -l not in present), key=abs)
        if pure:
            for lit in pure:
                trail[abs(lit) - 1] = lit > 0
                clauses = [c for c in clauses if lit not in c]
            continue
        break
    if not clauses:
        return True
    var = min(abs(l) for c in clauses for l in c)
    for lit in (-var, var):
        reduced = _simplify(clauses, lit)
        if reduced is None:
            continue
        branch = dict(trail)
        branch[var - 1] = lit > 0
        if _dpll(reduced, branch, num_vars):
            trail.clear()
            trail.update(branch)
            return True
    return False


def solve_sat(formula: CnfFormula) -> SatResult:
    """Complete DPLL with unit propagation and pure-literal elimination.

    Branches on the smallest unassigned variable, false before true.
    Tautological clauses are dropped before search. Variables left
    unconstrained are reported as False in the witness.
    """
    clauses = []
    for c in formula.clauses:
        ints = frozenset(lit.to_int() for lit in c)
        if any(-l in ints for l in ints):
            continue
        clauses.append(ints)
    trail: dict[int, bool] = {}
    if not _dpll(clauses, trail, formula.num_vars):
        return Unsatisfiable()
    witness = {v: trail.get(v, False) for v in range(formula.num_vars)}
    if not eval_assignment(formula, witness):  # pragma: no cover - solver invariant
        raise AssertionError("DPLL produced a non-satisfying witness")
    return Satisfiable(witness)


def is_satisfiable(formula: CnfFormula) -> bool:
    return solve_sat(formula).is_sat


BRUTEFORCE_CAP = 20


def enumerate_sat_bruteforce(formula: CnfFormula, cap: int = BRUTEFORCE_CAP) -> SatResult:
    """Truth-table scan over all 2**num_vars assignments."""
    if formula.num_vars > cap:
        raise FormulaError(f"{formula.num_vars} variables exceeds brute-force cap {cap}")
    for bits in itertools.product((False, True), repeat=formula.num_vars):
        a = dict(enumerate(bits))
        if eval_assignment(formula, a):
            return Satisfiable(a)
    return Unsatisfiable()


# -- DIMACS ----------------------------------------------------------------


def parse_dimacs(text: str) -> CnfFormula:
    header = None
    clauses: list[list[int]] = []
    current: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if header is not None:
                raise DimacsError("duplicate header", lineno)
            if len(parts) != 4 or parts[1] != "cnf":
                raise DimacsError(f"malformed header {line!r}", lineno)
            try:
                header = (int(parts[2]), int(parts[3]))
            except ValueError:
                raise DimacsError(f"malformed header {line!r}", lineno) from None
            if min(header) < 0:
                raise DimacsError("negative counts in header", lineno)
            continue
        if header is None:
            raise DimacsError("clause before 'p cnf' header", lineno)
        for tok in line.split():
            try:
                value = int(tok)
            except ValueError:
                raise DimacsError(f"bad token {tok!r}", lineno) from None
            if value == 0:
                if not current:
                    raise DimacsError("empty clause", lineno)
                clauses.append(current)
                current = []
            elif abs(value) > header[0]:
                raise DimacsError(f"literal {value} out of range 1..{header[0]}", lineno)
            else:
                current.append(value)
    last = len(text.splitlines())
    if header is None:
        raise DimacsError("missing 'p cnf' header", last)
    if current:
        raise DimacsError("unterminated clause", last)
    if len(clauses) != header[1]:
        raise DimacsError(f"header declares {header[1]} clauses, found {len(clauses)}", last)
    try:
        # repeated literals inside a clause are legal DIMACS; collapse them
        return CnfFormula.from_ints(header[0], (list(dict.fromkeys(c)) for c in clauses))
    except FormulaError as exc:
        raise DimacsError(str(exc), last) from None


def emit_dimacs(formula: CnfFormula) -> str:
    lines = [f"p cnf {formula.num_vars} {len(formula.clauses)}"]
    lines += [" ".join(map(str, c)) + " 0" for c in formula.to_ints()]
    return "\n".join(lines) + "\n"


def tautologies(formula: CnfFormula) -> list[int]:
    """Indices of tautological clauses (flagged, not rejected, for external input)."""
    return [i for i, c in enumerate(formula.clauses) if c.is_tautology]


def clause_multiset(formula: CnfFormula) -> list[tuple[int, ...]]:
    return sorted(tuple(sorted(c)) for c in formula.to_ints())


def make_formula(num_vars: int, clauses: Sequence[Sequence[Literal]]) -> CnfFormula:
    return CnfFormula(num_vars, tuple(Clause(c) for c in clauses))

"""Weisfeiler-Leman color refinement: 1-WL on nodes, folklore 2-WL on pairs.

Color ids are ranks of signatures in a sorted table, never hashes, so two
graphs refined together on their disjoint union share one id namespace and
their histograms can be compared exactly.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import TypedGraph, disjoint_union


class WlKind(enum.Enum):
    WL1 = "wl1"
    FWL2 = "fwl2"


class WlCapError(ValueError):
    pass


FWL2_NODE_CAP = 512


def _histogram(colors) -> tuple[tuple[int, int], ...]:
    return tuple(sorted(Counter(int(c) for c in colors).items()))


@dataclass(frozen=True)
class Coloring:
    colors: tuple[int, ...]
    rounds: int
    histogram: tuple[tuple[int, int], ...]

    @property
    def num_classes(self) -> int:
        return len(self.histogram)


@dataclass(frozen=True)
class PairColoring:
    colors: np.ndarray  # (n, n) color of ordered pair (u, v)
    rounds: int
    histogram: tuple[tuple[int, int], ...]

    @property
    def num_classes(self) -> int:
        return len(self.histogram)


def _rank(keys: Sequence) -> list[int]:
    table = {k: i for i, k in enumerate(sorted(set(keys)))}
    return [table[k] for k in keys]


def refine_colors(
    adj: Sequence[Sequence[int]], initial: Sequence[int]
) -> tuple[list[int], int]:
    """Run 1-WL from ``initial`` colors to the coarsest stable refinement.

    Returns the canonical colors and the number of rounds executed,
    counting the final round that confirmed stability.
    """
    colors = _rank(list(initial))
    num = len(set(colors))
    rounds = 0
    while True:
        rounds += 1
        sigs = [(colors[v], tuple(sorted(colors[u] for u in nbrs))) for v, nbrs in enumerate(adj)]
        new = _rank(sigs)
        new_num = len(set(new))
        colors = new
        if new_num == num:
            return colors, rounds
        num = new_num


def _wl1(g: TypedGraph) -> Coloring:
    colors, rounds = refine_colors(g.adjacency, [int(t) for t in g.node_types])
    return Coloring(tuple(colors), rounds, _histogram(colors))


def _initial_pair_colors(g: TypedGraph) -> np.ndarray:
    n = g.num_nodes
    t = g.type_array
    rel = np.where(g.adjacency_matrix > 0, 1, 2)
    np.fill_diagonal(rel, 0)
    key = (t[:, None] * 2 + t[None, :]) * 3 + rel
    _, inv = np.unique(key.ravel(), return_inverse=True)
    return inv.reshape(n, n).astype(np.int64)


def _fwl2_round(colors: np.ndarray) -> np.ndarray:
    n = colors.shape[0]
    k = int(colors.max()) + 1
    # composed[u, v, w] = (c(u, w), c(w, v)) packed into one integer
    composed = colors[:, None, :] * k + colors.T[None, :, :]
    composed.sort(axis=2)
    rows = np.concatenate([colors[:, :, None], composed], axis=2).reshape(n * n, n + 1)
    return np.asarray(_rank_rows(rows), dtype=np.int64).reshape(n, n)


def _rank_rows(rows: np.ndarray) -> list[int]:
    # big-endian bytes of non-negative ints compare lexicographically like the ints
    raw = np.ascontiguousarray(rows.astype(">u8")).view(f"V{8 * rows.shape[1]}").ravel()
    return _rank(raw.tolist())


def _fwl2(g: TypedGraph, cap: int) -> PairColoring:
    if g.num_nodes > cap:
        raise WlCapError(f"FWL2 refused: {g.num_nodes} nodes exceeds cap {cap}")
    n = g.num_nodes
    colors = _initial_pair_colors(g)
    if n == 0:
        return PairColoring(colors, 0, ())
    num = len(np.unique(colors))
    rounds = 0
    while True:
        rounds += 1
        colors = _fwl2_round(colors)
        new_num = len(np.unique(colors))
        if new_num == num:
            break
        num = new_num
    return PairColoring(colors, rounds, _histogram(colors.ravel()))


def wl_refine(kind: WlKind, g: TypedGraph, *, fwl2_cap: int = FWL2_NODE_CAP):
    if kind is WlKind.WL1:
        return _wl1(g)
    return _fwl2(g, fwl2_cap)


def wl_distinguishes(
    kind: WlKind, g: TypedGraph, h: TypedGraph, *, fwl2_cap: int = FWL2_NODE_CAP
) -> bool:
    """True iff the stable colorings of ``g`` and ``h`` have different histograms.

    Refinement runs on the disjoint union so both graphs share color ids.
    """
    if g.num_nodes != h.num_nodes:
        return True
    n = g.num_nodes
    union = disjoint_union(g, h)
    if kind is WlKind.WL1:
        colors = np.asarray(_wl1(union).colors)
        return _histogram(colors[:n]) != _histogram(colors[n:])
    pair = _fwl2(union, fwl2_cap).colors
    return _histogram(pair[:n, :n].ravel()) != _histogram(pair[n:, n:].ravel())


def is_equitable(g: TypedGraph, colors: Sequence[int]) -> bool:
    """Equal colors see equal multisets of neighbour colors."""
    seen: dict[int, tuple[int, ...]] = {}
    for v, nbrs in enumerate(g.adjacency):
        sig = tuple(sorted(colors[u] for u in nbrs))
        if seen.setdefault(colors[v], sig) != sig:
            return False
    return True

import random

import pytest

from wlrni.graph import NodeType, TypedGraph

L, D = NodeType.LITERAL, NodeType.DISJUNCTION


def cycle(n: int, offset: int = 0) -> list[tuple[int, int]]:
    return [(offset + i, offset + (i + 1) % n) for i in range(n)]


@pytest.fixture
def tri_square_vs_c7() -> tuple[TypedGraph, TypedGraph]:
    """Triangle plus 4-cycle versus a 7-cycle, all nodes of one type."""
    g = TypedGraph(7, [L] * 7, cycle(3) + cycle(4, offset=3))
    h = TypedGraph(7, [L] * 7, cycle(7))
    return g, h


def random_typed_graph(rng: random.Random, n: int, p: float = 0.4) -> TypedGraph:
    types = [rng.choice((L, D)) for _ in range(n)]
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p]
    return TypedGraph(n, types, edges)


def random_permutation(rng: random.Random, n: int) -> list[int]:
    perm = list(range(n))
    rng.shuffle(perm)
    return perm

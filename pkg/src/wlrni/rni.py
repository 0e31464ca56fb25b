"""Random node initialization and the individualization lemma checker."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .graph import TypedGraph


class InitScheme(enum.Enum):
    NORMAL = "N"
    UNIFORM = "U"
    XAVIER_NORMAL = "XN"
    XAVIER_UNIFORM = "XU"


def random_columns(d: int, rni_fraction: float) -> int:
    if not 0.0 <= rni_fraction <= 1.0:
        raise ValueError(f"rni_fraction must lie in [0, 1], got {rni_fraction}")
    # absorbs float error such as 100 * 0.29 = 28.999999999999996
    return math.floor(d * rni_fraction + 1e-9)


def sample_random_part(
    num_nodes: int, num_cols: int, d: int, scheme: InitScheme, rng: np.random.Generator
) -> np.ndarray:
    """I.i.d. draws of shape (num_nodes, num_cols).

    Xavier variants use fan_in = fan_out = d.
    """
    shape = (num_nodes, num_cols)
    if scheme is InitScheme.NORMAL:
        return rng.standard_normal(shape)
    if scheme is InitScheme.UNIFORM:
        return rng.uniform(-1.0, 1.0, shape)
    if scheme is InitScheme.XAVIER_NORMAL:
        return rng.normal(0.0, math.sqrt(2.0 / (2 * d)), shape)
    bound = math.sqrt(6.0 / (2 * d))
    return rng.uniform(-bound, bound, shape)


def init_features(
    g: TypedGraph,
    d: int,
    rni_fraction: float,
    scheme: InitScheme,
    type_embedding: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Node features: random leading columns, then the node type's embedding row."""
    r = random_columns(d, rni_fraction)
    if type_embedding.shape != (2, d - r):
        raise ValueError(f"type embedding must be (2, {d - r}), got {type_embedding.shape}")
    rand = sample_random_part(g.num_nodes, r, d, scheme, rng)
    return np.concatenate([rand, type_embedding[g.type_array]], axis=1)


# -- individualization lemma -----------------------------------------------


@dataclass(frozen=True)
class LemmaParams:
    n: int
    delta: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")

    @property
    def c(self) -> int:
        return math.ceil(2.0 / self.delta)

    @property
    def k(self) -> int:
        return self.c**2 * self.n**3

    @property
    def thresholds(self) -> int:
        return self.c * self.n**2


def linearized_sigmoid(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 1.0)


def threshold_bits(params: LemmaParams, r: np.ndarray) -> np.ndarray:
    """sigma(k * r_i - (j - 1) * k / (c n^2)) for every node i and threshold j."""
    m = params.thresholds
    step = params.k // m
    s = params.k * np.asarray(r, dtype=float)[:, None] - np.arange(m)[None, :] * step
    return linearized_sigmoid(s)


def individualizes(params: LemmaParams, r: np.ndarray) -> bool:
    bits = threshold_bits(params, r)
    if not np.all((bits == 0.0) | (bits == 1.0)):
        return False
    return len({row.tobytes() for row in bits}) == len(bits)


def individualization_trial(params: LemmaParams, rng: np.random.Generator) -> bool:
    return individualizes(params, rng.uniform(0.0, 1.0, params.n))


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if trials < 1:
        raise ValueError("need at least one trial")
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class RateEstimate:
    rate: float
    successes: int
    trials: int
    low: float
    high: float


def individualization_rate(params: LemmaParams, trials: int, rng: np.random.Generator) -> RateEstimate:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    wins = sum(individualization_trial(params, rng) for _ in range(trials))
    low, high = wilson_interval(wins, trials)
    return RateEstimate(wins / trials, wins, trials, low, high)

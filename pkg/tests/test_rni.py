import math

import numpy as np
import pytest

from conftest import D, L
from wlrni.graph import TypedGraph
from wlrni.rni import (
    InitScheme,
    LemmaParams,
    individualization_rate,
    individualizes,
    init_features,
    linearized_sigmoid,
    random_columns,
    sample_random_part,
    threshold_bits,
    wilson_interval,
)


def lemma_probability(n: int, delta: float) -> float:
    """Exact success probability for n uniform draws.

    Each draw falls in one of m = c n^2 equal bins and is clear of the
    unit-width ramp with probability (cn - 1) / (cn); success needs all n
    clear and in distinct bins.
    """
    c = math.ceil(2 / delta)
    m, step = c * n * n, c * n
    distinct = math.prod((m - i) / m for i in range(n))
    return distinct * ((step - 1) / step) ** n


class TestColumns:
    @pytest.mark.parametrize(
        "d,frac,expected", [(64, 0.0, 0), (64, 0.125, 8), (64, 0.5, 32), (64, 0.875, 56), (64, 1.0, 64), (100, 0.29, 29), (3, 0.5, 1)]
    )
    def test_floor(self, d, frac, expected):
        assert random_columns(d, frac) == expected

    @pytest.mark.parametrize("frac", [-0.1, 1.01])
    def test_range(self, frac):
        with pytest.raises(ValueError):
            random_columns(8, frac)


class TestSampling:
    @pytest.mark.parametrize(
        "scheme,var",
        [
            (InitScheme.NORMAL, 1.0),
            (InitScheme.UNIFORM, 1 / 3),
            (InitScheme.XAVIER_NORMAL, 1 / 64),
            (InitScheme.XAVIER_UNIFORM, 1 / 64),
        ],
    )
    def test_moments(self, scheme, var):
        x = sample_random_part(2000, 64, 64, scheme, np.random.default_rng(0))
        assert abs(x.mean()) < 5 * math.sqrt(var / x.size)
        assert x.var() == pytest.approx(var, rel=0.02)

    def test_uniform_support(self):
        x = sample_random_part(500, 8, 8, InitScheme.UNIFORM, np.random.default_rng(1))
        assert x.min() >= -1 and x.max() <= 1
        bound = math.sqrt(6 / 16)
        y = sample_random_part(500, 8, 8, InitScheme.XAVIER_UNIFORM, np.random.default_rng(1))
        assert np.abs(y).max() <= bound

    def test_features_layout(self):
        g = TypedGraph(3, [L, D, L], [(0, 1)])
        emb = np.array([[1.0, 2.0], [3.0, 4.0]])
        f = init_features(g, 4, 0.5, InitScheme.NORMAL, emb, np.random.default_rng(0))
        assert f.shape == (3, 4)
        assert f[:, 2:].tolist() == [[1, 2], [3, 4], [1, 2]]

    def test_zero_fraction_is_deterministic(self):
        g = TypedGraph(2, [L, D], [(0, 1)])
        emb = np.eye(2, 8)
        a = init_features(g, 8, 0.0, InitScheme.NORMAL, emb, np.random.default_rng(0))
        b = init_features(g, 8, 0.0, InitScheme.NORMAL, emb, np.random.default_rng(99))
        assert np.array_equal(a, b)

    def test_embedding_shape_checked(self):
        g = TypedGraph(1, [L], [])
        with pytest.raises(ValueError):
            init_features(g, 8, 0.5, InitScheme.NORMAL, np.zeros((2, 8)), np.random.default_rng(0))

    def test_fresh_draws(self):
        g = TypedGraph(4, [L] * 4, [])
        rng = np.random.default_rng(0)
        a = init_features(g, 4, 1.0, InitScheme.NORMAL, np.zeros((2, 0)), rng)
        b = init_features(g, 4, 1.0, InitScheme.NORMAL, np.zeros((2, 0)), rng)
        assert not np.array_equal(a, b)


class TestLemma:
    def test_constants(self):
        p = LemmaParams(3, 0.5)
        assert (p.c, p.k, p.thresholds) == (4, 432, 36)
        q = LemmaParams(5, 0.2)
        assert (q.c, q.k, q.thresholds) == (10, 12500, 250)

    def test_sigmoid(self):
        assert linearized_sigmoid(np.array([-2.0, 0.0, 0.25, 1.0, 7.0])).tolist() == [0, 0, 0.25, 1, 1]

    def test_threshold_bits_match_scalar_loop(self):
        p = LemmaParams(2, 0.5)
        r = np.random.default_rng(0).uniform(size=2)
        bits = threshold_bits(p, r)
        for i in range(2):
            for j in range(p.thresholds):
                s = p.k * r[i] - j * p.k / (p.c * p.n**2)
                assert bits[i, j] == min(1.0, max(0.0, s))

    def test_individualizes_known_cases(self):
        p = LemmaParams(2, 0.5)  # c=4, 16 bins of width 1/16
        assert individualizes(p, np.array([0.1, 0.6]))
        assert not individualizes(p, np.array([0.1, 0.11]))  # same bin
        assert not individualizes(p, np.array([0.002, 0.6]))  # k r = 0.256, on a ramp

    def test_closed_form_values(self):
        assert lemma_probability(3, 0.5) == pytest.approx(0.70730, abs=1e-4)
        assert lemma_probability(5, 0.2) == pytest.approx(0.86829, abs=1e-4)

    @pytest.mark.parametrize("n,delta,trials", [(3, 0.5, 2000), (5, 0.2, 500), (2, 0.3, 2000)])
    def test_rate_matches_closed_form(self, n, delta, trials):
        est = individualization_rate(LemmaParams(n, delta), trials, np.random.default_rng(n))
        p = lemma_probability(n, delta)
        assert p > 1 - delta
        assert abs(est.rate - p) < 4 * math.sqrt(p * (1 - p) / trials)
        assert est.low <= est.rate <= est.high

    def test_rejects_bad_params(self):
        with pytest.raises(ValueError):
            LemmaParams(0, 0.5)
        with pytest.raises(ValueError):
            LemmaParams(3, 1.0)


class TestWilson:
    def test_zero_successes(self):
        z = 1.959963984540054
        low, high = wilson_interval(0, 10)
        assert low == 0.0
        assert high == pytest.approx(z * z / (10 + z * z))

    def test_all_successes(self):
        low, high = wilson_interval(10, 10)
        assert high == pytest.approx(1.0) and low == pytest.approx(1 - 0.27754, abs=1e-4)

    def test_half(self):
        low, high = wilson_interval(50, 100)
        assert (low, high) == pytest.approx((0.40383, 0.59617), abs=1e-4)

    def test_no_trials(self):
        with pytest.raises(ValueError):
            wilson_interval(0, 0)

import math
import random

import numpy as np
import pytest

from conftest import random_permutation, random_typed_graph
from wlrni.datagen import make_core_pair
from wlrni.graph import encode_cnf
from wlrni.nn import (
    Activation,
    AdamState,
    ModelConfig,
    ModelParams,
    NumericError,
    adam_step,
    cross_entropy,
    default_lr,
    forward,
    init_params,
    loss_and_grad,
    make_features,
    param_shapes,
)


def small_model(seed: int, d: int = 8, layers: int = 3, frac: float = 0.5):
    cfg = ModelConfig(layers=layers, d=d, rni_fraction=frac, seed=seed)
    return cfg, init_params(cfg, np.random.default_rng(seed))


def permuted_features(features: np.ndarray, perm: list[int]) -> np.ndarray:
    out = np.empty_like(features)
    out[perm] = features
    return out


def rebuild(batch, params: ModelParams):
    """Re-attach the current type embedding to each example's random columns."""
    d_det = params["type_embedding"].shape[1]
    out = []
    for g, f, y in batch:
        rand = f[:, : f.shape[1] - d_det]
        out.append((g, np.concatenate([rand, params["type_embedding"][g.type_array]], axis=1), y))
    return out


def mean_loss(batch, params: ModelParams, act: Activation) -> float:
    return float(np.mean([cross_entropy(forward(g, f, params, act), y) for g, f, y in rebuild(batch, params)]))


def numeric_grad(batch, params: ModelParams, act: Activation, h: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(params.flat)
    for i in range(params.flat.size):
        old = params.flat[i]
        params.flat[i] = old + h
        up = mean_loss(batch, params, act)
        params.flat[i] = old - h
        down = mean_loss(batch, params, act)
        params.flat[i] = old
        grad[i] = (up - down) / (2 * h)
    return grad


class TestParams:
    def test_shapes(self):
        shapes = param_shapes(2, 4, 3)
        assert shapes["type_embedding"] == (2, 3)
        assert shapes["l1.weight"] == (12, 4)
        assert shapes["head.w2"] == (4, 32) and shapes["head.w_out"] == (32, 2)

    def test_block_views_alias_weight(self):
        _, p = small_model(0)
        p["l0.w_neigh"][0, 0] = 123.0
        assert p["l0.weight"][8, 0] == 123.0
        assert np.shares_memory(p["l2.w_read"], p.flat)

    def test_copy_is_independent(self):
        _, p = small_model(0)
        q = p.copy()
        q.flat[0] += 1
        assert p.flat[0] != q.flat[0]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(layers=0)
        with pytest.raises(ValueError):
            ModelConfig(lr=-1.0)
        with pytest.raises(ValueError):
            ModelConfig(rni_fraction=2.0)

    @pytest.mark.parametrize(
        "frac,corrupt,lr", [(0.0, False, 1e-4), (0.125, False, 2e-4), (0.875, True, 5e-4), (0.875, False, 2e-4), (1.0, False, 5e-4), (0.3, False, 2e-4)]
    )
    def test_default_lr(self, frac, corrupt, lr):
        assert default_lr(frac, corrupt) == lr

    def test_d_det(self):
        assert ModelConfig(d=64, rni_fraction=0.125).d_det == 56
        assert ModelConfig(d=64, rni_fraction=1.0).d_det == 0


class TestGradient:
    @pytest.mark.parametrize("seed", range(10))
    def test_matches_central_differences(self, seed):
        rng = random.Random(seed)
        act = Activation.TANH if seed % 3 == 2 else Activation.ELU
        cfg, params = small_model(seed)
        nrng = np.random.default_rng(100 + seed)
        batch = []
        for label in (0, 1):
            g = random_typed_graph(rng, 6, 0.4)
            batch.append((g, make_features(g, params, cfg, nrng), label))
        _, grads = loss_and_grad(batch, params, act)
        num = numeric_grad(batch, params, act)
        err = np.linalg.norm(grads.flat - num) / max(np.linalg.norm(grads.flat) + np.linalg.norm(num), 1e-12)
        assert err < 1e-4

    def test_type_embedding_receives_gradient(self):
        cfg, params = small_model(1, frac=0.0)
        g = random_typed_graph(random.Random(1), 6)
        _, grads = loss_and_grad([(g, make_features(g, params, cfg, np.random.default_rng(0)), 1)], params)
        assert np.abs(grads["type_embedding"]).sum() > 0


class TestAdam:
    def test_first_step_closed_form(self):
        params = ModelParams({"w": (3,)}, np.array([1.0, -2.0, 0.5]))
        grads = ModelParams({"w": (3,)}, np.array([0.3, -4.0, 0.0]))
        state = AdamState.zeros(params)
        adam_step(params, grads, state, lr=0.1)
        # m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        expected = np.array([1.0 - 0.1 * 0.3 / (0.3 + 1e-8), -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 0.5])
        assert np.allclose(params.flat, expected, rtol=0, atol=1e-15)
        assert state.t == 1

    def test_two_step_scalar_trace(self):
        params = ModelParams({"w": (1,)}, np.array([0.0]))
        state = AdamState.zeros(params)
        g1, g2, lr, b1, b2, eps = 2.0, -1.0, 0.01, 0.9, 0.999, 1e-8
        for g in (g1, g2):
            adam_step(params, ModelParams({"w": (1,)}, np.array([g])), state, lr)
        m1, v1 = (1 - b1) * g1, (1 - b2) * g1 * g1
        m2, v2 = b1 * m1 + (1 - b1) * g2, b2 * v1 + (1 - b2) * g2 * g2
        x1 = -lr * (m1 / (1 - b1)) / (math.sqrt(v1 / (1 - b2)) + eps)
        x2 = x1 - lr * (m2 / (1 - b1**2)) / (math.sqrt(v2 / (1 - b2**2)) + eps)
        assert params.flat[0] == pytest.approx(x2, abs=1e-15)
        assert state.m[0] == pytest.approx(m2) and state.v[0] == pytest.approx(v2)


class TestForward:
    def test_permutation_invariance_deterministic(self):
        rng = random.Random(3)
        cfg, params = small_model(3, frac=0.0)
        for _ in range(10):
            g = random_typed_graph(rng, 9)
            perm = random_permutation(rng, 9)
            h = g.permute(perm)
            a = forward(g, make_features(g, params, cfg, np.random.default_rng(0)), params)
            b = forward(h, make_features(h, params, cfg, np.random.default_rng(0)), params)
            assert np.allclose(a, b, rtol=0, atol=1e-9)

    def test_permutation_invariance_with_random_features(self):
        rng = random.Random(4)
        cfg, params = small_model(4, frac=1.0)
        g = random_typed_graph(rng, 7)
        perm = random_permutation(rng, 7)
        f = make_features(g, params, cfg, np.random.default_rng(1))
        a = forward(g, f, params)
        b = forward(g.permute(perm), permuted_features(f, perm), params)
        assert np.allclose(a, b, rtol=0, atol=1e-9)

    def test_expectation_invariance_monte_carlo(self):
        rng = random.Random(5)
        cfg, params = small_model(5, frac=1.0)
        g = random_typed_graph(rng, 6)
        h = g.permute(random_permutation(rng, 6))
        nrng = np.random.default_rng(7)
        a = np.array([forward(g, make_features(g, params, cfg, nrng), params) for _ in range(1000)])
        b = np.array([forward(h, make_features(h, params, cfg, nrng), params) for _ in range(1000)])
        se = np.sqrt(a.var(axis=0) / len(a) + b.var(axis=0) / len(b))
        assert np.all(np.abs(a.mean(axis=0) - b.mean(axis=0)) < 3 * se)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_wl1_ceiling_without_randomness(self, n):
        cfg, params = small_model(n, d=16, layers=4, frac=0.0)
        unsat, sat = (encode_cnf(f) for f in make_core_pair(n))
        a = forward(unsat, make_features(unsat, params, cfg, np.random.default_rng(0)), params)
        b = forward(sat, make_features(sat, params, cfg, np.random.default_rng(0)), params)
        assert np.abs(a - b).max() < 1e-6

    def test_zero_network(self):
        cfg = ModelConfig(layers=2, d=4)
        params = ModelParams(param_shapes(2, 4, cfg.d_det))
        g = random_typed_graph(random.Random(0), 5)
        logits = forward(g, make_features(g, params, cfg, np.random.default_rng(0)), params)
        assert logits.tolist() == [0.0, 0.0]
        assert cross_entropy(logits, 1) == pytest.approx(math.log(2))

    def test_cross_entropy_symmetric_and_stable(self):
        assert cross_entropy(np.array([3.0, 3.0]), 0) == pytest.approx(math.log(2))
        assert cross_entropy(np.array([1000.0, 0.0]), 1) == pytest.approx(1000.0)

    def test_non_finite_reports_layer(self):
        cfg, params = small_model(0)
        params["l1.bias"][0] = np.inf
        g = random_typed_graph(random.Random(0), 5)
        with pytest.raises(NumericError) as info:
            forward(g, make_features(g, params, cfg, np.random.default_rng(0)), params)
        assert info.value.layer == 1

    def test_feature_shape_checked(self):
        _, params = small_model(0)
        g = random_typed_graph(random.Random(0), 5)
        with pytest.raises(ValueError):
            forward(g, np.zeros((5, 3)), params)


def test_loss_decreases_on_tiny_problem():
    rng = random.Random(8)
    cfg, params = small_model(8, d=8, layers=2, frac=0.0)
    graphs = [random_typed_graph(rng, 6, 0.5) for _ in range(4)]
    batch = [(g, make_features(g, params, cfg, np.random.default_rng(0)), i % 2) for i, g in enumerate(graphs)]
    state = AdamState.zeros(params)
    first, _ = loss_and_grad(batch, params)
    for _ in range(200):
        loss, grads = loss_and_grad(batch, params)
        adam_step(params, grads, state, 1e-2)
    assert loss < 0.5 * first

"""Message passing network with global readout, written directly in numpy.

Each layer computes, for every node v,

    h'_v = act(h_v W_self + (sum_{u in N(v)} h_u) W_neigh + mean_u(h_u) W_read + b)

After the last layer a coordinatewise max over nodes feeds an MLP head
(d -> d -> 32 -> 2, ELU on the two hidden layers). Gradients are derived by
hand; all parameters live in one flat float64 buffer so Adam is a handful of
vectorized operations.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import TypedGraph
from .rni import InitScheme, init_features, random_columns

HEAD_HIDDEN = 32
NUM_CLASSES = 2


class NumericError(FloatingPointError):
    def __init__(self, message: str, layer: int | str):
        super().__init__(f"layer {layer}: {message}")
        self.layer = layer


class Activation(enum.Enum):
    ELU = "elu"
    TANH = "tanh"


def _act(kind: Activation, x: np.ndarray) -> np.ndarray:
    if kind is Activation.ELU:
        return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
    return np.tanh(x)


def _act_grad(kind: Activation, pre: np.ndarray, post: np.ndarray) -> np.ndarray:
    if kind is Activation.ELU:
        return np.where(pre > 0, 1.0, post + 1.0)
    return 1.0 - post * post


# tuned learning rates keyed by randomized fraction: (EXP, CEXP)
_TUNED_LR = {
    0.0: (1e-4, 1e-4),
    0.125: (2e-4, 2e-4),
    0.5: (2e-4, 2e-4),
    0.875: (2e-4, 5e-4),
    1.0: (5e-4, 5e-4),
}


def default_lr(rni_fraction: float, corrupted: bool = False) -> float:
    """Learning rate for the nearest tabulated randomized fraction."""
    key = min(_TUNED_LR, key=lambda f: (abs(f - rni_fraction), f))
    return _TUNED_LR[key][int(corrupted)]


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 8
    d: int = 64
    activation: Activation = Activation.ELU
    rni_fraction: float = 0.0
    scheme: InitScheme = InitScheme.NORMAL
    lr: float | None = None
    epochs: int = 500
    folds: int = 10
    seed: int = 0
    corrupted_data: bool = False
    batch_size: int = 8

    def __post_init__(self):
        if self.layers < 1 or self.d < 1 or self.epochs < 0 or self.folds < 2 or self.batch_size < 1:
            raise ValueError("need layers >= 1, d >= 1, epochs >= 0, folds >= 2, batch_size >= 1")
        if self.lr is not None and self.lr <= 0:
            raise ValueError("lr must be positive")
        random_columns(self.d, self.rni_fraction)

    @property
    def learning_rate(self) -> float:
        return self.lr if self.lr is not None else default_lr(self.rni_fraction, self.corrupted_data)

    @property
    def d_det(self) -> int:
        return self.d - random_columns(self.d, self.rni_fraction)

    def to_json(self) -> dict:
        return {
            "layers": self.layers,
            "d": self.d,
            "activation": self.activation.value,
            "rni_fraction": self.rni_fraction,
            "scheme": self.scheme.value,
            "lr": self.learning_rate,
            "epochs": self.epochs,
            "folds": self.folds,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "readout": "max",
            "head_dims": [self.d, HEAD_HIDDEN, NUM_CLASSES],
        }


def param_shapes(layers: int, d: int, d_det: int) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {"type_embedding": (2, d_det)}
    for l in range(layers):
        # rows 0:d act on the node's own state, d:2d on the neighbour sum,
        # 2d:3d on the global mean; see ModelParams for the named views
        shapes[f"l{l}.weight"] = (3 * d, d)
        shapes[f"l{l}.bias"] = (d,)
    shapes.update(
        {
            "head.w1": (d, d),
            "head.b1": (d,),
            "head.w2": (d, HEAD_HIDDEN),
            "head.b2": (HEAD_HIDDEN,),
            "head.w_out": (HEAD_HIDDEN, NUM_CLASSES),
            "head.b_out": (NUM_CLASSES,),
        }
    )
    return shapes


_BLOCKS = ("w_self", "w_neigh", "w_read")


class ModelParams:
    """Named parameter arrays that are views into one flat buffer.

    ``l{i}.w_self``, ``l{i}.w_neigh`` and ``l{i}.w_read`` are row blocks of
    the stacked ``l{i}.weight``.
    """

    def __init__(self, shapes: dict[str, tuple[int, ...]], flat: np.ndarray | None = None):
        self.shapes = dict(shapes)
        size = sum(math.prod(s) for s in shapes.values())
        self.flat = np.zeros(size) if flat is None else flat
        if self.flat.shape != (size,):
            raise ValueError(f"flat buffer has {self.flat.size} entries, need {size}")
        self.arrays: dict[str, np.ndarray] = {}
        offset = 0
        for name, shape in shapes.items():
            n = math.prod(shape)
            self.arrays[name] = self.flat[offset : offset + n].reshape(shape)
            offset += n
        self.views: dict[str, np.ndarray] = {}
        for name, arr in self.arrays.items():
            if name.endswith(".weight"):
                prefix = name[: -len("weight")]
                d = arr.shape[1]
                for k, block in enumerate(_BLOCKS):
                    self.views[prefix + block] = arr[k * d : (k + 1) * d]

    @property
    def layers(self) -> int:
        return sum(1 for k in self.shapes if k.endswith(".weight"))

    @property
    def d(self) -> int:
        return self.shapes["head.w1"][0]

    def __getitem__(self, name: str) -> np.ndarray:
        arr = self.arrays.get(name)
        return self.views[name] if arr is None else arr

    def __setitem__(self, name: str, value) -> None:
        target = self[name]
        if value is not target:
            target[...] = value

    def zeros_like(self) -> ModelParams:
        return ModelParams(self.shapes)

    def copy(self) -> ModelParams:
        return ModelParams(self.shapes, self.flat.copy())


def init_params(config: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights per affine map, zero biases.

    A layer is one affine map from the concatenated (self, neighbour sum,
    mean) input, so its fan-in is 3d. The type embedding counts as a map
    from the two-way one-hot type.
    """
    params = ModelParams(param_shapes(config.layers, config.d, config.d_det))
    for arr in params.arrays.values():
        if arr.ndim == 2 and arr.size:
            bound = math.sqrt(6.0 / (arr.shape[0] + arr.shape[1]))
            arr[...] = rng.uniform(-bound, bound, arr.shape)
    return params


# -- forward / backward ----------------------------------------------------


def _check(x: np.ndarray, layer) -> None:
    if not np.isfinite(x).all():
        raise NumericError("non-finite value", layer)


def _forward(g: TypedGraph, features: np.ndarray, params: ModelParams, act: Activation):
    if g.num_nodes == 0:
        raise ValueError("cannot run on an empty graph")
    if features.shape != (g.num_nodes, params.d):
        raise ValueError(f"features must be ({g.num_nodes}, {params.d}), got {features.shape}")
    a = g.adjacency_matrix
    h = features
    layers = []
    for l in range(params.layers):
        mean = h.mean(axis=0, keepdims=True)
        stacked = np.concatenate([h, a @ h, np.broadcast_to(mean, h.shape)], axis=1)
        pre = stacked @ params[f"l{l}.weight"] + params[f"l{l}.bias"]
        _check(pre, l)
        post = _act(act, pre)
        layers.append((stacked, pre, post))
        h = post
    idx = np.argmax(h, axis=0)
    pooled = h[idx, np.arange(h.shape[1])]
    z1 = pooled @ params["head.w1"] + params["head.b1"]
    a1 = _act(Activation.ELU, z1)
    z2 = a1 @ params["head.w2"] + params["head.b2"]
    a2 = _act(Activation.ELU, z2)
    logits = a2 @ params["head.w_out"] + params["head.b_out"]
    _check(logits, "head")
    return logits, (layers, idx, pooled, z1, a1, z2, a2)


def forward(g: TypedGraph, features: np.ndarray, params: ModelParams, activation: Activation = Activation.ELU) -> np.ndarray:
    return _forward(g, features, params, activation)[0]


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def _backward(g, params, act, cache, dlogits, grads: ModelParams) -> np.ndarray:
    layers, idx, pooled, z1, a1, z2, a2 = cache
    grads["head.w_out"] += np.outer(a2, dlogits)
    grads["head.b_out"] += dlogits
    dz2 = (dlogits @ params["head.w_out"].T) * _act_grad(Activation.ELU, z2, a2)
    grads["head.w2"] += np.outer(a1, dz2)
    grads["head.b2"] += dz2
    dz1 = (dz2 @ params["head.w2"].T) * _act_grad(Activation.ELU, z1, a1)
    grads["head.w1"] += np.outer(pooled, dz1)
    grads["head.b1"] += dz1
    dpooled = dz1 @ params["head.w1"].T
    n, d = layers[-1][2].shape
    dh = np.zeros((n, d))
    dh[idx, np.arange(d)] = dpooled
    a = g.adjacency_matrix
    for l in range(len(layers) - 1, -1, -1):
        stacked, pre, post = layers[l]
        dpre = dh * _act_grad(act, pre, post)
        grads[f"l{l}.weight"] += stacked.T @ dpre
        grads[f"l{l}.bias"] += dpre.sum(axis=0)
        dstacked = dpre @ params[f"l{l}.weight"].T
        dh = dstacked[:, :d] + a @ dstacked[:, d : 2 * d] + dstacked[:, 2 * d :].sum(axis=0) / n
        _check(dh, l)
    return dh


def _route_type_grad(g: TypedGraph, dfeatures: np.ndarray, grads: ModelParams) -> None:
    d_det = grads["type_embedding"].shape[1]
    if d_det == 0:
        return
    det = dfeatures[:, dfeatures.shape[1] - d_det :]
    types = g.type_array
    for t in (0, 1):
        grads["type_embedding"][t] += det[types == t].sum(axis=0)


def loss_and_grad(
    batch: Sequence[tuple[TypedGraph, np.ndarray, int]],
    params: ModelParams,
    activation: Activation = Activation.ELU,
) -> tuple[float, ModelParams]:
    """Mean softmax cross-entropy over the batch and its exact gradient.

    Deterministic feature columns are the type embedding rows, so their
    gradient is accumulated into ``type_embedding``. The max readout routes
    each coordinate's gradient to the first node attaining the maximum.
    """
    if not batch:
        raise ValueError("empty batch")
    grads = params.zeros_like()
    total = 0.0
    for g, features, label in batch:
        loss, _ = accumulate_example(g, features, label, params, activation, grads, 1.0 / len(batch))
        total += loss
    return total / len(batch), grads


def accumulate_example(
    g: TypedGraph,
    features: np.ndarray,
    label: int,
    params: ModelParams,
    activation: Activation,
    grads: ModelParams,
    scale: float = 1.0,
) -> tuple[float, np.ndarray]:
    """Add ``scale`` times this example's loss gradient into ``grads``; return (loss, logits)."""
    logits, cache = _forward(g, features, params, activation)
    p = _softmax(logits)
    loss = cross_entropy(logits, label)
    dlogits = p.copy()
    dlogits[label] -= 1.0
    dlogits *= scale
    dfeat = _backward(g, params, activation, cache, dlogits, grads)
    _route_type_grad(g, dfeat, grads)
    return loss, logits


def cross_entropy(logits: np.ndarray, label: int) -> float:
    z = logits - logits.max()
    return float(math.log(np.exp(z).sum()) - z[label])


# -- Adam ------------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, params: ModelParams) -> AdamState:
        return cls(np.zeros_like(params.flat), np.zeros_like(params.flat))


def adam_step(
    params: ModelParams,
    grads: ModelParams,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update, applied in place to ``params``."""
    t = state.t + 1
    g = grads.flat
    state.m *= beta1
    state.m += (1 - beta1) * g
    state.v *= beta2
    state.v += (1 - beta2) * np.square(g)
    # lr * m_hat / (sqrt(v_hat) + eps), folded into two buffers
    denom = np.sqrt(state.v)
    denom *= 1.0 / math.sqrt(1 - beta2**t)
    denom += eps
    step = np.divide(state.m, denom)
    step *= lr / (1 - beta1**t)
    params.flat -= step
    state.t = t
    return params, state


# -- features --------------------------------------------------------------


def make_features(g: TypedGraph, params: ModelParams, config: ModelConfig, rng: np.random.Generator) -> np.ndarray:
    return init_features(g, config.d, config.rni_fraction, config.scheme, params["type_embedding"], rng)


def predict(g: TypedGraph, params: ModelParams, config: ModelConfig, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    logits = forward(g, make_features(g, params, config, rng), params, config.activation)
    return int(np.argmax(logits)), logits


@dataclass
class Example:
    graph: TypedGraph
    label: int
    pair_id: int
    subset: str = "exp"


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_accuracy: float
    test_accuracy: float
    test_subset_accuracy: dict[str, float] = field(default_factory=dict)
    max_pair_gap: float = 0.0

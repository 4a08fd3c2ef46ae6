"""Bias-free tanh feedforward autoencoders with untied or tied (adjoint) decoders.

A network with ``L`` layers maps ``o^0 = x`` through ``o^l = tanh(W^l o^(l-1))``
for ``l < L`` and a linear final layer ``o^L = W^L o^(L-1)``.  Tied models store
only the encoder matrices ``W^1 .. W^(L/2)``; the decoder uses their transposes in
reverse order.  Batches are ``N x n`` with one observation per row.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FAMILIES = ("1Hid", "1Sym", "3Sym", "5Sym", "7Sym")

# hidden-layer width multipliers of the squeezing size, outermost first
_PATTERNS = {
    "1Hid": (),
    "1Sym": (),
    "3Sym": (2,),
    "5Sym": (4, 2),
    "7Sym": (4, 3, 2),
}

WEIGHTS_FORMAT = "additive-ae-weights"
WEIGHTS_VERSION = 1


@dataclass(frozen=True)
class Architecture:
    encoder_sizes: tuple[int, ...]
    tied: bool
    family: str = "custom"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.encoder_sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"invalid encoder sizes {sizes}")
        object.__setattr__(self, "encoder_sizes", sizes)

    @property
    def n(self) -> int:
        return self.encoder_sizes[0]

    @property
    def m(self) -> int:
        return self.encoder_sizes[-1]

    @property
    def half_depth(self) -> int:
        return len(self.encoder_sizes) - 1

    @property
    def depth(self) -> int:
        return 2 * self.half_depth

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return self.encoder_sizes + self.encoder_sizes[-2::-1]

    @property
    def full_shapes(self) -> list[tuple[int, int]]:
        s = self.layer_sizes
        return [(s[l], s[l - 1]) for l in range(1, len(s))]

    @property
    def stored_shapes(self) -> list[tuple[int, int]]:
        shapes = self.full_shapes
        return shapes[: self.half_depth] if self.tied else shapes

    @property
    def n_params(self) -> int:
        return sum(r * c for r, c in self.stored_shapes)


def build_architecture(family: str, n: int, m: int) -> Architecture:
    """Layer sizes of a named model family for input dimension ``n`` and squeeze ``m``."""
    if family not in _PATTERNS:
        raise ValueError(f"unknown model family {family!r}; expected one of {FAMILIES}")
    if n < 1 or m < 1:
        raise ValueError("dimensions must be positive")
    sizes = (n, *(c * m for c in _PATTERNS[family]), m)
    return Architecture(sizes, tied=family != "1Hid", family=family)


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 1e-6
    init_halfwidth: float = 0.1
    seed: int = 0
    pretrain_target: str = "pre_activation"

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.init_halfwidth <= 0:
            raise ValueError("init_halfwidth must be positive")
        if self.pretrain_target not in ("pre_activation", "post_activation"):
            raise ValueError(f"unknown pretrain_target {self.pretrain_target!r}")


def regularization_weight(arch: Architecture, alpha: float) -> float:
    """``alpha / sqrt(total rows of all L layers)``; tied matrices count in both roles."""
    return alpha / np.sqrt(sum(arch.layer_sizes[1:]))


@dataclass
class WeightStack:
    W: list[np.ndarray]
    W0: list[np.ndarray]
    beta: float
    alpha: float = 1e-6
    seed: int | None = None

    def copy(self) -> "WeightStack":
        return WeightStack([w.copy() for w in self.W], [w.copy() for w in self.W0],
                           self.beta, self.alpha, self.seed)

    def anchored(self) -> "WeightStack":
        """Same weights with the regularization anchor reset to them."""
        return WeightStack([w.copy() for w in self.W], [w.copy() for w in self.W],
                           self.beta, self.alpha, self.seed)


def init_weights(arch: Architecture, cfg: TrainConfig, rng: np.random.Generator | None = None) -> WeightStack:
    """Uniform random weights on [-h, h] from a PCG64 generator seeded with ``cfg.seed``.

    Matrices are drawn in layer order, each filled row-major.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    h = cfg.init_halfwidth
    W = [rng.uniform(-h, h, size=shape) for shape in arch.stored_shapes]
    return WeightStack(W, [w.copy() for w in W], regularization_weight(arch, cfg.alpha),
                       cfg.alpha, cfg.seed)


def full_layers(weights: WeightStack | list, arch: Architecture) -> list[np.ndarray]:
    W = weights.W if isinstance(weights, WeightStack) else list(weights)
    if [w.shape for w in W] != arch.stored_shapes:
        raise ValueError(
            f"weight shapes {[w.shape for w in W]} do not match architecture {arch.stored_shapes}"
        )
    if arch.tied:
        return W + [w.T for w in reversed(W)]
    return W


def tanh(x):
    return np.tanh(x)


@dataclass
class ActivationTrace:
    o: list[np.ndarray]
    preactivations: list[np.ndarray] = field(default_factory=list)

    @property
    def output(self) -> np.ndarray:
        return self.o[-1]


def forward_layers(layers: list[np.ndarray], batch: np.ndarray, keep_pre: bool = False) -> ActivationTrace:
    o = [batch]
    pre = []
    for k, w in enumerate(layers):
        z = o[-1] @ w.T
        if k < len(layers) - 1:
            if keep_pre:
                pre.append(z)
            z = np.tanh(z)
        o.append(z)
    return ActivationTrace(o, pre)


def forward(weights: WeightStack, arch: Architecture, batch: np.ndarray,
            first_layer: np.ndarray | None = None) -> ActivationTrace:
    """Run a batch through the network; ``first_layer`` replaces the encoder's W^1."""
    batch = _as_batch(batch, arch)
    layers = full_layers(weights, arch)
    if first_layer is not None:
        if first_layer.shape != layers[0].shape:
            raise ValueError("replacement first layer has the wrong shape")
        layers = [first_layer] + layers[1:]
    return forward_layers(layers, batch, keep_pre=True)


def _as_batch(batch, arch):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.shape[1] != arch.n:
        raise ValueError(f"batch width {batch.shape[1]} != input dimension {arch.n}")
    return batch


def _regularizer(weights: WeightStack) -> float:
    return 0.5 * weights.beta * sum(float(np.sum((w - w0) ** 2)) for w, w0 in zip(weights.W, weights.W0))


def cost(weights: WeightStack, arch: Architecture, batch: np.ndarray) -> float:
    """Mean least-squares autoencoding error plus the anchored Frobenius penalty."""
    batch = _as_batch(batch, arch)
    out = forward_layers(full_layers(weights, arch), batch).output
    return 0.5 * float(np.sum((out - batch) ** 2)) / batch.shape[0] + _regularizer(weights)


def cost_and_gradient(weights: WeightStack, arch: Architecture, batch: np.ndarray):
    batch = _as_batch(batch, arch)
    N = batch.shape[0]
    layers = full_layers(weights, arch)
    o = forward_layers(layers, batch).o
    err = o[-1] - batch
    J = 0.5 * float(np.sum(err**2)) / N + _regularizer(weights)
    full = _backprop(layers, o, err)
    if arch.tied:
        L = len(layers)
        grads = [full[l] + full[L - 1 - l].T for l in range(arch.half_depth)]
    else:
        grads = full
    grads = [g + weights.beta * (w - w0) for g, w, w0 in zip(grads, weights.W, weights.W0)]
    return J, grads


def gradient(weights: WeightStack, arch: Architecture, batch: np.ndarray) -> list[np.ndarray]:
    return cost_and_gradient(weights, arch, batch)[1]


def data_gradient_full(layers: list[np.ndarray], batch: np.ndarray) -> list[np.ndarray]:
    """Data-term gradient of every layer of an untied network given explicitly."""
    batch = np.asarray(batch, dtype=np.float64)
    o = forward_layers(layers, batch).o
    return _backprop(layers, o, o[-1] - batch)


def _backprop(layers, o, err):
    N = err.shape[0]
    L = len(layers)
    grads = [None] * L
    d = err
    for l in range(L - 1, -1, -1):
        grads[l] = d.T @ o[l] / N
        if l > 0:
            # tanh' = 1 - tanh^2 from the stored activation
            d = (d @ layers[l]) * (1.0 - o[l] ** 2)
    return grads


def flatten(weights: WeightStack | list) -> np.ndarray:
    W = weights.W if isinstance(weights, WeightStack) else weights
    return np.concatenate([np.ravel(w) for w in W])


def unflatten(vector: np.ndarray, arch: Architecture) -> list[np.ndarray]:
    vector = np.asarray(vector, dtype=np.float64)
    if vector.size != arch.n_params:
        raise ValueError(f"vector has {vector.size} entries, architecture needs {arch.n_params}")
    out, start = [], 0
    for r, c in arch.stored_shapes:
        out.append(vector[start:start + r * c].reshape(r, c).copy())
        start += r * c
    return out


def make_objective(weights: WeightStack, arch: Architecture, batch: np.ndarray):
    """Cost and flat gradient as a function of the flattened stored weights."""
    batch = _as_batch(batch, arch)
    W0, beta = weights.W0, weights.beta

    def objective(x):
        ws = WeightStack(unflatten(x, arch), W0, beta)
        J, g = cost_and_gradient(ws, arch, batch)
        return J, flatten(g)

    return objective


def fold_linear(weights: WeightStack, basis) -> np.ndarray:
    """First layer ``W^1 (I - U U^T)`` acting on normalized rather than residual data."""
    W1 = weights.W[0]
    U = basis.U
    if U.shape[0] != W1.shape[1]:
        raise ValueError(f"basis dimension {U.shape[0]} != network input {W1.shape[1]}")
    return W1 - (W1 @ U) @ U.T


def weights_to_dict(weights: WeightStack, arch: Architecture) -> dict:
    return {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "family": arch.family,
        "encoder_sizes": list(arch.encoder_sizes),
        "tied": arch.tied,
        "seed": weights.seed,
        "alpha": weights.alpha,
        "beta": weights.beta,
        "weights": flatten(weights).tolist(),
        "anchor": flatten(weights.W0).tolist(),
    }


def weights_from_dict(d: dict) -> tuple[WeightStack, Architecture]:
    if d.get("format") != WEIGHTS_FORMAT:
        raise ValueError("not a weight-stack container")
    if d.get("version") != WEIGHTS_VERSION:
        raise ValueError(f"unsupported weight container version {d.get('version')}")
    arch = Architecture(tuple(d["encoder_sizes"]), bool(d["tied"]), d["family"])
    W = unflatten(np.array(d["weights"]), arch)
    W0 = unflatten(np.array(d["anchor"]), arch)
    return WeightStack(W, W0, float(d["beta"]), float(d["alpha"]), d.get("seed")), arch


def save_weights(weights: WeightStack, arch: Architecture, path: str | Path) -> None:
    Path(path).write_text(json.dumps(weights_to_dict(weights, arch)))


def load_weights(path: str | Path) -> tuple[WeightStack, Architecture]:
    return weights_from_dict(json.loads(Path(path).read_text()))

"""A small feedforward network with explicit backpropagation and plain SGD.

tanh on hidden layers, identity on the output layer. Weights are numpy
float64 arrays; there is no autograd, no optimizer state, and no batching
beyond looping — each call works on a single input vector. Networks are
treated as immutable values: sgd_step returns a new Mlp.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Raised when checkpoint bytes are corrupt, truncated, or mis-versioned."""


class DimensionError(ValueError):
    """Raised on input/gradient shape mismatches."""


@dataclass(frozen=True)
class Mlp:
    layer_sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...]   # weights[l]: (layer_sizes[l+1], layer_sizes[l])
    biases: tuple[np.ndarray, ...]    # biases[l]: (layer_sizes[l+1],)
    seed: int = 0

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]


@dataclass(frozen=True)
class Gradients:
    """Parameter gradients, shape-identical to the network they came from."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]


def init(layer_sizes: list[int] | tuple[int, ...], seed: int) -> Mlp:
    """Glorot-style uniform init in [-s, s], s = sqrt(6 / (fan_in + fan_out))."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise ValueError(f"layer_sizes must be >= 2 positive ints, got {sizes}")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-s, s, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(layer_sizes=sizes, weights=tuple(weights), biases=tuple(biases), seed=seed)


def zeros(layer_sizes: list[int] | tuple[int, ...]) -> Mlp:
    """All-zero parameters; forward of any input is the zero vector."""
    sizes = tuple(int(s) for s in layer_sizes)
    weights = tuple(
        np.zeros((fan_out, fan_in)) for fan_in, fan_out in zip(sizes[:-1], sizes[1:])
    )
    biases = tuple(np.zeros(fan_out) for fan_out in sizes[1:])
    return Mlp(layer_sizes=sizes, weights=weights, biases=biases, seed=0)


def forward(net: Mlp, x: np.ndarray | list[float]) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.in_dim,):
        raise DimensionError(f"expected input of shape ({net.in_dim},), got {x.shape}")
    a = x
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = w @ a + b
        a = z if l == last else np.tanh(z)
    return a


def _forward_trace(net: Mlp, x: np.ndarray) -> list[np.ndarray]:
    """Activations per layer (input first), needed for backprop."""
    acts = [x]
    last = len(net.weights) - 1
    a = x
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = w @ a + b
        a = z if l == last else np.tanh(z)
        acts.append(a)
    return acts


def backward(net: Mlp, x: np.ndarray | list[float], target_grad: np.ndarray | list[float]) -> Gradients:
    """Exact reverse-mode gradients of dot(output, target_grad) w.r.t. parameters."""
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(target_grad, dtype=np.float64)
    if x.shape != (net.in_dim,):
        raise DimensionError(f"expected input of shape ({net.in_dim},), got {x.shape}")
    if g.shape != (net.out_dim,):
        raise DimensionError(
            f"expected upstream grad of shape ({net.out_dim},), got {g.shape}"
        )
    acts = _forward_trace(net, x)
    dw: list[np.ndarray] = [np.empty(0)] * len(net.weights)
    db: list[np.ndarray] = [np.empty(0)] * len(net.biases)
    delta = g  # output layer is identity, so dL/dz = upstream grad
    for l in range(len(net.weights) - 1, -1, -1):
        dw[l] = np.outer(delta, acts[l])
        db[l] = delta.copy()
        if l > 0:
            # acts[l] = tanh(z_l) for hidden layers; tanh' = 1 - tanh^2
            delta = (net.weights[l].T @ delta) * (1.0 - acts[l] ** 2)
    return Gradients(weights=tuple(dw), biases=tuple(db))


def zero_gradients(net: Mlp) -> Gradients:
    return Gradients(
        weights=tuple(np.zeros_like(w) for w in net.weights),
        biases=tuple(np.zeros_like(b) for b in net.biases),
    )


def add_gradients(a: Gradients, b: Gradients, scale: float = 1.0) -> Gradients:
    return Gradients(
        weights=tuple(wa + scale * wb for wa, wb in zip(a.weights, b.weights)),
        biases=tuple(ba + scale * bb for ba, bb in zip(a.biases, b.biases)),
    )


def sgd_step(net: Mlp, grads: Gradients, lr: float) -> Mlp:
    """p <- p - lr * g elementwise; refuses non-finite gradients."""
    if lr < 0:
        raise ValueError(f"lr must be >= 0, got {lr}")
    if len(grads.weights) != len(net.weights):
        raise DimensionError("gradient/network layer count mismatch")
    for gw, gb, w, b in zip(grads.weights, grads.biases, net.weights, net.biases):
        if gw.shape != w.shape or gb.shape != b.shape:
            raise DimensionError(f"gradient shape {gw.shape} != weight shape {w.shape}")
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise ValueError("non-finite gradient; step refused")
    return Mlp(
        layer_sizes=net.layer_sizes,
        weights=tuple(w - lr * gw for w, gw in zip(net.weights, grads.weights)),
        biases=tuple(b - lr * gb for b, gb in zip(net.biases, grads.biases)),
        seed=net.seed,
    )


def save(net: Mlp) -> bytes:
    """Versioned JSON checkpoint; load(save(net)) round-trips bit-exactly."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(net.layer_sizes),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "seed": net.seed,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def load(data: bytes) -> Mlp:
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint: {exc}") from exc
    if not isinstance(payload, dict):
        raise CheckpointError("checkpoint is not a JSON object")
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version: {version!r}")
    try:
        sizes = tuple(int(s) for s in payload["layer_sizes"])
        weights = tuple(
            np.asarray(w, dtype=np.float64) for w in payload["weights"]
        )
        biases = tuple(np.asarray(b, dtype=np.float64) for b in payload["biases"])
        seed = int(payload.get("seed", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint fields: {exc}") from exc
    if len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
        raise CheckpointError("layer count does not match layer_sizes")
    for l, (w, b) in enumerate(zip(weights, biases)):
        if w.shape != (sizes[l + 1], sizes[l]) or b.shape != (sizes[l + 1],):
            raise CheckpointError(f"layer {l} shape mismatch")
    return Mlp(layer_sizes=sizes, weights=weights, biases=biases, seed=seed)

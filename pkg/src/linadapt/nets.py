"""Minimal dense-network engine: forward, analytic backprop, Adam, (de)serialization.

All math is float64. Flattening layout is fixed package-wide: layer-major,
weight matrix first (row-major, shape (fan_in, fan_out)), bias after.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("linear", "tanh")

CHECKPOINT_VERSION = 1


class ShapeError(ValueError):
    """Raised when an input or gradient does not match the network's shapes."""


def _apply(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "linear":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _apply_grad(name: str, z: np.ndarray, out: np.ndarray) -> np.ndarray:
    # derivative of the activation at z, reusing the forward output where cheap
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "tanh":
        return 1.0 - out * out
    if name == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class DenseNet:
    """Fully connected network with per-layer weight matrices (fan_in, fan_out)."""

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "relu"
    output_activation: str = "linear"

    def __post_init__(self):
        if len(self.layer_dims) < 2:
            raise ShapeError("need at least input and output dims")
        if any(d <= 0 for d in self.layer_dims):
            raise ShapeError("layer dims must be positive")
        for l, (din, dout) in enumerate(zip(self.layer_dims[:-1], self.layer_dims[1:])):
            if self.weights[l].shape != (din, dout):
                raise ShapeError(
                    f"layer {l}: weight shape {self.weights[l].shape} != ({din}, {dout})"
                )
            if self.biases[l].shape != (dout,):
                raise ShapeError(f"layer {l}: bias shape {self.biases[l].shape} != ({dout},)")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"output activation {self.output_activation!r}")

    @classmethod
    def init(
        cls,
        layer_dims: list[int],
        rng: np.random.Generator,
        hidden_activation: str = "relu",
        output_activation: str = "linear",
        final_scale: float | None = None,
    ) -> "DenseNet":
        """Uniform fan-in init (+-1/sqrt(fan_in)); optional small final layer."""
        weights, biases = [], []
        n_layers = len(layer_dims) - 1
        for l in range(n_layers):
            din, dout = layer_dims[l], layer_dims[l + 1]
            bound = 1.0 / np.sqrt(din)
            if final_scale is not None and l == n_layers - 1:
                bound = final_scale
            weights.append(rng.uniform(-bound, bound, size=(din, dout)))
            biases.append(rng.uniform(-bound, bound, size=dout))
        return cls(list(layer_dims), weights, biases, hidden_activation, output_activation)

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    def param_count(self) -> int:
        return sum(
            din * dout + dout for din, dout in zip(self.layer_dims[:-1], self.layer_dims[1:])
        )

    def copy(self) -> "DenseNet":
        return DenseNet(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.hidden_activation,
            self.output_activation,
        )

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())


@dataclass
class GradientBundle:
    """Per-parameter gradient arrays mirroring a DenseNet's shapes."""

    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]

    @classmethod
    def zeros_like(cls, net: DenseNet) -> "GradientBundle":
        return cls(
            [np.zeros_like(w) for w in net.weights],
            [np.zeros_like(b) for b in net.biases],
        )

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weight_grads, self.bias_grads):
            out.append(w)
            out.append(b)
        return out

    def add_(self, other: "GradientBundle") -> None:
        for a, b in zip(self.weight_grads, other.weight_grads):
            a += b
        for a, b in zip(self.bias_grads, other.bias_grads):
            a += b

    def scale_(self, c: float) -> None:
        for a in self.arrays():
            a *= c


@dataclass
class ForwardCache:
    """Activations saved during a batched forward pass, consumed by backprop."""

    inputs: np.ndarray  # (B, in_dim)
    pre: list[np.ndarray]  # per-layer pre-activations
    post: list[np.ndarray]  # per-layer activations


def forward(net: DenseNet, x: np.ndarray) -> np.ndarray:
    """Evaluate the net on a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.in_dim:
        raise ShapeError(f"input shape {x.shape} incompatible with in_dim {net.in_dim}")
    return forward_batch(net, x[None, :])[0][0]


def forward_batch(net: DenseNet, X: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Evaluate the net on a (B, in_dim) batch; returns output and cache."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.in_dim:
        raise ShapeError(f"batch shape {X.shape} incompatible with in_dim {net.in_dim}")
    pre, post = [], []
    h = X
    last = net.n_layers - 1
    for l in range(net.n_layers):
        z = h @ net.weights[l] + net.biases[l]
        act = net.output_activation if l == last else net.hidden_activation
        h = _apply(act, z)
        pre.append(z)
        post.append(h)
    return h, ForwardCache(X, pre, post)


def backward(net: DenseNet, x: np.ndarray, output_grad: np.ndarray) -> GradientBundle:
    """Gradient of <output_grad, forward(net, x)> w.r.t. every parameter."""
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(output_grad, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.in_dim:
        raise ShapeError(f"input shape {x.shape}")
    if g.ndim != 1 or g.shape[0] != net.out_dim:
        raise ShapeError(f"output_grad shape {g.shape} != ({net.out_dim},)")
    _, cache = forward_batch(net, x[None, :])
    grads, _ = backward_batch(net, cache, g[None, :])
    return grads


def backward_batch(
    net: DenseNet, cache: ForwardCache, output_grad: np.ndarray
) -> tuple[GradientBundle, np.ndarray]:
    """Backprop a (B, out_dim) output gradient; returns (grads, input gradient).

    Gradients are summed over the batch.
    """
    G = np.asarray(output_grad, dtype=np.float64)
    if G.shape != cache.post[-1].shape:
        raise ShapeError(f"output_grad shape {G.shape} != {cache.post[-1].shape}")
    weight_grads: list[np.ndarray] = [None] * net.n_layers  # type: ignore[list-item]
    bias_grads: list[np.ndarray] = [None] * net.n_layers  # type: ignore[list-item]
    last = net.n_layers - 1
    delta = G
    for l in range(last, -1, -1):
        act = net.output_activation if l == last else net.hidden_activation
        delta = delta * _apply_grad(act, cache.pre[l], cache.post[l])
        below = cache.inputs if l == 0 else cache.post[l - 1]
        weight_grads[l] = below.T @ delta
        bias_grads[l] = delta.sum(axis=0)
        delta = delta @ net.weights[l].T
    return GradientBundle(weight_grads, bias_grads), delta


@dataclass
class AdamState:
    """Adam moments for a list of parameter arrays."""

    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[np.ndarray], learning_rate: float = 3e-4, **kw) -> "AdamState":
        return cls(
            [np.zeros_like(p) for p in params],
            [np.zeros_like(p) for p in params],
            learning_rate=learning_rate,
            **kw,
        )

    @classmethod
    def for_net(cls, net: DenseNet, learning_rate: float = 3e-4, **kw) -> "AdamState":
        return cls.for_params(net.params(), learning_rate=learning_rate, **kw)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """In-place bias-corrected Adam update."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeError("params/grads/state length mismatch")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"param shape {p.shape} != grad shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient; refusing to step")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)


def flatten_params(net: DenseNet) -> np.ndarray:
    """Flat parameter vector: per layer, row-major weight matrix then bias."""
    chunks = []
    for w, b in zip(net.weights, net.biases):
        chunks.append(w.ravel())
        chunks.append(b)
    return np.concatenate(chunks)


def unflatten_params(
    flat: np.ndarray,
    layer_dims: list[int],
    hidden_activation: str = "relu",
    output_activation: str = "linear",
) -> DenseNet:
    """Inverse of flatten_params for the given architecture."""
    flat = np.asarray(flat, dtype=np.float64)
    expected = sum(din * dout + dout for din, dout in zip(layer_dims[:-1], layer_dims[1:]))
    if flat.shape != (expected,):
        raise ShapeError(f"flat length {flat.shape} != ({expected},)")
    weights, biases = [], []
    i = 0
    for din, dout in zip(layer_dims[:-1], layer_dims[1:]):
        weights.append(flat[i : i + din * dout].reshape(din, dout).copy())
        i += din * dout
        biases.append(flat[i : i + dout].copy())
        i += dout
    return DenseNet(list(layer_dims), weights, biases, hidden_activation, output_activation)


def net_to_dict(net: DenseNet) -> dict:
    return {
        "layer_dims": list(net.layer_dims),
        "hidden_activation": net.hidden_activation,
        "output_activation": net.output_activation,
    }


def save_checkpoint(
    path,
    nets: dict[str, DenseNet],
    extra: dict | None = None,
    arrays: dict[str, np.ndarray] | None = None,
) -> None:
    """Self-describing .npz container: flat parameter vectors plus a JSON header.

    arrays carries auxiliary state (e.g. optimizer moments) verbatim.
    """
    meta = {
        "version": CHECKPOINT_VERSION,
        "nets": {name: net_to_dict(net) for name, net in nets.items()},
        "extra": extra or {},
    }
    payload = {f"params/{name}": flatten_params(net) for name, net in nets.items()}
    for name, arr in (arrays or {}).items():
        payload[f"aux/{name}"] = np.asarray(arr)
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **payload)


def load_checkpoint(path) -> tuple[dict[str, DenseNet], dict, dict[str, np.ndarray]]:
    """Load a checkpoint; returns (nets, extra, aux arrays)."""
    try:
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
            nets = {}
            for name, desc in meta["nets"].items():
                nets[name] = unflatten_params(
                    data[f"params/{name}"],
                    desc["layer_dims"],
                    desc["hidden_activation"],
                    desc["output_activation"],
                )
            aux = {
                name[len("aux/") :]: data[name].copy()
                for name in data.files
                if name.startswith("aux/")
            }
    except (KeyError, json.JSONDecodeError, OSError) as exc:
        raise ValueError(f"corrupt checkpoint {path}: {exc}") from exc
    return nets, meta["extra"], aux

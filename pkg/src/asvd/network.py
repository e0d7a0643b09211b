"""Minimal dense feed-forward network with exact forward/backward passes.

Layers are bias-free linear maps followed by an elementwise activation
(identity, tanh, or relu), so every parameter is a weight-matrix entry and
falls under the subspace machinery. Batches are row-major: inputs ``X`` have
shape (N, d_in) and a layer computes ``Z = X @ W.T``.

The batch loss is the mean over samples (sum over output components for the
squared error), which keeps gradient magnitudes batch-size invariant and
gives the single-layer MSE gradient the closed form ``(2/N) (W X - T) X^T``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix

__all__ = [
    "ACTIVATIONS",
    "CheckpointFormatError",
    "LOSS_KINDS",
    "LayerSpec",
    "NetworkState",
    "backward",
    "finite_difference_gradient",
    "flatten",
    "forward",
    "forward_batch",
    "load_checkpoint",
    "loss_and_gradients",
    "loss_value",
    "save_checkpoint",
    "unflatten",
]

ACTIVATIONS = ("identity", "tanh", "relu")
LOSS_KINDS = ("softmax_cross_entropy", "mean_squared_error")

_ACTIVATION_TAGS = {"identity": 0, "tanh": 1, "relu": 2}
_TAG_ACTIVATIONS = {v: k for k, v in _ACTIVATION_TAGS.items()}

_MAGIC = b"ASVD"
_FORMAT_VERSION = 1


class CheckpointFormatError(ValueError):
    """Raised when checkpoint bytes do not match the documented format."""


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: str = "identity"

    def __post_init__(self) -> None:
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("layer dimensions must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


def _apply_activation(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activation_derivative(name: str, z: np.ndarray) -> np.ndarray | None:
    # None means the derivative is identically one.
    if name == "identity":
        return None
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    return (z > 0.0).astype(np.float64)


class NetworkState:
    """Ordered stack of (weight matrix, layer spec) pairs.

    Single-owner during training; concurrent read-only use is safe once
    training has finished.
    """

    def __init__(self, weights: list[np.ndarray], specs: list[LayerSpec]) -> None:
        if len(weights) != len(specs) or not weights:
            raise ValueError("need one weight matrix per layer spec, at least one layer")
        checked = []
        for i, (w, spec) in enumerate(zip(weights, specs)):
            w = as_matrix(w, f"weights[{i}]").copy()
            if w.shape != (spec.output_dim, spec.input_dim):
                raise ValueError(
                    f"layer {i} weight shape {w.shape} does not match spec "
                    f"({spec.output_dim}, {spec.input_dim})"
                )
            checked.append(w)
        for i in range(1, len(specs)):
            if specs[i].input_dim != specs[i - 1].output_dim:
                raise ValueError(f"layer {i} input dim does not match layer {i-1} output dim")
        self.weights = checked
        self.specs = list(specs)

    @classmethod
    def initialize(
        cls,
        dims: list[int],
        rng: np.random.Generator,
        hidden_activation: str = "tanh",
        output_activation: str = "identity",
        init_scale: float = 1.0,
    ) -> "NetworkState":
        """Seeded Gaussian init scaled by ``init_scale / sqrt(fan_in)``.

        ``dims`` lists layer widths [d_in, h_1, ..., d_out]; hidden layers use
        ``hidden_activation`` and the last layer ``output_activation``.
        """
        if len(dims) < 2:
            raise ValueError("dims must list at least input and output widths")
        weights, specs = [], []
        for i in range(len(dims) - 1):
            act = output_activation if i == len(dims) - 2 else hidden_activation
            w = rng.standard_normal((dims[i + 1], dims[i])) * (init_scale / np.sqrt(dims[i]))
            weights.append(w)
            specs.append(LayerSpec(dims[i], dims[i + 1], act))
        return cls(weights, specs)

    @property
    def layer_count(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.specs[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.specs[-1].output_dim

    def parameter_count(self) -> int:
        return sum(w.size for w in self.weights)

    def copy(self) -> "NetworkState":
        return NetworkState([w.copy() for w in self.weights], list(self.specs))


def forward_batch(
    net: NetworkState, x: np.ndarray
) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Batched forward pass.

    Returns ``(predictions, capture)`` where capture[l] = (layer inputs X^l,
    pre-activation linear outputs Y^l = X^l W_l^T), both (N, dim) arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"batch shape {x.shape} does not match input dim {net.input_dim}")
    capture = []
    a = x
    for w, spec in zip(net.weights, net.specs):
        z = a @ w.T
        capture.append((a, z))
        a = _apply_activation(spec.activation, z)
    if not np.all(np.isfinite(a)):
        raise FloatingPointError("forward pass produced non-finite outputs")
    return a, capture


def forward(net: NetworkState, x: np.ndarray) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Single-sample forward pass; see forward_batch."""
    x = np.asarray(x, dtype=np.float64).ravel()
    pred, capture = forward_batch(net, x[None, :])
    return pred[0], [(xl[0], yl[0]) for xl, yl in capture]


def _check_batch(net: NetworkState, batch, loss_kind: str):
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    x, targets = batch
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("batch inputs must be a nonempty (N, d_in) array")
    if loss_kind == "softmax_cross_entropy":
        targets = np.asarray(targets)
        if targets.shape != (x.shape[0],):
            raise ValueError("classification targets must be (N,) integer labels")
        if targets.min() < 0 or targets.max() >= net.output_dim:
            raise ValueError("class labels out of range for the output layer")
        targets = targets.astype(np.int64)
    else:
        targets = np.asarray(targets, dtype=np.float64)
        if targets.shape != (x.shape[0], net.output_dim):
            raise ValueError("regression targets must be (N, d_out)")
    return x, targets


def _loss_and_output_delta(
    pred: np.ndarray, targets: np.ndarray, loss_kind: str
) -> tuple[float, np.ndarray]:
    n = pred.shape[0]
    if loss_kind == "softmax_cross_entropy":
        shifted = pred - pred.max(axis=1, keepdims=True)
        logsumexp = np.log(np.exp(shifted).sum(axis=1))
        loss = float(np.mean(logsumexp - shifted[np.arange(n), targets]))
        delta = np.exp(shifted)
        delta /= delta.sum(axis=1, keepdims=True)
        delta[np.arange(n), targets] -= 1.0
        return loss, delta / n
    diff = pred - targets
    return float(np.sum(diff * diff) / n), (2.0 / n) * diff


def loss_and_gradients(
    net: NetworkState, batch, loss_kind: str
) -> tuple[float, list[np.ndarray]]:
    """Mean batch loss and its exact per-layer weight gradients."""
    x, targets = _check_batch(net, batch, loss_kind)
    pred, capture = forward_batch(net, x)
    loss, delta = _loss_and_output_delta(pred, targets, loss_kind)
    grads: list[np.ndarray | None] = [None] * net.layer_count
    for l in range(net.layer_count - 1, -1, -1):
        inputs, z = capture[l]
        deriv = _activation_derivative(net.specs[l].activation, z)
        dz = delta if deriv is None else delta * deriv
        grads[l] = dz.T @ inputs
        if l > 0:
            delta = dz @ net.weights[l]
    return loss, grads  # type: ignore[return-value]


def loss_value(net: NetworkState, batch, loss_kind: str) -> float:
    x, targets = _check_batch(net, batch, loss_kind)
    pred, _ = forward_batch(net, x)
    loss, _ = _loss_and_output_delta(pred, targets, loss_kind)
    return loss


def backward(net: NetworkState, batch, loss_kind: str) -> list[np.ndarray]:
    """Exact analytic gradients of the mean batch loss, one matrix per layer."""
    return loss_and_gradients(net, batch, loss_kind)[1]


def finite_difference_gradient(
    net: NetworkState, batch, loss_kind: str, epsilon: float = 1e-5
) -> list[np.ndarray]:
    """Central-difference gradient oracle, ``(L(t+e) - L(t-e)) / 2e`` per
    coordinate. Independent of the analytic backward pass."""
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must be in [1e-7, 1e-3], got {epsilon}")
    theta = flatten(net)
    grad = np.empty_like(theta)
    for i in range(theta.shape[0]):
        bumped = theta.copy()
        bumped[i] = theta[i] + epsilon
        loss_plus = loss_value(unflatten(net, bumped), batch, loss_kind)
        bumped[i] = theta[i] - epsilon
        loss_minus = loss_value(unflatten(net, bumped), batch, loss_kind)
        grad[i] = (loss_plus - loss_minus) / (2.0 * epsilon)
    out, offset = [], 0
    for w in net.weights:
        out.append(grad[offset : offset + w.size].reshape(w.shape))
        offset += w.size
    return out


def flatten(net: NetworkState) -> np.ndarray:
    """Parameter vector: per-layer row-major vecs concatenated in layer order."""
    return np.concatenate([w.ravel() for w in net.weights])


def unflatten(net: NetworkState, theta: np.ndarray) -> NetworkState:
    """New NetworkState with the same specs and weights taken from ``theta``.

    Exact inverse of flatten: ``unflatten(net, flatten(net))`` reproduces the
    weights bit for bit.
    """
    theta = np.asarray(theta, dtype=np.float64).ravel()
    total = sum(w.size for w in net.weights)
    if theta.shape[0] != total:
        raise ValueError(f"parameter vector length {theta.shape[0]} != {total}")
    weights, offset = [], 0
    for w in net.weights:
        weights.append(theta[offset : offset + w.size].reshape(w.shape).copy())
        offset += w.size
    return NetworkState(weights, list(net.specs))


def save_checkpoint(net: NetworkState, path) -> None:
    """Bit-exact binary checkpoint.

    Layout: magic "ASVD", u32 format version, u32 layer count, then per layer
    u32 rows, u32 cols, u8 activation tag, rows*cols little-endian float64.
    """
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _FORMAT_VERSION, net.layer_count))
        for w, spec in zip(net.weights, net.specs):
            fh.write(
                struct.pack(
                    "<IIB", w.shape[0], w.shape[1], _ACTIVATION_TAGS[spec.activation]
                )
            )
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())


def _read_exact(fh, count: int) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise CheckpointFormatError("checkpoint truncated")
    return data


def load_checkpoint(path) -> NetworkState:
    """Load a checkpoint written by save_checkpoint; rejects unknown formats."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != _MAGIC:
            raise CheckpointFormatError("bad magic bytes, not an ASVD checkpoint")
        version, layer_count = struct.unpack("<II", _read_exact(fh, 8))
        if version != _FORMAT_VERSION:
            raise CheckpointFormatError(f"unknown checkpoint format version {version}")
        if layer_count < 1:
            raise CheckpointFormatError("checkpoint has no layers")
        weights, specs = [], []
        for _ in range(layer_count):
            rows, cols, tag = struct.unpack("<IIB", _read_exact(fh, 9))
            if tag not in _TAG_ACTIVATIONS:
                raise CheckpointFormatError(f"unknown activation tag {tag}")
            if rows < 1 or cols < 1:
                raise CheckpointFormatError("non-positive layer dimensions")
            data = np.frombuffer(_read_exact(fh, rows * cols * 8), dtype="<f8")
            weights.append(data.reshape(rows, cols).astype(np.float64))
            specs.append(LayerSpec(cols, rows, _TAG_ACTIVATIONS[tag]))
        if fh.read(1):
            raise CheckpointFormatError("trailing bytes after last layer")
    return NetworkState(weights, specs)

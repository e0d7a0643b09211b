"""Per-layer importance from input/output activation similarity.

A layer that mostly passes its input through unchanged (mean cosine between
inputs and linear outputs near one) is an information conduit whose directions
should be preserved; a layer that strongly transforms its input tolerates more
aggressive updates. Scores are normalized to average one across layers so they
interpolate the retention ratio directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import ZERO_NORM_CUTOFF, cosine_similarity
from .network import NetworkState, forward_batch

__all__ = [
    "ActivationBatch",
    "ImportanceProfile",
    "layer_importance",
    "normalize",
    "profile_for_task",
    "uniform_profile",
]


@dataclass
class ActivationBatch:
    """Paired layer inputs X_i and linear outputs Y_i = W X_i for one layer."""

    layer_index: int
    inputs: np.ndarray  # (N, d_in)
    outputs: np.ndarray  # (N, d_out)

    def __post_init__(self) -> None:
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.outputs = np.asarray(self.outputs, dtype=np.float64)
        if self.inputs.ndim != 2 or self.outputs.ndim != 2:
            raise ValueError("inputs and outputs must be (N, dim) arrays")
        if self.inputs.shape[0] != self.outputs.shape[0] or self.inputs.shape[0] < 1:
            raise ValueError("inputs and outputs must pair up, N >= 1")


def layer_importance(batch: ActivationBatch) -> float:
    """Mean cosine similarity between paired inputs and linear outputs.

    Undefined for non-square layers (the vectors live in different spaces);
    callers substitute the neutral score 1.0 for those.
    """
    if batch.inputs.shape[1] != batch.outputs.shape[1]:
        raise ValueError(
            "layer importance is only defined for square layers "
            f"(got dims {batch.inputs.shape[1]} -> {batch.outputs.shape[1]})"
        )
    return float(
        np.mean(
            [cosine_similarity(x, y) for x, y in zip(batch.inputs, batch.outputs)]
        )
    )


@dataclass
class ImportanceProfile:
    """Raw and mean-one-normalized per-layer importance scores."""

    raw: np.ndarray
    normalized: np.ndarray
    used_fallback: bool = field(default=False)

    def __post_init__(self) -> None:
        self.raw = np.asarray(self.raw, dtype=np.float64)
        self.normalized = np.asarray(self.normalized, dtype=np.float64)
        if self.raw.shape != self.normalized.shape or self.raw.ndim != 1:
            raise ValueError("raw and normalized must be 1-D vectors of equal length")

    @property
    def layer_count(self) -> int:
        return int(self.raw.shape[0])


def uniform_profile(layer_count: int) -> ImportanceProfile:
    """All-ones profile; the documented cold-start rule for the first task."""
    if layer_count < 1:
        raise ValueError("layer_count must be >= 1")
    ones = np.ones(layer_count)
    return ImportanceProfile(raw=ones.copy(), normalized=ones)


def normalize(raw) -> ImportanceProfile:
    """Scale raw scores so they average exactly one across layers.

    All-zero input yields the uniform profile. A non-positive sum (possible
    because cosines can be negative) would flip signs meaninglessly, so it
    falls back to the uniform profile with ``used_fallback`` set so run
    reports can flag it.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 1 or raw.shape[0] < 1:
        raise ValueError("raw scores must be a nonempty 1-D vector")
    total = float(raw.sum())
    count = raw.shape[0]
    if np.all(raw == 0.0):
        return ImportanceProfile(raw=raw.copy(), normalized=np.ones(count))
    if total <= ZERO_NORM_CUTOFF:
        return ImportanceProfile(
            raw=raw.copy(), normalized=np.ones(count), used_fallback=True
        )
    return ImportanceProfile(raw=raw.copy(), normalized=raw * (count / total))


def profile_for_task(
    net: NetworkState, inputs, sample_count: int
) -> ImportanceProfile:
    """Importance profile from ``sample_count`` forward passes.

    Captures per-layer inputs and linear outputs, scores every square layer by
    mean cosine, substitutes the neutral 1.0 for non-square layers, and
    normalizes. Deterministic given the weights and the sample array.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2:
        raise ValueError("inputs must be a (N, d_in) array")
    if inputs.shape[0] < sample_count:
        raise ValueError(
            f"need at least {sample_count} samples, got {inputs.shape[0]}"
        )
    _, capture = forward_batch(net, inputs[:sample_count])
    raw = np.empty(net.layer_count)
    for l, (x, y) in enumerate(capture):
        if x.shape[1] != y.shape[1]:
            raw[l] = 1.0
            continue
        raw[l] = _mean_cosine(x, y)
    return normalize(raw)


def _mean_cosine(x: np.ndarray, y: np.ndarray) -> float:
    # Vectorized row-wise cosine matching cosine_similarity's zero-norm rule.
    nx = np.linalg.norm(x, axis=1)
    ny = np.linalg.norm(y, axis=1)
    dots = np.einsum("ij,ij->i", x, y)
    ok = (nx >= ZERO_NORM_CUTOFF) & (ny >= ZERO_NORM_CUTOFF)
    cos = np.zeros(x.shape[0])
    cos[ok] = np.clip(dots[ok] / (nx[ok] * ny[ok]), -1.0, 1.0)
    return float(cos.mean())

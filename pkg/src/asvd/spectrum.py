"""Weight-spectrum diagnostics: singular-value statistics, Marchenko-Pastur
noise thresholding, low-rank pruning interventions, and per-direction
activation norms.

The Marchenko-Pastur threshold ``sigma * |sqrt(m) - sqrt(n)|`` is the lower
singular-value edge of an m x n iid-noise matrix in the large-dimension limit;
singular values below it are classified as noise. Trained weights violate the
iid assumption, so the expected outcome on them is "everything above the
threshold" -- which the classifier reports as a diagnostic note rather than an
error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import svd
from .network import NetworkState, forward_batch
from .tasks import TaskData, evaluate

__all__ = [
    "PruneSpec",
    "SpectrumStats",
    "classify_noise_fraction",
    "direction_activation_norms",
    "estimate_noise_sigma",
    "marchenko_pastur_threshold",
    "prune_low_rank",
    "spectrum_stats",
]


@dataclass(frozen=True)
class SpectrumStats:
    layer_index: int
    rows: int
    cols: int
    sigma_min: float
    sigma_max: float
    sigma_mean: float
    sigma_median: float


def spectrum_stats(net: NetworkState) -> list[SpectrumStats]:
    """Descriptive singular-value statistics for every weight matrix."""
    stats = []
    for l, w in enumerate(net.weights):
        sigma = svd(w).sigma
        stats.append(
            SpectrumStats(
                layer_index=l,
                rows=w.shape[0],
                cols=w.shape[1],
                sigma_min=float(sigma.min()),
                sigma_max=float(sigma.max()),
                sigma_mean=float(sigma.mean()),
                sigma_median=float(np.median(sigma)),
            )
        )
    return stats


def marchenko_pastur_threshold(rows: int, cols: int, noise_sigma: float) -> float:
    """Lower singular-value edge ``noise_sigma * |sqrt(m) - sqrt(n)|``."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    if noise_sigma <= 0:
        raise ValueError("noise_sigma must be positive")
    return float(noise_sigma * abs(np.sqrt(rows) - np.sqrt(cols)))


def estimate_noise_sigma(sigma_values, rows: int, cols: int) -> float:
    """Median-based noise scale estimate, median(sigma) / sqrt(max(m, n))."""
    sigma_values = np.asarray(sigma_values, dtype=np.float64)
    if sigma_values.size < 1:
        raise ValueError("need at least one singular value")
    return float(np.median(sigma_values) / np.sqrt(max(rows, cols)))


def classify_noise_fraction(
    sigma_values, rows: int, cols: int, noise_sigma: float | None = None, scale: float = 1.0
) -> tuple[float, float, str | None]:
    """Fraction of singular values above the (scaled) MP threshold.

    Returns (fraction_above, threshold, note); the note flags the iid-violation
    signature of trained matrices (>= 99% of values classified as signal).
    """
    sigma_values = np.asarray(sigma_values, dtype=np.float64)
    if noise_sigma is None:
        noise_sigma = estimate_noise_sigma(sigma_values, rows, cols)
    threshold = scale * marchenko_pastur_threshold(rows, cols, noise_sigma)
    fraction = float(np.mean(sigma_values > threshold))
    note = None
    if fraction >= 0.99:
        note = (
            "matrix classified as effectively full-rank; the iid assumption "
            "behind the threshold likely does not hold"
        )
    return fraction, threshold, note


@dataclass(frozen=True)
class PruneSpec:
    """Which layers to truncate and how many top singular directions to keep.

    Exactly one of ``fraction`` (of each layer's direction count, in (0, 1])
    or ``count`` must be given. ``layers=None`` selects every layer.
    """

    layers: tuple[int, ...] | None = None
    fraction: float | None = None
    count: int | None = None

    def __post_init__(self) -> None:
        if (self.fraction is None) == (self.count is None):
            raise ValueError("specify exactly one of fraction or count")
        if self.fraction is not None and not 0.0 < self.fraction <= 1.0:
            raise ValueError("fraction must be in (0, 1]")
        if self.count is not None and self.count < 1:
            raise ValueError("count must be >= 1")

    def retained(self, rank_limit: int) -> int:
        if self.count is not None:
            return min(self.count, rank_limit)
        return max(1, min(rank_limit, int(round(self.fraction * rank_limit))))


def prune_low_rank(
    net: NetworkState, spec: PruneSpec, tasks: list[TaskData]
) -> tuple[NetworkState, list[float]]:
    """Replace selected layers by top-k truncated SVD reconstructions.

    Pure transformation: the input network is untouched. Returns the pruned
    copy and per-task metric deltas (after - before) on the given tasks.
    """
    selected = set(range(net.layer_count)) if spec.layers is None else set(spec.layers)
    for l in selected:
        if not 0 <= l < net.layer_count:
            raise ValueError(f"layer index {l} out of range")
    before = [evaluate(net, task) for task in tasks]
    pruned = net.copy()
    for l in selected:
        f = svd(pruned.weights[l])
        k = spec.retained(f.rank_limit)
        pruned.weights[l] = f.truncate(k).reconstruct()
    after = [evaluate(pruned, task) for task in tasks]
    return pruned, [a - b for a, b in zip(after, before)]


def direction_activation_norms(
    net: NetworkState, layer_index: int, batch_inputs
) -> np.ndarray:
    """Mean |v_i^T x| per singular direction of one layer, over a batch.

    ``x`` are the layer's inputs captured from forward passes of the given
    network inputs; index i follows descending sigma. Since each u_i is unit
    length, |u_i v_i^T x| = |v_i^T x|, so this measures how strongly the data
    excites each direction regardless of its singular value. Sign flips of
    singular vectors do not change the result.
    """
    if not 0 <= layer_index < net.layer_count:
        raise ValueError(f"layer index {layer_index} out of range")
    batch_inputs = np.asarray(batch_inputs, dtype=np.float64)
    _, capture = forward_batch(net, batch_inputs)
    layer_inputs = capture[layer_index][0]
    f = svd(net.weights[layer_index])
    return np.mean(np.abs(layer_inputs @ f.v), axis=0)

"""High/low singular-subspace partitioning and orthogonal gradient projection.

A weight matrix's SVD is split at an adaptive rank into a high subspace
(largest singular values, protected) and a low subspace (free to change).
Gradients are projected so their bilinear high-subspace component vanishes:

    G_proj = G - U_h U_h^T G V_h V_h^T

which drives the interference norm |U_h^T G V_h|_F to zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import SVDFactorization, as_matrix

__all__ = [
    "RetentionConfig",
    "SubspacePartition",
    "allocate_rank",
    "interference",
    "partition",
    "project_gradient",
    "rank_count",
]


@dataclass(frozen=True)
class RetentionConfig:
    """Retention ratio bounds: mrr for the least important layer, trr for
    layers at (or above) average importance."""

    mrr: float = 0.1
    trr: float = 0.8

    def __post_init__(self) -> None:
        if not (0.0 <= self.mrr <= self.trr <= 1.0):
            raise ValueError(
                f"need 0 <= mrr <= trr <= 1, got mrr={self.mrr} trr={self.trr}"
            )

    def halved(self) -> "RetentionConfig":
        return RetentionConfig(mrr=self.mrr / 2.0, trr=self.trr / 2.0)


def allocate_rank(importance: float, config: RetentionConfig) -> float:
    """Retained fraction ``mrr + importance * (trr - mrr)``, clamped to [0, 1].

    Normalized importance averages one across layers but individual layers can
    exceed one, which can push the interpolation above 1; clamping keeps the
    result a valid fraction.
    """
    if not np.isfinite(importance) or importance < 0.0:
        raise ValueError(f"importance must be finite and >= 0, got {importance}")
    frac = config.mrr + importance * (config.trr - config.mrr)
    return float(min(1.0, max(0.0, frac)))


def rank_count(fraction: float, k: int) -> int:
    """Map a retained fraction to an integer direction count.

    Round-half-to-even on ``fraction * k``, clamped to [0, k].
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    return int(min(k, max(0, round(fraction * k))))


@dataclass(frozen=True)
class SubspacePartition:
    """Disjoint column split of an SVD's U and V at index ``r_count``.

    ``u_high``/``v_high`` hold the top ``r_count`` singular directions,
    ``u_low``/``v_low`` the rest.
    """

    u_high: np.ndarray
    v_high: np.ndarray
    u_low: np.ndarray
    v_low: np.ndarray
    retained_fraction: float
    r_count: int

    @property
    def d_out(self) -> int:
        return int(self.u_high.shape[0])

    @property
    def d_in(self) -> int:
        return int(self.v_high.shape[0])


def partition(f: SVDFactorization, fraction: float) -> SubspacePartition:
    """Split the top ``rank_count(fraction, k)`` singular directions into the
    high subspace and the remainder into the low subspace."""
    r = rank_count(fraction, f.rank_limit)
    return SubspacePartition(
        u_high=f.u[:, :r].copy(),
        v_high=f.v[:, :r].copy(),
        u_low=f.u[:, r:].copy(),
        v_low=f.v[:, r:].copy(),
        retained_fraction=float(fraction),
        r_count=r,
    )


def project_gradient(grad, p: SubspacePartition) -> np.ndarray:
    """Remove the high-subspace bilinear component of a gradient.

    Returns ``G - U_h U_h^T G V_h V_h^T``. With ``r_count == 0`` this is the
    identity. The projected set is a linear subspace, so sums and scalings of
    projected gradients stay projected.
    """
    grad = as_matrix(grad, "grad")
    if grad.shape != (p.d_out, p.d_in):
        raise ValueError(
            f"gradient shape {grad.shape} does not match partition "
            f"({p.d_out}, {p.d_in})"
        )
    if p.r_count == 0:
        return grad.copy()
    core = p.u_high.T @ grad @ p.v_high
    return grad - p.u_high @ core @ p.v_high.T


def interference(grad_projected, p: SubspacePartition) -> float:
    """Frobenius norm of the high-subspace bilinear component,
    ``|U_h^T G V_h|_F``; zero (to rounding) after project_gradient."""
    grad_projected = as_matrix(grad_projected, "grad_projected")
    if grad_projected.shape != (p.d_out, p.d_in):
        raise ValueError(
            f"gradient shape {grad_projected.shape} does not match partition "
            f"({p.d_out}, {p.d_in})"
        )
    if p.r_count == 0:
        return 0.0
    return float(np.linalg.norm(p.u_high.T @ grad_projected @ p.v_high))

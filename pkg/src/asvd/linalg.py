"""Dense float64 linear algebra shared by every other module.

Provides SVD with a deterministic sign convention, symmetric
eigendecomposition, the Frobenius norm, and cosine similarity. All functions
are pure, operate on plain numpy arrays (row-major, float64), and never keep
internal state, so they are safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SVDFactorization",
    "ZERO_NORM_CUTOFF",
    "as_matrix",
    "cosine_similarity",
    "frobenius_norm",
    "svd",
    "symmetric_eigendecomposition",
]

# Vectors with norm below this carry no usable directional information;
# cosine_similarity returns 0 for them instead of raising so that importance
# scoring survives dead activations.
ZERO_NORM_CUTOFF = 1e-12


def as_matrix(w, name: str = "matrix") -> np.ndarray:
    """Validate ``w`` as a finite 2-D float64 array and return it."""
    out = np.asarray(w, dtype=np.float64)
    if out.ndim != 2 or out.shape[0] < 1 or out.shape[1] < 1:
        raise ValueError(
            f"{name} must be 2-D with positive dimensions, got shape {out.shape}"
        )
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return out


@dataclass(frozen=True)
class SVDFactorization:
    """Thin SVD ``W = U diag(sigma) V^T`` with ``k = min(rows, cols)`` triplets.

    Columns of ``u`` and ``v`` are orthonormal and ``sigma`` is sorted
    descending. Signs are fixed so the largest-magnitude entry of each column
    of ``u`` is positive, which makes the factorization a deterministic
    function of the input matrix.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def rank_limit(self) -> int:
        """Number of singular triplets, min(rows, cols)."""
        return int(self.sigma.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.u.shape[0]), int(self.v.shape[0]))

    def reconstruct(self) -> np.ndarray:
        """Return ``U diag(sigma) V^T``."""
        return (self.u * self.sigma) @ self.v.T

    def truncate(self, k: int) -> "SVDFactorization":
        """Keep the top ``k`` singular triplets."""
        if not 0 <= k <= self.rank_limit:
            raise ValueError(f"k must be in [0, {self.rank_limit}], got {k}")
        return SVDFactorization(
            u=self.u[:, :k].copy(), sigma=self.sigma[:k].copy(), v=self.v[:, :k].copy()
        )


def _fix_signs(u: np.ndarray, v: np.ndarray) -> None:
    # Largest-magnitude entry of each left singular vector made positive
    # (first index wins ties), flipping the paired right vector to preserve
    # the product.
    for j in range(u.shape[1]):
        i = int(np.argmax(np.abs(u[:, j])))
        if u[i, j] < 0:
            u[:, j] *= -1.0
            v[:, j] *= -1.0


def svd(w) -> SVDFactorization:
    """Thin SVD of a dense matrix with the deterministic sign convention.

    Raises ``numpy.linalg.LinAlgError`` if the underlying iteration fails to
    converge; never returns a silently invalid factorization.
    """
    w = as_matrix(w, "w")
    u, s, vt = np.linalg.svd(w, full_matrices=False)
    v = vt.T.copy()
    u = u.copy()
    _fix_signs(u, v)
    return SVDFactorization(u=u, sigma=s, v=v)


def frobenius_norm(w) -> float:
    """Square root of the sum of squared entries."""
    w = as_matrix(w, "w")
    return float(np.linalg.norm(w))


def cosine_similarity(a, b) -> float:
    """``a.b / (|a||b|)``, clipped to [-1, 1].

    Returns 0.0 when either vector has norm below ``ZERO_NORM_CUTOFF``
    (no directional information).
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"vectors must have equal length, got {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < ZERO_NORM_CUTOFF or nb < ZERO_NORM_CUTOFF:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def symmetric_eigendecomposition(h) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Returns ``(eigenvalues, q)`` with orthonormal columns of ``q`` such that
    ``h = q diag(eigenvalues) q^T``. Rejects inputs whose asymmetry exceeds
    ``1e-8 * max(1, |h|_F)``.
    """
    h = as_matrix(h, "h")
    if h.shape[0] != h.shape[1]:
        raise ValueError(f"h must be square, got shape {h.shape}")
    scale = max(1.0, float(np.linalg.norm(h)))
    if np.linalg.norm(h - h.T) > 1e-8 * scale:
        raise ValueError("h is not symmetric within tolerance")
    sym = 0.5 * (h + h.T)
    eigvals, q = np.linalg.eigh(sym)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    q = q[:, order].copy()
    # Same sign convention as svd() for reproducibility.
    for j in range(q.shape[1]):
        i = int(np.argmax(np.abs(q[:, j])))
        if q[i, j] < 0:
            q[:, j] *= -1.0
    return eigvals, q

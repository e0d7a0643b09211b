"""Numerical verification of the forgetting-bound theory on exact Hessians.

At desk scale the Hessian of a task loss is computable exactly (central
differences of the analytic gradient), which lets us check, rather than
assume, the chain of results behind subspace-protected training:

- the second-order forgetting approximation dL ~ 1/2 d^T H d at an optimum,
- the Rayleigh bound d^T H d <= lambda_max |d|^2,
- the block-diagonal structure measurement, and
- the bound hierarchy adaptive <= fixed-rank <= full fine-tuning under an
  equal update budget |d|^2 = c.

The hierarchy is evaluated in Hessian-block coordinates: a strategy that
protects the top k directions of each layer block can at worst excite the
(k+1)-th eigenvalue of that block. Rank fractions map to per-block counts with
the same rounding rule the weight-SVD partition uses; the mapping between
weight singular directions and Hessian eigendirections is heuristic and the
two framings are kept separate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, symmetric_eigendecomposition
from .network import (
    NetworkState,
    backward,
    flatten,
    loss_value,
    unflatten,
)
from .seeding import substream
from .subspace import RetentionConfig, allocate_rank, rank_count

__all__ = [
    "BoundReport",
    "HessianBundle",
    "block_diagonal_measure",
    "block_subspace_projector",
    "bound_hierarchy_experiment",
    "equal_norm_worst_case",
    "exact_hessian",
    "importance_curvature_correlation",
    "make_hierarchy_instance",
    "rayleigh_bound_check",
    "second_order_forgetting_check",
]

_MAX_HESSIAN_DIM = 4096
_HESSIAN_FD_STEP = 1e-4


@dataclass
class HessianBundle:
    """Exact Hessian with its per-layer blocks and block eigensystems."""

    h: np.ndarray
    h_blocks: list[np.ndarray]
    eigenvalues: list[np.ndarray]  # per block, descending
    eigenvectors: list[np.ndarray]  # per block, columns match eigenvalues
    theta_star: np.ndarray

    def __post_init__(self) -> None:
        self.h = as_matrix(self.h, "h")
        p = self.h.shape[0]
        if self.h.shape != (p, p):
            raise ValueError("h must be square")
        if np.linalg.norm(self.h - self.h.T) > 1e-7 * max(1.0, np.linalg.norm(self.h)):
            raise ValueError("h is not symmetric within tolerance")
        if sum(b.shape[0] for b in self.h_blocks) != p:
            raise ValueError("block dimensions must sum to the Hessian dimension")

    @property
    def dim(self) -> int:
        return int(self.h.shape[0])

    @property
    def block_sizes(self) -> list[int]:
        return [int(b.shape[0]) for b in self.h_blocks]

    @property
    def block_offsets(self) -> list[int]:
        offsets, acc = [], 0
        for size in self.block_sizes:
            offsets.append(acc)
            acc += size
        return offsets


def _bundle_from_matrix(h: np.ndarray, block_sizes: list[int], theta: np.ndarray) -> HessianBundle:
    blocks, eigvals, eigvecs = [], [], []
    offset = 0
    for size in block_sizes:
        block = h[offset : offset + size, offset : offset + size].copy()
        lam, q = symmetric_eigendecomposition(block)
        blocks.append(block)
        eigvals.append(lam)
        eigvecs.append(q)
        offset += size
    return HessianBundle(
        h=h, h_blocks=blocks, eigenvalues=eigvals, eigenvectors=eigvecs, theta_star=theta
    )


def exact_hessian(
    net: NetworkState, batch, loss_kind: str, step: float = _HESSIAN_FD_STEP
) -> HessianBundle:
    """Exact task Hessian by central differencing the analytic gradient.

    Columns are assembled one coordinate at a time, then the result is
    symmetrized as (H + H^T)/2. Non-smooth activations are rejected because
    the Hessian does not exist everywhere for them.
    """
    for spec in net.specs:
        if spec.activation == "relu":
            raise ValueError("relu is not smooth; Hessian ops need tanh or identity")
    theta = flatten(net)
    dim = theta.shape[0]
    if dim > _MAX_HESSIAN_DIM:
        raise ValueError(f"parameter count {dim} exceeds exact-Hessian limit")
    h = np.empty((dim, dim))
    for i in range(dim):
        bumped = theta.copy()
        bumped[i] = theta[i] + step
        grad_plus = np.concatenate(
            [g.ravel() for g in backward(unflatten(net, bumped), batch, loss_kind)]
        )
        bumped[i] = theta[i] - step
        grad_minus = np.concatenate(
            [g.ravel() for g in backward(unflatten(net, bumped), batch, loss_kind)]
        )
        h[:, i] = (grad_plus - grad_minus) / (2.0 * step)
    h = 0.5 * (h + h.T)
    return _bundle_from_matrix(h, [w.size for w in net.weights], theta)


def second_order_forgetting_check(
    net: NetworkState,
    batch,
    loss_kind: str,
    delta_theta,
    *,
    hessian: HessianBundle | None = None,
    gradient_tolerance: float = 1e-6,
) -> tuple[float, float, float]:
    """Exact loss change vs the quadratic prediction 1/2 d^T H d.

    Requires the network to sit at a (near-)optimum of the given batch loss;
    otherwise the first-order term the approximation drops is not negligible
    and the input is rejected with the measured gradient norm. Returns
    (exact delta, quadratic prediction, relative error); the cubic remainder
    makes the relative error shrink like O(|d|).
    """
    delta_theta = np.asarray(delta_theta, dtype=np.float64).ravel()
    grads = backward(net, batch, loss_kind)
    grad_norm = float(np.sqrt(sum(np.sum(g * g) for g in grads)))
    if grad_norm > gradient_tolerance:
        raise ValueError(
            f"network is not at an optimum: gradient norm {grad_norm:.3e} exceeds "
            f"{gradient_tolerance:.0e}"
        )
    if np.linalg.norm(delta_theta) > 1e-2 + 1e-12:
        raise ValueError("|delta_theta| must be <= 1e-2 for the quadratic regime")
    if hessian is None:
        hessian = exact_hessian(net, batch, loss_kind)
    theta = flatten(net)
    if delta_theta.shape != theta.shape:
        raise ValueError("delta_theta length does not match the parameter count")
    exact = loss_value(unflatten(net, theta + delta_theta), batch, loss_kind) - loss_value(
        net, batch, loss_kind
    )
    quadratic = 0.5 * float(delta_theta @ hessian.h @ delta_theta)
    denom = max(abs(exact), abs(quadratic), 1e-300)
    return exact, quadratic, abs(exact - quadratic) / denom


def rayleigh_bound_check(
    h: HessianBundle, delta_theta, *, tolerance: float = 1e-9
) -> tuple[float, float, float]:
    """Verify d^T H d <= lambda_max(H) |d|^2 (+tolerance); returns
    (quadratic form, bound, slack) and raises on violation."""
    delta_theta = np.asarray(delta_theta, dtype=np.float64).ravel()
    if delta_theta.shape[0] != h.dim:
        raise ValueError("delta_theta length does not match the Hessian dimension")
    quad = float(delta_theta @ h.h @ delta_theta)
    lam_max = float(np.linalg.eigvalsh(h.h)[-1])
    bound = lam_max * float(delta_theta @ delta_theta)
    if quad > bound + tolerance:
        raise RuntimeError(
            f"Rayleigh bound violated: quadratic form {quad} > bound {bound}"
        )
    return quad, bound, bound - quad


def block_diagonal_measure(h: HessianBundle) -> float:
    """|off-block part|_F / |block-diagonal part|_F.

    Reported, not asserted: block-diagonality is an empirical property of
    trained networks, not a theorem about all of them. Returns 0 for an
    all-zero Hessian.
    """
    block_diag = np.zeros_like(h.h)
    for offset, block in zip(h.block_offsets, h.h_blocks):
        size = block.shape[0]
        block_diag[offset : offset + size, offset : offset + size] = block
    diag_norm = float(np.linalg.norm(block_diag))
    off_norm = float(np.linalg.norm(h.h - block_diag))
    if diag_norm == 0.0:
        return 0.0 if off_norm == 0.0 else float("inf")
    return off_norm / diag_norm


def block_subspace_projector(h: HessianBundle, protected_counts: list[int]) -> np.ndarray:
    """Projector onto the update subspace left open when each block's top
    ``protected_counts[l]`` eigendirections are frozen."""
    if len(protected_counts) != len(h.h_blocks):
        raise ValueError("need one protected count per block")
    proj = np.zeros((h.dim, h.dim))
    for offset, size, count, q in zip(
        h.block_offsets, h.block_sizes, protected_counts, h.eigenvectors
    ):
        if not 0 <= count <= size:
            raise ValueError(f"protected count {count} out of range for block size {size}")
        allowed = q[:, count:]
        proj[offset : offset + size, offset : offset + size] = allowed @ allowed.T
    return proj


def equal_norm_worst_case(h: HessianBundle, projector: np.ndarray, c: float) -> float:
    """Worst-case quadratic forgetting under |d|^2 = c restricted to a subspace.

    max over d in the subspace with |d|^2 = c of 1/2 d^T H d, i.e.
    1/2 c lambda_max of H restricted to the projector's range (computed on an
    orthonormal basis of the range so indefinite Hessians are handled too).
    Returns 0 for a zero-dimensional subspace.
    """
    if c < 0:
        raise ValueError("update budget c must be >= 0")
    projector = as_matrix(projector, "projector")
    if projector.shape != (h.dim, h.dim):
        raise ValueError("projector shape does not match the Hessian dimension")
    eigvals, eigvecs = symmetric_eigendecomposition(projector)
    if np.any(eigvals > 1.0 + 1e-6) or np.any(eigvals < -1e-6):
        raise ValueError("projector eigenvalues must lie in {0, 1}")
    basis = eigvecs[:, eigvals > 0.5]
    if basis.shape[1] == 0:
        return 0.0
    restricted = basis.T @ h.h @ basis
    lam_max = float(np.linalg.eigvalsh(0.5 * (restricted + restricted.T))[-1])
    return 0.5 * c * lam_max


@dataclass
class BoundReport:
    """The three analytic forgetting bounds and the realized worst cases."""

    bound_full: float
    bound_fixed: float
    bound_adaptive: float
    observed_forgetting: dict[str, float]
    update_norm_sq: float
    ordering_satisfied: bool
    strict: bool
    protected_fixed: list[int]
    protected_adaptive: list[int]

    def to_json_dict(self) -> dict:
        return {
            "bound_full": self.bound_full,
            "bound_fixed": self.bound_fixed,
            "bound_adaptive": self.bound_adaptive,
            "observed_forgetting": dict(self.observed_forgetting),
            "update_norm_sq": self.update_norm_sq,
            "ordering_satisfied": self.ordering_satisfied,
            "strict": self.strict,
            "protected_fixed": list(self.protected_fixed),
            "protected_adaptive": list(self.protected_adaptive),
        }


def _eigenvalue_after_cut(eigenvalues: np.ndarray, count: int) -> float:
    # Largest eigenvalue still reachable once the top `count` directions are
    # frozen; zero when the whole block is protected.
    if count >= eigenvalues.shape[0]:
        return 0.0
    return float(eigenvalues[count])


def bound_hierarchy_experiment(
    h: HessianBundle,
    importance_normalized,
    retention: RetentionConfig,
    fixed_fraction: float,
    c: float,
) -> BoundReport:
    """Evaluate the three-strategy bound hierarchy on one Hessian bundle.

    Analytic bounds come straight off the block eigenvalues: 1/2 c times the
    largest eigenvalue each strategy leaves reachable. Realized worst cases
    are the top eigenvalues of the Hessian restricted to each strategy's
    allowed subspace (times c/2), so bounds must upper-bound them.
    """
    importance_normalized = np.asarray(importance_normalized, dtype=np.float64)
    if importance_normalized.shape != (len(h.h_blocks),):
        raise ValueError("need one importance score per block")
    sizes = h.block_sizes
    protected_fixed = [rank_count(fixed_fraction, n) for n in sizes]
    protected_adaptive = [
        rank_count(allocate_rank(imp, retention), n)
        for imp, n in zip(importance_normalized, sizes)
    ]
    cap_fixed = max(
        _eigenvalue_after_cut(lam, k) for lam, k in zip(h.eigenvalues, protected_fixed)
    )
    cap_adaptive = max(
        _eigenvalue_after_cut(lam, k) for lam, k in zip(h.eigenvalues, protected_adaptive)
    )
    lam_full = float(np.linalg.eigvalsh(h.h)[-1])
    bound_full = 0.5 * lam_full * c
    bound_fixed = 0.5 * cap_fixed * c
    bound_adaptive = 0.5 * cap_adaptive * c

    identity = np.eye(h.dim)
    observed = {
        "full_finetune": equal_norm_worst_case(h, identity, c),
        "fixed_rank": equal_norm_worst_case(
            h, block_subspace_projector(h, protected_fixed), c
        ),
        "adaptive_svd": equal_norm_worst_case(
            h, block_subspace_projector(h, protected_adaptive), c
        ),
    }
    ordering = bound_adaptive <= bound_fixed + 1e-12 and bound_fixed <= bound_full + 1e-12
    strict = bound_adaptive < bound_fixed and bound_fixed < bound_full
    return BoundReport(
        bound_full=bound_full,
        bound_fixed=bound_fixed,
        bound_adaptive=bound_adaptive,
        observed_forgetting=observed,
        update_norm_sq=c,
        ordering_satisfied=ordering,
        strict=strict,
        protected_fixed=protected_fixed,
        protected_adaptive=protected_adaptive,
    )


def importance_curvature_correlation(
    importance_normalized, h: HessianBundle
) -> float:
    """Pearson correlation between layer importance and per-block top
    eigenvalue; a diagnostic for the importance-curvature premise."""
    imp = np.asarray(importance_normalized, dtype=np.float64)
    lam1 = np.array([lam[0] for lam in h.eigenvalues])
    if imp.shape != lam1.shape:
        raise ValueError("need one importance score per block")
    if imp.std() == 0.0 or lam1.std() == 0.0:
        return 0.0
    return float(np.corrcoef(imp, lam1)[0, 1])


def make_hierarchy_instance(
    trial_seed: int,
    *,
    block_count: int = 3,
    block_dim: int = 8,
    retention: RetentionConfig | None = None,
    fixed_fraction: float = 0.5,
    c: float = 1e-2,
) -> tuple[HessianBundle, np.ndarray, RetentionConfig, float, float]:
    """Construct a block-diagonal Hessian satisfying the importance-curvature
    premise with strictly separated cut eigenvalues.

    One critical block carries the dominant spectrum; every other block's top
    eigenvalue sits strictly below the critical block's post-fixed-cut
    eigenvalue, and importance is proportional to each block's top eigenvalue.
    This guarantees the strict hierarchy adaptive < fixed < full.
    """
    if retention is None:
        retention = RetentionConfig()
    if block_count < 2 or block_dim < 4:
        raise ValueError("need at least 2 blocks of dimension >= 4")
    rng = substream(trial_seed, "hierarchy")
    k_fixed = rank_count(fixed_fraction, block_dim)
    if k_fixed in (0, block_dim):
        raise ValueError("fixed_fraction must leave a nontrivial cut")

    decay_crit = rng.uniform(0.55, 0.8)
    scale_crit = 10.0 * rng.uniform(1.0, 2.0)
    spectra = [scale_crit * decay_crit ** np.arange(block_dim)]
    crit_cut = spectra[0][k_fixed]
    for _ in range(block_count - 1):
        top = crit_cut * rng.uniform(0.2, 0.8)
        decay = rng.uniform(0.55, 0.8)
        spectra.append(top * decay ** np.arange(block_dim))

    h = np.zeros((block_count * block_dim, block_count * block_dim))
    for i, lam in enumerate(spectra):
        q = np.linalg.qr(rng.standard_normal((block_dim, block_dim)))[0]
        offset = i * block_dim
        h[offset : offset + block_dim, offset : offset + block_dim] = (q * lam) @ q.T
    bundle = _bundle_from_matrix(h, [block_dim] * block_count, np.zeros(h.shape[0]))

    tops = np.array([lam[0] for lam in bundle.eigenvalues])
    importance = tops * (block_count / tops.sum())
    return bundle, importance, retention, fixed_fraction, c

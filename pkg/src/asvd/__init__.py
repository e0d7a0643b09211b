"""Continual learning through adaptive SVD subspace partitioning.

Weight matrices are split per layer into a high singular-value subspace
(protecting what earlier tasks learned) and a low one (free capacity for the
next task); gradient updates are projected off the high subspace. The package
also ships the numerical machinery to verify the approach's forgetting-bound
theory on exact desk-scale Hessians and to analyze weight spectra.
"""

from .continual import (
    OptimizerConfig,
    TRAINER_KINDS,
    apply_projected_step,
    run_ablation_halved_retention,
    train_continual,
)
from .importance import layer_importance, normalize, profile_for_task, uniform_profile
from .linalg import SVDFactorization, cosine_similarity, frobenius_norm, svd
from .metrics import AccuracyMatrix, RunReport, average_accuracy, backward_transfer, suite_delta
from .network import NetworkState, backward, forward, load_checkpoint, save_checkpoint
from .subspace import (
    RetentionConfig,
    SubspacePartition,
    allocate_rank,
    interference,
    partition,
    project_gradient,
)
from .tasks import TaskData, TaskStreamSpec, evaluate, generate
from .theory import (
    BoundReport,
    HessianBundle,
    bound_hierarchy_experiment,
    equal_norm_worst_case,
    exact_hessian,
    rayleigh_bound_check,
    second_order_forgetting_check,
)

__version__ = "0.1.0"

__all__ = [
    "AccuracyMatrix",
    "BoundReport",
    "HessianBundle",
    "NetworkState",
    "OptimizerConfig",
    "RetentionConfig",
    "RunReport",
    "SVDFactorization",
    "SubspacePartition",
    "TRAINER_KINDS",
    "TaskData",
    "TaskStreamSpec",
    "allocate_rank",
    "apply_projected_step",
    "average_accuracy",
    "backward",
    "backward_transfer",
    "bound_hierarchy_experiment",
    "cosine_similarity",
    "equal_norm_worst_case",
    "evaluate",
    "exact_hessian",
    "forward",
    "frobenius_norm",
    "generate",
    "interference",
    "layer_importance",
    "load_checkpoint",
    "normalize",
    "partition",
    "profile_for_task",
    "project_gradient",
    "rayleigh_bound_check",
    "run_ablation_halved_retention",
    "save_checkpoint",
    "second_order_forgetting_check",
    "suite_delta",
    "svd",
    "train_continual",
    "uniform_profile",
]

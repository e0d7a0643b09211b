"""Sequential-task training: adaptive SVD projection, baselines, ablations.

For the adaptive trainer, each task boundary (1) scores layer importance on
the previous task's data, (2) decomposes the current weights by SVD and
partitions each layer at its allocated retention fraction, and (3) trains with
every applied step projected off the high subspace. The SVD is recomputed once
per task; within a task the partition is frozen.

Optimizer notes: plain SGD (optionally with momentum) keeps the projection
guarantee exact, since the projected set is a linear subspace and momentum
state is reset at task boundaries. The final applied step is projected again
so the orthogonality invariant holds regardless of optimizer state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .importance import ImportanceProfile, profile_for_task, uniform_profile
from .linalg import svd
from .metrics import AccuracyMatrix
from .network import NetworkState, loss_and_gradients
from .seeding import substream
from .subspace import (
    RetentionConfig,
    SubspacePartition,
    allocate_rank,
    interference,
    partition,
    project_gradient,
)
from .tasks import TaskData, evaluate

__all__ = [
    "InterferenceBreachError",
    "OptimizerConfig",
    "PROJECTED_TRAINERS",
    "TRAINER_KINDS",
    "TrainDiagnostics",
    "TrainingDivergedError",
    "apply_projected_step",
    "run_ablation_halved_retention",
    "train_continual",
]

TRAINER_KINDS = (
    "adaptive_svd",
    "fixed_rank",
    "fixed_budget",
    "seq_full",
    "no_projection_ablation",
    "joint_multitask",
)
PROJECTED_TRAINERS = frozenset({"adaptive_svd", "fixed_rank", "fixed_budget"})

_LOSS_FOR_KIND = {
    "classification": "softmax_cross_entropy",
    "regression": "mean_squared_error",
}

# Interference above this in a projected trainer is an invariant violation.
INTERFERENCE_TOLERANCE = 1e-8


class TrainingDivergedError(RuntimeError):
    """Raised when a training loss becomes non-finite."""


class InterferenceBreachError(RuntimeError):
    """Raised when a projected trainer's applied step leaks into the high
    subspace beyond tolerance."""


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "sgd_momentum"  # "sgd" | "sgd_momentum"
    learning_rate: float = 0.05
    momentum: float = 0.9
    epochs_per_task: int = 5
    batch_size: int = 32

    def __post_init__(self) -> None:
        if self.kind not in ("sgd", "sgd_momentum"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.epochs_per_task < 1 or self.batch_size < 1:
            raise ValueError("epochs_per_task and batch_size must be positive")


@dataclass
class TrainDiagnostics:
    """Per-run invariants and bookkeeping surfaced into the RunReport."""

    interference_max: float | None = None
    first_order_inner_max: float | None = None
    importance_profiles: list[dict] = field(default_factory=list)
    rank_allocations: list[list[dict]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def apply_projected_step(
    weight: np.ndarray, raw_step: np.ndarray, p: SubspacePartition | None
) -> np.ndarray:
    """New weight after subtracting the projected step.

    With no partition (or an empty high subspace) this is a plain SGD step;
    otherwise the applied delta satisfies interference <= 1e-10.
    """
    if p is None or p.r_count == 0:
        return weight - raw_step
    return weight - project_gradient(raw_step, p)


def _partition_layers(
    net: NetworkState, fractions: list[float]
) -> tuple[list, list[SubspacePartition]]:
    factorizations = [svd(w) for w in net.weights]
    partitions = [partition(f, frac) for f, frac in zip(factorizations, fractions)]
    return factorizations, partitions


def _importance_fractions(
    net: NetworkState,
    prev_task: TaskData | None,
    retention: RetentionConfig,
    importance_samples: int,
    importance_split: str,
) -> tuple[ImportanceProfile, list[float]]:
    if prev_task is None:
        profile = uniform_profile(net.layer_count)
    else:
        source = prev_task.train_x if importance_split == "train" else prev_task.test_x
        n = min(importance_samples, source.shape[0])
        profile = profile_for_task(net, source, n)
    # A layer whose mean cosine is negative transforms its input strongly;
    # it gets the minimum retention, so its normalized score is clamped at 0
    # before interpolation.
    fractions = [allocate_rank(max(0.0, v), retention) for v in profile.normalized]
    return profile, fractions


class _AblationLayer:
    """Low singular triplet trained unconstrained while the high triplet from
    the task-start SVD is frozen and restored after every update.

    The trainable parameters are the factors (U_low, sigma_low, V_low)
    themselves; their chain-rule gradients from the full weight gradient G are
    dU = G V S, dS = diag(U^T G V), dV = G^T U S. Nothing keeps U_low
    orthogonal to the frozen high subspace, so low directions can drift into
    it -- the failure mode this ablation exists to demonstrate.
    """

    def __init__(self, factorization, p: SubspacePartition) -> None:
        r = p.r_count
        self.w_high = (p.u_high * factorization.sigma[:r]) @ p.v_high.T
        self.u = p.u_low.copy()
        self.s = factorization.sigma[r:].copy()
        self.v = p.v_low.copy()
        self.vel_u = np.zeros_like(self.u)
        self.vel_s = np.zeros_like(self.s)
        self.vel_v = np.zeros_like(self.v)

    def step(self, grad_w: np.ndarray, opt: OptimizerConfig) -> np.ndarray:
        if self.s.shape[0] == 0:
            return self.w_high.copy()
        gv = grad_w @ self.v  # (d_out, m)
        grad_u = gv * self.s
        grad_s = np.einsum("ij,ij->j", self.u, gv)
        grad_v = (grad_w.T @ self.u) * self.s
        if opt.kind == "sgd_momentum":
            self.vel_u = opt.momentum * self.vel_u + grad_u
            self.vel_s = opt.momentum * self.vel_s + grad_s
            self.vel_v = opt.momentum * self.vel_v + grad_v
            grad_u, grad_s, grad_v = self.vel_u, self.vel_s, self.vel_v
        self.u = self.u - opt.learning_rate * grad_u
        self.s = self.s - opt.learning_rate * grad_s
        self.v = self.v - opt.learning_rate * grad_v
        return self.w_high + (self.u * self.s) @ self.v.T


def _validate_stream(net: NetworkState, stream: list[TaskData]) -> str:
    if not stream:
        raise ValueError("task stream is empty")
    kind = stream[0].kind
    for task in stream:
        if task.kind != kind:
            raise ValueError("all tasks in a stream must share one kind")
        if task.dimension != net.input_dim:
            raise ValueError("task dimension does not match the network input")
        width = task.class_count if kind == "classification" else task.target_dim
        if width != net.output_dim:
            raise ValueError("task label width does not match the network output")
    return _LOSS_FOR_KIND[kind]


def train_continual(
    net: NetworkState,
    stream: list[TaskData],
    trainer: str,
    opt: OptimizerConfig,
    retention: RetentionConfig | None = None,
    *,
    seed: int = 0,
    fixed_fraction: float | None = None,
    importance_samples: int = 128,
    importance_split: str = "train",
    check_every_step: bool = True,
    interference_stride: int = 16,
    track_first_order: bool = True,
) -> tuple[NetworkState, AccuracyMatrix, TrainDiagnostics]:
    """Run one continual-learning trajectory and fill the accuracy matrix.

    Mutates ``net`` in place and returns it together with the lower-triangular
    metric matrix (row t = evaluations on tasks 1..t after task t) and
    diagnostics. Deterministic given (initial weights, stream, seed).
    """
    if trainer not in TRAINER_KINDS:
        raise ValueError(f"unknown trainer kind {trainer!r}")
    if retention is None:
        retention = RetentionConfig()
    if importance_split not in ("train", "test"):
        raise ValueError("importance_split must be 'train' or 'test'")
    loss_kind = _validate_stream(net, stream)
    task_count = len(stream)
    matrix = AccuracyMatrix(task_count)
    diag = TrainDiagnostics()
    rng_batch = substream(seed, "batching")
    params_before = net.parameter_count()

    if trainer == "joint_multitask":
        union_x = np.concatenate([t.train_x for t in stream])
        union_y = np.concatenate([t.train_y for t in stream])
        union = (union_x, union_y)
        _train_phase(
            net, union, None, None, opt, loss_kind, rng_batch, diag,
            task_index=1, check_every_step=check_every_step,
            interference_stride=interference_stride, projected=False,
        )
        finals = [evaluate(net, task) for task in stream]
        # One training phase: "after task t" has no sequential meaning, so
        # every row holds the final evaluations and BWT is zero by construction.
        for t in range(1, task_count + 1):
            for j in range(1, t + 1):
                matrix.set(t, j, finals[j - 1])
        return net, matrix, diag

    uses_partition = trainer in PROJECTED_TRAINERS or trainer == "no_projection_ablation"
    for t, task in enumerate(stream, 1):
        partitions: list[SubspacePartition] | None = None
        ablation_layers: list[_AblationLayer] | None = None
        first_order_refs: list[np.ndarray | None] | None = None

        if uses_partition:
            if trainer in ("adaptive_svd", "no_projection_ablation"):
                prev_task = stream[t - 2] if t >= 2 else None
                profile, fractions = _importance_fractions(
                    net, prev_task, retention, importance_samples, importance_split
                )
                if profile.used_fallback:
                    diag.warnings.append(
                        f"task {t}: non-positive importance sum, uniform fallback"
                    )
                diag.importance_profiles.append(
                    {
                        "task": t,
                        "raw": profile.raw.tolist(),
                        "normalized": profile.normalized.tolist(),
                        "used_fallback": profile.used_fallback,
                    }
                )
            elif trainer == "fixed_rank":
                f = retention.trr if fixed_fraction is None else fixed_fraction
                fractions = [f] * net.layer_count
            else:  # fixed_budget: freeze the top (t-1)/T fraction at task t
                fractions = [(t - 1) / task_count] * net.layer_count
            factorizations, partitions = _partition_layers(net, fractions)
            diag.rank_allocations.append(
                [
                    {"task": t, "layer": l, "fraction": fractions[l], "r_count": p.r_count}
                    for l, p in enumerate(partitions)
                ]
            )
            if trainer == "no_projection_ablation":
                ablation_layers = [
                    _AblationLayer(f, p) for f, p in zip(factorizations, partitions)
                ]

        if (
            track_first_order
            and trainer in PROJECTED_TRAINERS
            and t >= 2
            and partitions is not None
        ):
            # High-subspace component of the previous task's exact gradient;
            # inner products with applied steps must vanish (first-order
            # non-interference).
            _, prev_grads = loss_and_gradients(
                net, (stream[t - 2].train_x, stream[t - 2].train_y), loss_kind
            )
            first_order_refs = []
            for g, p in zip(prev_grads, partitions):
                if p.r_count == 0:
                    first_order_refs.append(None)
                else:
                    core = p.u_high.T @ g @ p.v_high
                    first_order_refs.append(p.u_high @ core @ p.v_high.T)

        _train_phase(
            net,
            (task.train_x, task.train_y),
            partitions if trainer in PROJECTED_TRAINERS else None,
            ablation_layers,
            opt,
            loss_kind,
            rng_batch,
            diag,
            task_index=t,
            check_every_step=check_every_step,
            interference_stride=interference_stride,
            projected=trainer in PROJECTED_TRAINERS,
            diag_partitions=partitions,
            first_order_refs=first_order_refs,
        )

        for j in range(1, t + 1):
            matrix.set(t, j, evaluate(net, stream[j - 1]))

    if net.parameter_count() != params_before:
        raise RuntimeError("parameter count changed during training")
    return net, matrix, diag


def _train_phase(
    net: NetworkState,
    train_data: tuple[np.ndarray, np.ndarray],
    partitions: list[SubspacePartition] | None,
    ablation_layers: list[_AblationLayer] | None,
    opt: OptimizerConfig,
    loss_kind: str,
    rng_batch: np.random.Generator,
    diag: TrainDiagnostics,
    *,
    task_index: int,
    check_every_step: bool,
    interference_stride: int,
    projected: bool,
    diag_partitions: list[SubspacePartition] | None = None,
    first_order_refs: list[np.ndarray | None] | None = None,
) -> None:
    x, y = train_data
    n = x.shape[0]
    velocities = [np.zeros_like(w) for w in net.weights]
    step_index = 0
    total_steps = opt.epochs_per_task * ((n + opt.batch_size - 1) // opt.batch_size)
    for epoch in range(opt.epochs_per_task):
        order = rng_batch.permutation(n)
        for start in range(0, n, opt.batch_size):
            idx = order[start : start + opt.batch_size]
            batch = (x[idx], y[idx])
            step_index += 1
            check_now = (
                check_every_step
                or step_index % interference_stride == 0
                or step_index == total_steps
            )
            loss, grads = loss_and_gradients(net, batch, loss_kind)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at task {task_index}, epoch {epoch + 1}, "
                    f"step {step_index}"
                )
            if ablation_layers is not None:
                for l, layer in enumerate(ablation_layers):
                    old_w = net.weights[l]
                    new_w = layer.step(grads[l], opt)
                    if check_now and diag_partitions is not None:
                        iv = interference(new_w - old_w, diag_partitions[l])
                        if diag.interference_max is None or iv > diag.interference_max:
                            diag.interference_max = iv
                    net.weights[l] = new_w
                continue
            for l in range(net.layer_count):
                g = grads[l]
                p = partitions[l] if partitions is not None else None
                use_projection = p is not None and p.r_count > 0
                if use_projection:
                    g = project_gradient(g, p)
                if opt.kind == "sgd_momentum":
                    v = velocities[l]
                    v *= opt.momentum
                    v += g
                    step = opt.learning_rate * v
                else:
                    step = opt.learning_rate * g
                if use_projection:
                    step = project_gradient(step, p)
                    if check_now:
                        iv = interference(step, p)
                        if diag.interference_max is None or iv > diag.interference_max:
                            diag.interference_max = iv
                        if projected and iv > INTERFERENCE_TOLERANCE:
                            raise InterferenceBreachError(
                                f"interference {iv:.3e} exceeds "
                                f"{INTERFERENCE_TOLERANCE:.0e} at task {task_index}, "
                                f"layer {l}, step {step_index}"
                            )
                elif projected and check_now and p is not None:
                    if diag.interference_max is None:
                        diag.interference_max = 0.0
                if first_order_refs is not None and first_order_refs[l] is not None:
                    inner = abs(float(np.sum(first_order_refs[l] * step)))
                    if (
                        diag.first_order_inner_max is None
                        or inner > diag.first_order_inner_max
                    ):
                        diag.first_order_inner_max = inner
                net.weights[l] -= step


def run_ablation_halved_retention(
    make_net,
    stream: list[TaskData],
    opt: OptimizerConfig,
    retention: RetentionConfig,
    *,
    seed: int = 0,
    **train_kwargs,
) -> dict[str, tuple[NetworkState, AccuracyMatrix, TrainDiagnostics]]:
    """Paired adaptive runs at the configured retention and at mrr/2, trr/2.

    ``make_net`` must build identically initialized networks so the only
    difference between the two runs is the retention schedule.
    """
    results = {}
    for label, cfg in (("default", retention), ("halved", retention.halved())):
        net = make_net()
        results[label] = train_continual(
            net, stream, "adaptive_svd", opt, cfg, seed=seed, **train_kwargs
        )
    return results

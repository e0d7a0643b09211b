"""Deterministic synthetic task streams that genuinely interfere.

All families share the input space across tasks but change the decision rule,
so sequential training without protection measurably forgets:

- rotated_gaussians: class-mean blobs on a circle in the first two input
  coordinates, rotated by 2*pi*(t-1)/T per task, plus a fixed per-class anchor
  component in the remaining coordinates. The rotation makes adjacent tasks
  relabel nearby regions (interference); the anchors give every class a
  stable signature shared by all tasks, so there is structure worth
  preserving and single-task optima stay reachable.
- permuted_features: the same (unrotated) blobs with a per-task seeded
  permutation of the input coordinates (signal moves to different axes).
- subspace_regression: each task's true linear map reads a distinct slice of a
  shared orthogonal input basis.

Generation is a pure function of the spec: identical specs produce identical
bytes. Train and test splits come from disjoint seed substreams.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .network import NetworkState, forward_batch
from .seeding import substream

__all__ = [
    "TaskData",
    "TaskStreamSpec",
    "evaluate",
    "export_csv",
    "generate",
]

FAMILIES = ("rotated_gaussians", "permuted_features", "subspace_regression")


@dataclass
class TaskData:
    """One task's train/test splits."""

    task_id: int
    kind: str  # "classification" | "regression"
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    class_count: int | None = None
    target_dim: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("classification", "regression"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        for name in ("train_x", "test_x"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 2 or arr.shape[0] < 1:
                raise ValueError(f"{name} must be a nonempty (N, d) array")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            setattr(self, name, arr)
        if self.kind == "classification":
            if self.class_count is None or self.class_count < 2:
                raise ValueError("classification tasks need class_count >= 2")
            for name in ("train_y", "test_y"):
                y = np.asarray(getattr(self, name), dtype=np.int64)
                if y.min() < 0 or y.max() >= self.class_count:
                    raise ValueError(f"{name} labels out of range")
                counts = np.bincount(y, minlength=self.class_count)
                if counts.max() - counts.min() > 1:
                    raise ValueError(f"{name} classes not balanced within +-1")
                setattr(self, name, y)
        else:
            if self.target_dim is None or self.target_dim < 1:
                raise ValueError("regression tasks need target_dim >= 1")
            for name in ("train_y", "test_y"):
                y = np.asarray(getattr(self, name), dtype=np.float64)
                if y.shape[1:] != (self.target_dim,):
                    raise ValueError(f"{name} must be (N, target_dim)")
                setattr(self, name, y)

    @property
    def dimension(self) -> int:
        return int(self.train_x.shape[1])


@dataclass(frozen=True)
class TaskStreamSpec:
    family: str
    task_count: int = 5
    train_per_task: int = 1000
    test_per_task: int = 500
    dimension: int = 16
    noise: float = 0.4
    seed: int = 0
    class_count: int = 4
    target_dim: int = 4
    radius: float = 3.0
    anchor_scale: float = 0.8

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown task family {self.family!r}")
        if self.task_count < 1:
            raise ValueError("task_count must be >= 1")
        if self.train_per_task < 1 or self.test_per_task < 1:
            raise ValueError("split sizes must be positive")
        if self.dimension < 2:
            raise ValueError("dimension must be >= 2")
        if self.noise < 0 or self.anchor_scale < 0:
            raise ValueError("noise and anchor_scale must be >= 0")
        if self.family == "subspace_regression" and self.dimension < self.task_count:
            raise ValueError("subspace_regression needs dimension >= task_count")
        if self.family != "subspace_regression" and self.class_count < 2:
            raise ValueError("classification families need class_count >= 2")
        if self.target_dim < 1:
            raise ValueError("target_dim must be >= 1")


def _class_anchors(spec: TaskStreamSpec) -> np.ndarray:
    # Fixed per-class component in the non-rotating coordinates, shared by
    # every task of the stream.
    anchors = np.zeros((spec.class_count, spec.dimension))
    extra = spec.dimension - 2
    if extra > 0 and spec.anchor_scale > 0:
        rng = substream(spec.seed, "tasks", spec.family, "anchors")
        raw = rng.standard_normal((spec.class_count, extra))
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
        anchors[:, 2:] = spec.radius * spec.anchor_scale * raw
    return anchors


def _class_means(
    spec: TaskStreamSpec, anchors: np.ndarray, task_index: int, rotated: bool
) -> np.ndarray:
    # Means on a circle in the first two coordinates; task t rotates all means
    # by 2*pi*(t-1)/T when the family asks for rotation. Anchors stay fixed.
    angles = 2.0 * np.pi * np.arange(spec.class_count) / spec.class_count
    if rotated:
        angles = angles + 2.0 * np.pi * (task_index - 1) / spec.task_count
    means = anchors.copy()
    means[:, 0] = spec.radius * np.cos(angles)
    means[:, 1] = spec.radius * np.sin(angles)
    return means


def _blob_split(
    spec: TaskStreamSpec, means: np.ndarray, count: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    labels = np.arange(count) % spec.class_count  # balanced within +-1
    x = means[labels] + spec.noise * rng.standard_normal((count, spec.dimension))
    return x, labels


def _orthogonal_basis(dim: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))  # sign-fixed for determinism


def generate(spec: TaskStreamSpec) -> list[TaskData]:
    """Materialize the stream; a pure function of the spec."""
    tasks = []
    if spec.family == "subspace_regression":
        basis = _orthogonal_basis(spec.dimension, substream(spec.seed, "tasks", "basis"))
        slice_width = spec.dimension // spec.task_count
    else:
        anchors = _class_anchors(spec)
    for t in range(1, spec.task_count + 1):
        if spec.family in ("rotated_gaussians", "permuted_features"):
            rotated = spec.family == "rotated_gaussians"
            means = _class_means(spec, anchors, t, rotated)
            splits = {}
            for split in ("train", "test"):
                count = spec.train_per_task if split == "train" else spec.test_per_task
                rng = substream(spec.seed, "tasks", spec.family, t, split)
                splits[split] = _blob_split(spec, means, count, rng)
            (train_x, train_y), (test_x, test_y) = splits["train"], splits["test"]
            if spec.family == "permuted_features":
                perm = substream(spec.seed, "tasks", spec.family, t, "perm").permutation(
                    spec.dimension
                )
                train_x = train_x[:, perm]
                test_x = test_x[:, perm]
            tasks.append(
                TaskData(
                    task_id=t,
                    kind="classification",
                    train_x=train_x,
                    train_y=train_y,
                    test_x=test_x,
                    test_y=test_y,
                    class_count=spec.class_count,
                )
            )
        else:
            directions = basis[:, (t - 1) * slice_width : t * slice_width]
            weights_rng = substream(spec.seed, "tasks", spec.family, t, "weights")
            coeff = weights_rng.standard_normal((spec.target_dim, slice_width))
            true_map = coeff @ directions.T  # (target_dim, dimension)
            splits = {}
            for split in ("train", "test"):
                count = spec.train_per_task if split == "train" else spec.test_per_task
                rng = substream(spec.seed, "tasks", spec.family, t, split)
                x = rng.standard_normal((count, spec.dimension))
                y = x @ true_map.T + spec.noise * rng.standard_normal(
                    (count, spec.target_dim)
                )
                splits[split] = (x, y)
            (train_x, train_y), (test_x, test_y) = splits["train"], splits["test"]
            tasks.append(
                TaskData(
                    task_id=t,
                    kind="regression",
                    train_x=train_x,
                    train_y=train_y,
                    test_x=test_x,
                    test_y=test_y,
                    target_dim=spec.target_dim,
                )
            )
    return tasks


def evaluate(net: NetworkState, task: TaskData) -> float:
    """Test metric: fraction correct by argmax for classification, mean
    per-sample squared error for regression."""
    pred, _ = forward_batch(net, task.test_x)
    if task.kind == "classification":
        return float(np.mean(np.argmax(pred, axis=1) == task.test_y))
    diff = pred - task.test_y
    return float(np.sum(diff * diff) / diff.shape[0])


def export_csv(tasks: list[TaskData], train_path, test_path) -> None:
    """Write one CSV per split: task_id, label (or y0..ym-1), features."""
    for path, split in ((train_path, "train"), (test_path, "test")):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            dim = tasks[0].dimension
            if tasks[0].kind == "classification":
                label_cols = ["label"]
            else:
                label_cols = [f"y{j}" for j in range(tasks[0].target_dim)]
            writer.writerow(["task_id", *label_cols, *[f"f{j}" for j in range(dim)]])
            for task in tasks:
                x = task.train_x if split == "train" else task.test_x
                y = task.train_y if split == "train" else task.test_y
                for i in range(x.shape[0]):
                    if task.kind == "classification":
                        label = [int(y[i])]
                    else:
                        label = [repr(float(v)) for v in y[i]]
                    writer.writerow(
                        [task.task_id, *label, *[repr(float(v)) for v in x[i]]]
                    )

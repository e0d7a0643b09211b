"""Continual-learning metrics and the persisted run report.

Average Accuracy is the mean of the accuracy matrix's final row. Backward
Transfer follows the source formula verbatim, including its 1/t normalization
over t-1 summands (kept for comparability; see README).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

__all__ = [
    "AccuracyMatrix",
    "RunReport",
    "average_accuracy",
    "backward_transfer",
    "suite_delta",
]


class AccuracyMatrix:
    """Lower-triangular T x T matrix of test metrics.

    ``get(t, j)`` (1-indexed, matching the usual continual-learning notation)
    is the metric on task j after finishing task t, defined for j <= t.
    """

    def __init__(self, task_count: int) -> None:
        if task_count < 1:
            raise ValueError("task_count must be >= 1")
        self.task_count = task_count
        self._a = np.full((task_count, task_count), np.nan)

    def _check(self, t: int, j: int) -> None:
        if not (1 <= j <= t <= self.task_count):
            raise IndexError(
                f"need 1 <= j <= t <= {self.task_count}, got t={t} j={j}"
            )

    def set(self, t: int, j: int, value: float) -> None:
        self._check(t, j)
        self._a[t - 1, j - 1] = float(value)

    def get(self, t: int, j: int) -> float:
        self._check(t, j)
        value = self._a[t - 1, j - 1]
        if np.isnan(value):
            raise ValueError(f"entry (t={t}, j={j}) has not been filled")
        return float(value)

    def row(self, t: int) -> np.ndarray:
        """Entries (t, 1..t); raises if any is missing."""
        self._check(t, t)
        row = self._a[t - 1, :t]
        if np.any(np.isnan(row)):
            raise ValueError(f"row {t} is incomplete")
        return row.copy()

    def is_complete(self) -> bool:
        return not any(
            np.isnan(self._a[t, j]) for t in range(self.task_count) for j in range(t + 1)
        )

    def to_lists(self) -> list[list[float | None]]:
        return [
            [None if np.isnan(v) else float(v) for v in self._a[t]]
            for t in range(self.task_count)
        ]

    @classmethod
    def from_lists(cls, rows: list[list[float | None]]) -> "AccuracyMatrix":
        matrix = cls(len(rows))
        for t, row in enumerate(rows):
            if len(row) != len(rows):
                raise ValueError("accuracy matrix rows must be square")
            for j, value in enumerate(row):
                if value is not None:
                    matrix._a[t, j] = float(value)
        return matrix

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AccuracyMatrix):
            return NotImplemented
        return self.task_count == other.task_count and np.array_equal(
            self._a, other._a, equal_nan=True
        )


def average_accuracy(m: AccuracyMatrix) -> float:
    """Mean of the final row: (1/T) sum_j A[T, j]."""
    return float(np.mean(m.row(m.task_count)))


def backward_transfer(m: AccuracyMatrix, t: int) -> float:
    """(1/t) sum_{i=1}^{t-1} (A[t, i] - A[i, i]).

    Note the 1/t normalization over t-1 summands, implemented verbatim from
    the definition this mirrors. For t = 1 the sum is empty and the result is
    defined as 0.
    """
    if not 1 <= t <= m.task_count:
        raise IndexError(f"t must be in [1, {m.task_count}], got {t}")
    if t == 1:
        return 0.0
    total = 0.0
    for i in range(1, t):
        total += m.get(t, i) - m.get(i, i)
    return total / t


def suite_delta(before, after) -> float:
    """Mean elementwise difference ``after - before`` over an evaluation suite."""
    before = np.asarray(before, dtype=np.float64)
    after = np.asarray(after, dtype=np.float64)
    if before.shape != after.shape or before.ndim != 1 or before.shape[0] < 1:
        raise ValueError("before/after must be nonempty vectors of equal length")
    return float(np.mean(after - before))


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return [_to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, float) and np.isnan(value):
        return None
    if isinstance(value, dict):
        return {k: _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    return value


@dataclass
class RunReport:
    """Everything needed to reproduce and re-derive a run's metrics.

    Serialization is lossless: floats round-trip exactly through JSON's
    shortest-repr encoding, and ``aa`` is revalidated against the accuracy
    matrix on construction.
    """

    config: dict
    seed: int
    permutation_index: int
    task_order: list[int]
    trainer: str
    accuracy_matrix: AccuracyMatrix
    aa: float
    bwt: float
    interference_max: float | None
    first_order_inner_max: float | None
    importance_profiles: list[dict]
    rank_allocations: list[list[dict]]
    ability_before: list[float] | None = None
    ability_after: list[float] | None = None
    ability_deltas: list[float] | None = None
    warnings: list[str] = field(default_factory=list)
    wall_clock_seconds: float = 0.0
    schema_version: int = 1

    def __post_init__(self) -> None:
        if abs(self.aa - average_accuracy(self.accuracy_matrix)) > 1e-12:
            raise ValueError("aa does not equal the mean of the final matrix row")

    def to_json_dict(self) -> dict:
        out = {
            "schema_version": self.schema_version,
            "config": _to_jsonable(self.config),
            "seed": self.seed,
            "permutation_index": self.permutation_index,
            "task_order": list(self.task_order),
            "trainer": self.trainer,
            "accuracy_matrix": self.accuracy_matrix.to_lists(),
            "aa": self.aa,
            "bwt": self.bwt,
            "interference_max": _to_jsonable(self.interference_max),
            "first_order_inner_max": _to_jsonable(self.first_order_inner_max),
            "importance_profiles": _to_jsonable(self.importance_profiles),
            "rank_allocations": _to_jsonable(self.rank_allocations),
            "ability_before": _to_jsonable(self.ability_before),
            "ability_after": _to_jsonable(self.ability_after),
            "ability_deltas": _to_jsonable(self.ability_deltas),
            "warnings": list(self.warnings),
            "wall_clock_seconds": self.wall_clock_seconds,
        }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2, allow_nan=False)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def from_json_dict(cls, data: dict) -> "RunReport":
        return cls(
            config=data["config"],
            seed=data["seed"],
            permutation_index=data["permutation_index"],
            task_order=list(data["task_order"]),
            trainer=data["trainer"],
            accuracy_matrix=AccuracyMatrix.from_lists(data["accuracy_matrix"]),
            aa=data["aa"],
            bwt=data["bwt"],
            interference_max=data["interference_max"],
            first_order_inner_max=data["first_order_inner_max"],
            importance_profiles=data["importance_profiles"],
            rank_allocations=data["rank_allocations"],
            ability_before=data["ability_before"],
            ability_after=data["ability_after"],
            ability_deltas=data["ability_deltas"],
            warnings=list(data["warnings"]),
            wall_clock_seconds=data["wall_clock_seconds"],
            schema_version=data["schema_version"],
        )

    @classmethod
    def load(cls, path) -> "RunReport":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))

"""Shared data model: metric frames, labels, scores, and diagnosis reports.

All types are immutable after construction (arrays are frozen), validate
their invariants eagerly, and round-trip exactly through ``to_dict`` /
``from_dict`` (floats survive JSON via repr-based encoding).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyIntersection, LengthMismatch, NonUniformSpacing, ShapeMismatch


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a)
    out.flags.writeable = False
    return out


def _check_finite(values: np.ndarray, names: Sequence[str]) -> None:
    bad = ~np.isfinite(values)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValueError(
            f"non-finite value at row {r}, column '{names[c]}' "
            f"({int(bad.sum())} offending cells total)"
        )


@dataclass(frozen=True, eq=False)
class MetricFrame:
    """d timestamps x N metric columns of monitoring data.

    Timestamps are integer epoch-seconds, strictly increasing with uniform
    spacing equal to ``interval``. Non-finite cells are rejected.
    """

    timestamps: np.ndarray
    values: np.ndarray
    names: tuple[str, ...]
    interval: int

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        names = tuple(self.names)
        if vals.ndim != 2:
            raise ShapeMismatch(f"values must be 2-D, got shape {vals.shape}")
        if ts.shape[0] != vals.shape[0]:
            raise ShapeMismatch(
                f"{ts.shape[0]} timestamps vs {vals.shape[0]} value rows"
            )
        if vals.shape[1] != len(names):
            raise ShapeMismatch(
                f"{vals.shape[1]} columns vs {len(names)} names"
            )
        if len(set(names)) != len(names):
            raise ValueError("metric names must be unique")
        if ts.shape[0] >= 2:
            diffs = np.diff(ts)
            if not (diffs > 0).all():
                raise NonUniformSpacing("timestamps must be strictly increasing")
            if not (diffs == self.interval).all():
                raise NonUniformSpacing(
                    f"spacing must equal interval={self.interval}, "
                    f"found {sorted(set(diffs.tolist()))}"
                )
        _check_finite(vals, names)
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "values", _frozen(vals))
        object.__setattr__(self, "names", names)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_metrics(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        return (
            isinstance(other, MetricFrame)
            and self.interval == other.interval
            and self.names == other.names
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.values, other.values)
        )

    def to_dict(self) -> dict:
        return {
            "timestamps": self.timestamps.tolist(),
            "values": self.values.tolist(),
            "names": list(self.names),
            "interval": self.interval,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricFrame":
        return cls(
            timestamps=np.asarray(d["timestamps"], dtype=np.int64),
            values=np.asarray(d["values"], dtype=np.float64),
            names=tuple(d["names"]),
            interval=int(d["interval"]),
        )


@dataclass(frozen=True, eq=False)
class LabelSeries:
    """Binary anomaly labels aligned to a MetricFrame's timestamps."""

    timestamps: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        lab = np.asarray(self.labels, dtype=np.int64)
        if ts.shape != lab.shape or ts.ndim != 1:
            raise ShapeMismatch("timestamps and labels must be equal-length 1-D")
        if not np.isin(lab, (0, 1)).all():
            bad = lab[~np.isin(lab, (0, 1))][0]
            raise ValueError(f"labels must be 0 or 1, found {bad}")
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "labels", _frozen(lab))

    def __len__(self) -> int:
        return self.labels.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, LabelSeries)
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.labels, other.labels)
        )

    def anomaly_fraction(self) -> float:
        return float(self.labels.mean()) if len(self) else 0.0

    def to_dict(self) -> dict:
        return {"timestamps": self.timestamps.tolist(), "labels": self.labels.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LabelSeries":
        return cls(
            timestamps=np.asarray(d["timestamps"], dtype=np.int64),
            labels=np.asarray(d["labels"], dtype=np.int64),
        )


@dataclass(frozen=True, eq=False)
class SelectedFrame:
    """Metric data after selection / dimension reduction.

    ``method`` is "correlation", "pca", or "none". The correlation path keeps
    original column identity (``source_indices`` into the parent frame); the
    PCA path records projection matrix plus per-column mean/std so new data
    can be projected identically.
    """

    timestamps: np.ndarray
    values: np.ndarray
    columns: tuple[str, ...]
    method: str
    source_indices: Optional[tuple[int, ...]] = None
    projection: Optional[np.ndarray] = None
    col_means: Optional[np.ndarray] = None
    col_stds: Optional[np.ndarray] = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        ts = np.asarray(self.timestamps, dtype=np.int64)
        if vals.ndim != 2 or vals.shape[0] != ts.shape[0]:
            raise ShapeMismatch("values must be d x n with one row per timestamp")
        if vals.shape[1] != len(self.columns):
            raise ShapeMismatch("column count must match names")
        if self.method not in ("correlation", "pca", "none"):
            raise ValueError(f"unknown selection method {self.method!r}")
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "values", _frozen(vals))
        object.__setattr__(self, "columns", tuple(self.columns))
        if self.source_indices is not None:
            object.__setattr__(self, "source_indices", tuple(int(i) for i in self.source_indices))
        for name in ("projection", "col_means", "col_stds"):
            arr = getattr(self, name)
            if arr is not None:
                object.__setattr__(self, name, _frozen(np.asarray(arr, dtype=np.float64)))

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SelectedFrame):
            return False
        def same(a, b):
            if a is None or b is None:
                return a is b
            return np.array_equal(a, b)
        return (
            self.method == other.method
            and self.columns == other.columns
            and self.source_indices == other.source_indices
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.values, other.values)
            and same(self.projection, other.projection)
            and same(self.col_means, other.col_means)
            and same(self.col_stds, other.col_stds)
        )

    def to_dict(self) -> dict:
        return {
            "timestamps": self.timestamps.tolist(),
            "values": self.values.tolist(),
            "columns": list(self.columns),
            "method": self.method,
            "source_indices": list(self.source_indices) if self.source_indices is not None else None,
            "projection": self.projection.tolist() if self.projection is not None else None,
            "col_means": self.col_means.tolist() if self.col_means is not None else None,
            "col_stds": self.col_stds.tolist() if self.col_stds is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SelectedFrame":
        def arr(key):
            return np.asarray(d[key], dtype=np.float64) if d.get(key) is not None else None
        return cls(
            timestamps=np.asarray(d["timestamps"], dtype=np.int64),
            values=np.asarray(d["values"], dtype=np.float64),
            columns=tuple(d["columns"]),
            method=d["method"],
            source_indices=tuple(d["source_indices"]) if d.get("source_indices") is not None else None,
            projection=arr("projection"),
            col_means=arr("col_means"),
            col_stds=arr("col_stds"),
        )


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """d x k matrix of column-normalized base-learner anomaly scores."""

    values: np.ndarray
    learner_names: tuple[str, ...]
    norm_means: np.ndarray
    norm_stds: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ShapeMismatch("score matrix must be 2-D")
        if vals.shape[1] != len(self.learner_names):
            raise ShapeMismatch("one learner name per column required")
        means = np.asarray(self.norm_means, dtype=np.float64)
        stds = np.asarray(self.norm_stds, dtype=np.float64)
        if means.shape != (vals.shape[1],) or stds.shape != (vals.shape[1],):
            raise ShapeMismatch("normalization stats must have one entry per column")
        object.__setattr__(self, "values", _frozen(vals))
        object.__setattr__(self, "learner_names", tuple(self.learner_names))
        object.__setattr__(self, "norm_means", _frozen(means))
        object.__setattr__(self, "norm_stds", _frozen(stds))

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_learners(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        return (
            isinstance(other, ScoreMatrix)
            and self.learner_names == other.learner_names
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.norm_means, other.norm_means)
            and np.array_equal(self.norm_stds, other.norm_stds)
        )

    def to_dict(self) -> dict:
        return {
            "values": self.values.tolist(),
            "learner_names": list(self.learner_names),
            "norm_means": self.norm_means.tolist(),
            "norm_stds": self.norm_stds.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreMatrix":
        return cls(
            values=np.asarray(d["values"], dtype=np.float64),
            learner_names=tuple(d["learner_names"]),
            norm_means=np.asarray(d["norm_means"], dtype=np.float64),
            norm_stds=np.asarray(d["norm_stds"], dtype=np.float64),
        )


@dataclass(frozen=True)
class EvaluationBlock:
    """Detection quality on a labeled span; seconds is wall-clock or None."""

    precision: float
    recall: float
    f1: float
    seconds: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "seconds": self.seconds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationBlock":
        return cls(
            precision=d["precision"], recall=d["recall"],
            f1=d["f1"], seconds=d.get("seconds"),
        )


@dataclass(frozen=True)
class RankedCause:
    metric: str
    count: int
    rank: int

    def to_dict(self) -> dict:
        return {"metric": self.metric, "count": self.count, "rank": self.rank}


@dataclass(frozen=True, eq=False)
class DiagnosisReport:
    """Verdicts, probabilities, optional evaluation, and ranked root causes.

    Verdicts are derived from probabilities: verdict = 1 iff probability
    is at or above ``threshold``.
    """

    probabilities: np.ndarray
    threshold: float
    verdicts: np.ndarray = field(default=None)  # derived when omitted
    evaluation: Optional[EvaluationBlock] = None
    root_causes: Optional[tuple[RankedCause, ...]] = None

    def __post_init__(self):
        probs = np.asarray(self.probabilities, dtype=np.float64)
        if probs.ndim != 1:
            raise ShapeMismatch("probabilities must be 1-D")
        if ((probs < 0) | (probs > 1)).any():
            raise ValueError("probabilities must lie in [0, 1]")
        if self.verdicts is None:
            verdicts = (probs >= self.threshold).astype(np.int64)
        else:
            verdicts = np.asarray(self.verdicts, dtype=np.int64)
            if verdicts.shape != probs.shape:
                raise ShapeMismatch("verdicts must align with probabilities")
            if not np.array_equal(verdicts, (probs >= self.threshold).astype(np.int64)):
                raise ValueError("verdicts must equal probabilities >= threshold")
        object.__setattr__(self, "probabilities", _frozen(probs))
        object.__setattr__(self, "verdicts", _frozen(verdicts))
        if self.root_causes is not None:
            object.__setattr__(self, "root_causes", tuple(self.root_causes))

    def __eq__(self, other):
        return (
            isinstance(other, DiagnosisReport)
            and self.threshold == other.threshold
            and np.array_equal(self.probabilities, other.probabilities)
            and np.array_equal(self.verdicts, other.verdicts)
            and self.evaluation == other.evaluation
            and self.root_causes == other.root_causes
        )

    def to_dict(self) -> dict:
        return {
            "probabilities": self.probabilities.tolist(),
            "threshold": self.threshold,
            "verdicts": self.verdicts.tolist(),
            "evaluation": self.evaluation.to_dict() if self.evaluation else None,
            "root_causes": [c.to_dict() for c in self.root_causes] if self.root_causes is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiagnosisReport":
        causes = d.get("root_causes")
        return cls(
            probabilities=np.asarray(d["probabilities"], dtype=np.float64),
            threshold=d["threshold"],
            verdicts=np.asarray(d["verdicts"], dtype=np.int64),
            evaluation=EvaluationBlock.from_dict(d["evaluation"]) if d.get("evaluation") else None,
            root_causes=tuple(RankedCause(**c) for c in causes) if causes is not None else None,
        )


def align(frame: MetricFrame, labels: LabelSeries) -> tuple[MetricFrame, LabelSeries]:
    """Restrict frame and labels to their common timestamps, in time order.

    Raises EmptyIntersection when the two share no timestamp. Idempotent.
    """
    if frame.n_samples == 0 or len(labels) == 0:
        raise LengthMismatch("align requires nonempty inputs")
    common = np.intersect1d(frame.timestamps, labels.timestamps)
    if common.size == 0:
        raise EmptyIntersection("no common timestamps between frame and labels")
    if common.size == frame.n_samples == len(labels):
        return frame, labels
    f_idx = np.searchsorted(frame.timestamps, common)
    l_idx = np.searchsorted(labels.timestamps, common)
    new_frame = MetricFrame(
        timestamps=common,
        values=frame.values[f_idx],
        names=frame.names,
        interval=frame.interval,
    )
    new_labels = LabelSeries(timestamps=common, labels=labels.labels[l_idx])
    return new_frame, new_labels


def dumps_json(obj: dict) -> str:
    """Canonical JSON encoding: sorted keys, no NaN, repr-exact floats."""
    return json.dumps(obj, sort_keys=True, allow_nan=False, indent=2)

"""Dataset loading (generic CSV, SMD layout) and synthetic data generation.

The generator samples a linear-Gaussian structural-equation model over a
random DAG and injects sustained mean-shift faults into root-cause metrics
inside periodic anomaly windows, so detection and localization quality can
be measured against exact ground truth.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import LabelSeries, MetricFrame
from .errors import (
    EmptyGroundTruth,
    InvalidConfig,
    NonBinaryLabel,
    ParseError,
    RowCountMismatch,
)


@dataclass(frozen=True)
class GroundTruth:
    """Known causal edges, fault origins, and anomaly windows of a dataset.

    ``windows`` are inclusive [start, end] timestamp pairs.
    """

    edges: tuple[tuple[str, str], ...]
    root_causes: tuple[str, ...]
    windows: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((str(a), str(b)) for a, b in self.edges))
        object.__setattr__(self, "root_causes", tuple(str(r) for r in self.root_causes))
        object.__setattr__(self, "windows", tuple((int(s), int(e)) for s, e in self.windows))
        if self.windows and not self.root_causes:
            raise EmptyGroundTruth("anomaly windows present but no root causes listed")
        for s, e in self.windows:
            if e < s:
                raise InvalidConfig(f"window [{s}, {e}] ends before it starts")

    def to_dict(self) -> dict:
        return {
            "edges": [list(e) for e in self.edges],
            "root_causes": list(self.root_causes),
            "windows": [list(w) for w in self.windows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(
            edges=tuple((a, b) for a, b in d["edges"]),
            root_causes=tuple(d["root_causes"]),
            windows=tuple((s, e) for s, e in d["windows"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "GroundTruth":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _parse_int(cell: str, where: str) -> int:
    try:
        return int(cell)
    except ValueError:
        raise ParseError(f"expected integer at {where}, got {cell!r}") from None


def _parse_float(cell: str, where: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"expected number at {where}, got {cell!r}") from None


def load_csv(path, label_path=None) -> tuple[MetricFrame, Optional[LabelSeries]]:
    """Load `timestamp,<m1>,...,<mN>` CSV, optionally with a label CSV.

    The label file has header `timestamp,label` with 0/1 values. Sampling
    interval is inferred from the first timestamp gap and must be uniform.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 2 or rows[0][0] != "timestamp":
        raise ParseError(f"{path}: expected header 'timestamp,<name>,...'")
    names = tuple(rows[0][1:])
    timestamps = []
    values = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(names) + 1:
            raise ParseError(f"{path}:{r}: expected {len(names) + 1} fields, got {len(row)}")
        timestamps.append(_parse_int(row[0], f"{path}:{r} col 1"))
        values.append([_parse_float(c, f"{path}:{r} col {i + 2}") for i, c in enumerate(row[1:])])
    ts = np.asarray(timestamps, dtype=np.int64)
    interval = int(ts[1] - ts[0]) if ts.shape[0] >= 2 else 1
    frame = MetricFrame(
        timestamps=ts,
        values=np.asarray(values, dtype=np.float64).reshape(len(timestamps), len(names)),
        names=names,
        interval=interval,
    )
    if label_path is None:
        return frame, None
    return frame, _load_label_csv(label_path)


def _load_label_csv(path) -> LabelSeries:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["timestamp", "label"]:
        raise ParseError(f"{path}: expected header 'timestamp,label'")
    timestamps = []
    labels = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise ParseError(f"{path}:{r}: expected 2 fields, got {len(row)}")
        timestamps.append(_parse_int(row[0], f"{path}:{r} col 1"))
        val = _parse_int(row[1], f"{path}:{r} col 2")
        if val not in (0, 1):
            raise NonBinaryLabel(f"{path}:{r}: label must be 0 or 1, got {val}")
        labels.append(val)
    return LabelSeries(
        timestamps=np.asarray(timestamps, dtype=np.int64),
        labels=np.asarray(labels, dtype=np.int64),
    )


def load_smd(values_path, labels_path) -> tuple[MetricFrame, LabelSeries]:
    """Load one SMD machine: headerless float CSV plus one 0/1 label per line.

    Timestamps 0,1,2,... are assigned with interval 1; columns are named
    "m0", "m1", ... in file order.
    """
    with open(values_path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [row for row in rows if row]
    if not rows:
        raise ParseError(f"{values_path}: empty file")
    width = len(rows[0])
    values = []
    for r, row in enumerate(rows, start=1):
        if len(row) != width:
            raise ParseError(f"{values_path}:{r}: expected {width} fields, got {len(row)}")
        values.append([_parse_float(c, f"{values_path}:{r} col {i + 1}") for i, c in enumerate(row)])
    labels = []
    with open(labels_path) as fh:
        for r, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            val = _parse_int(line, f"{labels_path}:{r}")
            if val not in (0, 1):
                raise NonBinaryLabel(f"{labels_path}:{r}: label must be 0 or 1, got {val}")
            labels.append(val)
    if len(labels) != len(values):
        raise RowCountMismatch(
            f"{len(values)} value rows but {len(labels)} labels"
        )
    ts = np.arange(len(values), dtype=np.int64)
    frame = MetricFrame(
        timestamps=ts,
        values=np.asarray(values, dtype=np.float64),
        names=tuple(f"m{i}" for i in range(width)),
        interval=1,
    )
    return frame, LabelSeries(timestamps=ts, labels=np.asarray(labels, dtype=np.int64))


@dataclass(frozen=True)
class GenConfig:
    """Parameters of the synthetic monitoring-data generator.

    ``magnitude`` is the injected mean shift in units of ``noise_std``.
    Anomaly windows are spread evenly: window w covers ``window_len`` rows
    centered inside the w-th of ``n_windows`` equal periods. When ``edges``
    is given the random DAG is replaced by exactly those edges; when
    ``root_causes`` is given it overrides the random source-node choice.
    """

    n_metrics: int
    n_samples: int
    edge_prob: float = 0.3
    n_windows: int = 0
    window_len: int = 0
    magnitude: float = 6.0
    noise_std: float = 1.0
    n_root_causes: int = 1
    interval: int = 1
    edges: Optional[tuple[tuple[str, str], ...]] = None
    root_causes: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.n_metrics < 1 or self.n_samples < 1:
            raise InvalidConfig("need at least one metric and one sample")
        if not 0.0 <= self.edge_prob <= 1.0:
            raise InvalidConfig("edge_prob must lie in [0, 1]")
        if self.noise_std <= 0:
            raise InvalidConfig("noise_std must be positive")
        if self.n_windows < 0 or self.window_len < 0:
            raise InvalidConfig("window counts must be nonnegative")
        if self.n_windows > 0:
            if self.window_len < 1:
                raise InvalidConfig("window_len must be >= 1 when windows requested")
            period = self.n_samples // self.n_windows
            if period < self.window_len:
                raise InvalidConfig(
                    f"{self.n_samples} samples cannot hold {self.n_windows} "
                    f"windows of length {self.window_len}"
                )
            if self.n_root_causes < 1 and not self.root_causes:
                raise InvalidConfig("windows requested but no root causes")


def _metric_names(n: int) -> tuple[str, ...]:
    return tuple(f"m{i}" for i in range(n))


def _resolve_edges(config: GenConfig, names: Sequence[str], rng: np.random.Generator):
    """Index pairs (i, j) with i -> j; topological order is index order."""
    index = {name: i for i, name in enumerate(names)}
    if config.edges is not None:
        pairs = []
        for a, b in config.edges:
            if a not in index or b not in index:
                raise InvalidConfig(f"edge ({a}, {b}) references unknown metric")
            if index[a] >= index[b]:
                raise InvalidConfig(
                    f"edge ({a}, {b}) violates index order; list edges parent-first"
                )
            pairs.append((index[a], index[b]))
        return sorted(set(pairs))
    n = len(names)
    draws = rng.random((n, n))
    return [(i, j) for i in range(n) for j in range(i + 1, n) if draws[i, j] < config.edge_prob]


def _window_rows(config: GenConfig) -> list[tuple[int, int]]:
    """Inclusive [start, end] row ranges of each anomaly window."""
    if config.n_windows == 0:
        return []
    period = config.n_samples // config.n_windows
    offset = (period - config.window_len) // 2
    return [
        (w * period + offset, w * period + offset + config.window_len - 1)
        for w in range(config.n_windows)
    ]


def generate(config: GenConfig, seed: int) -> tuple[MetricFrame, LabelSeries, GroundTruth]:
    """Sample the SEM, inject faults, and return data with ground truth.

    Each metric is a weighted sum of its DAG parents plus Gaussian noise;
    weights are uniform on +-[0.5, 1.5]. During each anomaly window a shift
    of ``magnitude * noise_std`` is added to every root-cause metric's noise
    term and propagates downstream. Root causes default to a random sample
    of the DAG's source nodes, mirroring faults injected from outside the
    modeled system. Deterministic in (config, seed).
    """
    rng = np.random.default_rng(seed)
    names = _metric_names(config.n_metrics)
    pairs = _resolve_edges(config, names, rng)
    weights = {}
    for i, j in pairs:
        w = rng.uniform(0.5, 1.5)
        if rng.random() < 0.5:
            w = -w
        weights[(i, j)] = w

    in_deg = np.zeros(config.n_metrics, dtype=np.int64)
    for _, j in pairs:
        in_deg[j] += 1
    sources = [i for i in range(config.n_metrics) if in_deg[i] == 0]

    if config.root_causes is not None:
        index = {name: i for i, name in enumerate(names)}
        unknown = [r for r in config.root_causes if r not in index]
        if unknown:
            raise InvalidConfig(f"unknown root-cause metrics: {unknown}")
        rc_idx = sorted(index[r] for r in config.root_causes)
    elif config.n_windows > 0:
        n_rc = min(config.n_root_causes, len(sources))
        rc_idx = sorted(rng.choice(sources, size=n_rc, replace=False).tolist())
    else:
        rc_idx = []

    windows = _window_rows(config)
    d = config.n_samples
    noise = rng.normal(0.0, config.noise_std, size=(d, config.n_metrics))
    shift = config.magnitude * config.noise_std
    for start, end in windows:
        for i in rc_idx:
            noise[start : end + 1, i] += shift

    parents: list[list[int]] = [[] for _ in range(config.n_metrics)]
    for i, j in pairs:
        parents[j].append(i)
    values = np.empty((d, config.n_metrics), dtype=np.float64)
    for j in range(config.n_metrics):
        col = noise[:, j].copy()
        for i in parents[j]:
            col += weights[(i, j)] * values[:, i]
        values[:, j] = col

    timestamps = np.arange(d, dtype=np.int64) * config.interval
    labels = np.zeros(d, dtype=np.int64)
    for start, end in windows:
        labels[start : end + 1] = 1

    frame = MetricFrame(timestamps=timestamps, values=values, names=names, interval=config.interval)
    series = LabelSeries(timestamps=timestamps, labels=labels)
    truth = GroundTruth(
        edges=tuple((names[i], names[j]) for i, j in pairs),
        root_causes=tuple(names[i] for i in rc_idx),
        windows=tuple(
            (int(timestamps[s]), int(timestamps[e])) for s, e in windows
        ),
    )
    return frame, series, truth

"""Sliding-window community connectivity and path trajectories.

For each window the Pearson correlation of every ROI pair is averaged over
the two communities' members, giving an ``N x N`` community matrix. The
upper-triangle entries, read across windows, form one trajectory per
community pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, DataError
from .partitions import PartitionScheme, all_pairs

DEGENERACY_TOL = 1e-10


@dataclass(frozen=True)
class WindowSpec:
    window_length: int = 30
    stride: int = 15

    def __post_init__(self):
        if self.window_length < 2:
            raise ConfigError(f"window_length must be >= 2, got {self.window_length}")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")


@dataclass
class RoiTimeSeries:
    subject_id: str
    values: np.ndarray  # (num_rois, scan_length)
    label: int

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"subject {self.subject_id}: values must be 2-D (rois x time), got {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise DataError(f"subject {self.subject_id}: time series contains NaN or infinite values")

    @property
    def num_rois(self) -> int:
        return self.values.shape[0]

    @property
    def scan_length(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PathTrajectory:
    pair: tuple[int, int]
    weights: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.weights)


@dataclass
class PathSet:
    """All trajectories of one subject, ordered by ``path_index``."""

    subject_id: str
    label: int
    pairs: list[tuple[int, int]]
    weights: np.ndarray  # (L, T)
    degenerate: int = 0

    def __len__(self):
        return len(self.pairs)

    def __iter__(self) -> Iterator[PathTrajectory]:
        for pair, w in zip(self.pairs, self.weights):
            yield PathTrajectory(pair, w)

    def __getitem__(self, k) -> PathTrajectory:
        return PathTrajectory(self.pairs[k], self.weights[k])

    @property
    def n_windows(self) -> int:
        return self.weights.shape[1]


def window_count(scan_length: int, spec: WindowSpec, subject_id: str | None = None) -> int:
    if scan_length < spec.window_length:
        who = f"subject {subject_id}: " if subject_id is not None else ""
        raise DataError(f"{who}scan length {scan_length} is shorter than window length {spec.window_length}")
    return (scan_length - spec.window_length) // spec.stride + 1


def window_starts(scan_length: int, spec: WindowSpec, subject_id: str | None = None) -> np.ndarray:
    return np.arange(window_count(scan_length, spec, subject_id), dtype=np.int64) * spec.stride


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation; 0.0 when either series has no variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise DataError(f"pearson needs two equal-length 1-D series of length >= 2, got {x.shape} and {y.shape}")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    n = x.size
    if sxx <= n * (DEGENERACY_TOL * np.abs(x).max()) ** 2 or syy <= n * (DEGENERACY_TOL * np.abs(y).max()) ** 2:
        return 0.0
    return float(min(1.0, max(-1.0, (xc @ yc) / math.sqrt(sxx * syy))))


def connectivity_series(ts: RoiTimeSeries, scheme: PartitionScheme, spec: WindowSpec) -> tuple[np.ndarray, int]:
    """Community matrices for all windows: ``(T, N, N)`` plus degenerate-series count."""
    if ts.num_rois != scheme.num_rois:
        raise DataError(
            f"subject {ts.subject_id}: {ts.num_rois} ROIs but scheme {scheme.name!r} expects {scheme.num_rois}"
        )
    starts = window_starts(ts.scan_length, spec, ts.subject_id)
    return kernels.window_connectivity(
        ts.values, starts, spec.window_length, scheme.assignment_array(), scheme.n_communities, DEGENERACY_TOL
    )


def window_connectivity(ts: RoiTimeSeries, scheme: PartitionScheme, spec: WindowSpec, t: int) -> np.ndarray:
    n_windows = window_count(ts.scan_length, spec, ts.subject_id)
    if not 0 <= t < n_windows:
        raise DataError(f"window {t} outside [0, {n_windows})")
    start = t * spec.stride
    sub = RoiTimeSeries(ts.subject_id, ts.values[:, start:start + spec.window_length], ts.label)
    w, _ = connectivity_series(sub, scheme, WindowSpec(spec.window_length, spec.stride))
    return w[0]


def extract_paths(ts: RoiTimeSeries, scheme: PartitionScheme, spec: WindowSpec) -> PathSet:
    series, degenerate = connectivity_series(ts, scheme, spec)
    pairs = all_pairs(scheme.n_communities)
    iu, ju = np.triu_indices(scheme.n_communities, k=1)
    weights = np.ascontiguousarray(series[:, iu, ju].T)
    return PathSet(ts.subject_id, ts.label, pairs, weights, degenerate)


# ---------------------------------------------------------------------------
# file formats (see docs/formats.md)
# ---------------------------------------------------------------------------

def _parse_header(line: str, path) -> dict[str, str]:
    out = {}
    for item in line.strip().split(","):
        if "=" not in item:
            raise DataError(f"{path}: malformed header item {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _fmt(v: float) -> str:
    return repr(float(v))


def write_timeseries(ts: RoiTimeSeries, path):
    lines = [f"subject_id={ts.subject_id},label={ts.label}"]
    lines.extend(",".join(_fmt(v) for v in row) for row in ts.values)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_timeseries(path) -> RoiTimeSeries:
    p = Path(path)
    try:
        text = p.read_text("utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {p}: {exc}") from None
    if not text:
        raise DataError(f"{p}: empty file")
    head = _parse_header(text[0], p)
    if "subject_id" not in head or "label" not in head:
        raise DataError(f"{p}: header must carry subject_id and label")
    try:
        values = np.array([[float(v) for v in line.split(",")] for line in text[1:] if line.strip()])
        label = int(head["label"])
    except ValueError as exc:
        raise DataError(f"{p}: {exc}") from None
    if values.ndim != 2 or values.size == 0:
        raise DataError(f"{p}: ROI rows are empty or ragged")
    return RoiTimeSeries(head["subject_id"], values, label)


def write_paths(ps: PathSet, path, window: WindowSpec | None = None, scheme: str | None = None):
    meta = [f"subject_id={ps.subject_id}", f"label={ps.label}", f"degenerate={ps.degenerate}"]
    if window is not None:
        meta += [f"window_length={window.window_length}", f"stride={window.stride}"]
    if scheme is not None:
        meta.append(f"scheme={scheme}")
    lines = [",".join(meta), ",".join(["i", "j"] + [f"w{t}" for t in range(ps.n_windows)])]
    for (i, j), w in zip(ps.pairs, ps.weights):
        lines.append(",".join([str(i), str(j)] + [_fmt(v) for v in w]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_paths(path) -> PathSet:
    p = Path(path)
    text = p.read_text("utf-8").splitlines()
    if len(text) < 3:
        raise DataError(f"{p}: trajectory file needs a metadata line, a column header and at least one path")
    head = _parse_header(text[0], p)
    pairs, rows = [], []
    for line in text[2:]:
        if not line.strip():
            continue
        parts = line.split(",")
        pairs.append((int(parts[0]), int(parts[1])))
        rows.append([float(v) for v in parts[2:]])
    return PathSet(head["subject_id"], int(head["label"]), pairs, np.array(rows), int(head.get("degenerate", 0)))


def stack_paths(sets: Sequence[PathSet]) -> np.ndarray:
    """Stack subjects into ``(B, L, T)``; rejects mixed path counts or window counts."""
    if not sets:
        raise DataError("no subjects to stack")
    shapes = {ps.weights.shape for ps in sets}
    if len(shapes) != 1:
        raise DataError(f"subjects have mixed (paths, windows) shapes {sorted(shapes)}; use equal scan lengths")
    return np.stack([ps.weights for ps in sets])

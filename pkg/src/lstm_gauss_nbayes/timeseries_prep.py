"""Series ingestion, downsampling, min-max scaling, windowing and splitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateRange,
    EmptyDataset,
    FormatError,
    InvalidFactor,
    InvalidLag,
    InvalidWindow,
)

NORMAL = 0
ABNORMAL = 1


@dataclass(frozen=True, eq=False)
class TimeSeries:
    values: np.ndarray
    sample_interval: float = 1.0
    name: str = "series"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if values.size == 0:
            raise EmptyDataset("time series has no values")
        if not np.all(np.isfinite(values)):
            raise ValueError("time series contains NaN or Inf")
        if not self.sample_interval > 0:
            raise ValueError(f"sample_interval must be > 0, got {self.sample_interval}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class NormalizationParams:
    min: float
    max: float

    def __post_init__(self):
        if not self.max > self.min:
            raise DegenerateRange(f"max ({self.max}) must exceed min ({self.min})")


@dataclass(eq=False)
class Window:
    """A fixed-length subsequence.

    ``points`` are raw sensor values until the window passes through
    :func:`normalize_windows`, after which they lie in [0, 1].
    """

    points: np.ndarray
    label: Optional[int] = None
    source_offset: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1)
        if self.points.size < 2:
            raise InvalidWindow("a window needs at least 2 points")
        if self.label not in (None, NORMAL, ABNORMAL):
            raise ValueError(f"label must be 0, 1 or None, got {self.label!r}")

    def __len__(self):
        return self.points.size

    @property
    def is_normalized(self):
        return bool(np.all((self.points >= 0.0) & (self.points <= 1.0)))


@dataclass
class DatasetSplit:
    normal_train: list = field(default_factory=list)
    normal_valid: list = field(default_factory=list)
    normal_test: list = field(default_factory=list)
    abnormal_test: list = field(default_factory=list)

    PARTS = ("normal_train", "normal_valid", "normal_test", "abnormal_test")

    def all_windows(self):
        return self.normal_train + self.normal_valid + self.normal_test + self.abnormal_test


def downsample(series: TimeSeries, factor: int) -> TimeSeries:
    """Replace each block of ``factor`` consecutive points by its mean.

    A trailing partial block is dropped.
    """
    n = len(series)
    if not isinstance(factor, (int, np.integer)) or factor < 1 or factor > n:
        raise InvalidFactor(f"factor must be in [1, {n}], got {factor!r}")
    m = n // factor
    blocks = series.values[: m * factor].reshape(m, factor)
    return TimeSeries(blocks.mean(axis=1), series.sample_interval * factor, series.name)


def minmax_normalize(series: TimeSeries):
    lo = float(series.values.min())
    hi = float(series.values.max())
    if not hi > lo:
        raise DegenerateRange(f"series {series.name!r} is constant ({lo})")
    params = NormalizationParams(lo, hi)
    scaled = (series.values - lo) / (hi - lo)
    # exact endpoints regardless of rounding in the division
    scaled[series.values == lo] = 0.0
    scaled[series.values == hi] = 1.0
    return TimeSeries(scaled, series.sample_interval, series.name), params


def denormalize(series: TimeSeries, params: NormalizationParams) -> TimeSeries:
    values = series.values * (params.max - params.min) + params.min
    return TimeSeries(values, series.sample_interval, series.name)


def acf(series, lag: int) -> float:
    """Biased sample autocorrelation at ``lag`` (denominator uses all n points)."""
    x = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=np.float64)
    n = x.size
    if lag < 0 or lag >= n:
        raise InvalidLag(f"lag must be in [0, {n - 1}], got {lag}")
    d = x - x.mean()
    denom = float(np.dot(d, d))
    if denom == 0.0:
        raise DegenerateRange("autocorrelation of a zero-variance series")
    if lag == 0:
        return 1.0
    return float(np.dot(d[: n - lag], d[lag:]) / denom)


def make_windows(series, window_len: int, stride: int = 1) -> list:
    x = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=np.float64)
    n = x.size
    if window_len < 2 or stride < 1:
        raise InvalidWindow(f"need window_len >= 2 and stride >= 1, got {window_len}, {stride}")
    if window_len > n:
        raise InvalidWindow(f"window_len {window_len} exceeds series length {n}")
    count = (n - window_len) // stride + 1
    return [Window(x[k * stride : k * stride + window_len].copy(), None, k * stride) for k in range(count)]


def label_windows(windows: Sequence[Window], labels) -> list:
    """Attach labels by window index; ``labels`` is a sequence or an index->label mapping."""
    if isinstance(labels, dict):
        missing = [i for i in range(len(windows)) if i not in labels]
        if missing:
            raise FormatError(f"no label for window ids {missing[:5]}")
        seq = [labels[i] for i in range(len(windows))]
    else:
        seq = list(labels)
        if len(seq) != len(windows):
            raise FormatError(f"{len(seq)} labels for {len(windows)} windows")
    return [replace(w, label=int(y)) for w, y in zip(windows, seq)]


def split_dataset(normal: Sequence[Window], abnormal: Sequence[Window],
                  ratios=(0.8, 0.1, 0.1), seed: int = 0) -> DatasetSplit:
    if len(normal) == 0:
        raise EmptyDataset("no normal windows to split")
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(normal)
    n_valid = math.floor(ratios[1] * n + 1e-9)
    n_test = math.floor(ratios[2] * n + 1e-9)
    n_train = n - n_valid - n_test
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [normal[i] for i in order]
    return DatasetSplit(
        normal_train=shuffled[:n_train],
        normal_valid=shuffled[n_train : n_train + n_valid],
        normal_test=shuffled[n_train + n_valid :],
        abnormal_test=list(abnormal),
    )


def fit_normalization(windows: Iterable[Window]) -> NormalizationParams:
    pts = np.concatenate([w.points for w in windows])
    lo, hi = float(pts.min()), float(pts.max())
    return NormalizationParams(lo, hi)


def normalize_windows(windows: Iterable[Window], params: NormalizationParams, clip=True) -> list:
    scale = params.max - params.min
    out = []
    for w in windows:
        pts = (w.points - params.min) / scale
        if clip:
            pts = np.clip(pts, 0.0, 1.0)
        out.append(replace(w, points=pts))
    return out


def normalize_split(split: DatasetSplit):
    """Scale every window with min/max taken from ``normal_train`` only."""
    params = fit_normalization(split.normal_train)
    scaled = DatasetSplit(*(normalize_windows(part, params) for part in
                            (split.normal_train, split.normal_valid, split.normal_test, split.abnormal_test)))
    return scaled, params


# ---------------------------------------------------------------- CSV I/O

def _parse_timestamp(text: str) -> float:
    text = text.strip()
    try:
        return float(int(text))
    except ValueError:
        pass
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text).timestamp()


def read_series_csv(path, name: Optional[str] = None) -> TimeSeries:
    """Read a ``timestamp,value`` CSV. Any malformed row is a hard error."""
    path = Path(path)
    stamps, values = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["timestamp", "value"]:
            raise FormatError(f"expected header 'timestamp,value', got {header!r}", f"{path}:row 1")
        for rowno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise FormatError(f"expected 2 fields, got {len(row)}", f"{path}:row {rowno}")
            try:
                t = _parse_timestamp(row[0])
                v = float(row[1])
            except ValueError as exc:
                raise FormatError(str(exc), f"{path}:row {rowno}") from None
            if not math.isfinite(v):
                raise FormatError(f"non-finite value {row[1]!r}", f"{path}:row {rowno}")
            stamps.append(t)
            values.append(v)
    if not values:
        raise FormatError("no data rows", str(path))
    interval = 1.0
    if len(stamps) > 1:
        diffs = np.diff(stamps)
        if np.any(diffs <= 0):
            bad = int(np.argmax(diffs <= 0)) + 3
            raise FormatError("timestamps must be strictly increasing", f"{path}:row {bad}")
        interval = float(np.median(diffs))
    return TimeSeries(np.array(values), interval, name or path.stem)


def write_series_csv(series: TimeSeries, path, start: int = 0) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "value"])
        step = series.sample_interval
        for i, v in enumerate(series.values):
            w.writerow([int(round(start + i * step)), repr(float(v))])


def read_labels_csv(path) -> dict:
    path = Path(path)
    labels = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["window_id", "label"]:
            raise FormatError(f"expected header 'window_id,label', got {header!r}", f"{path}:row 1")
        for rowno, row in enumerate(reader, start=2):
            try:
                wid, lab = int(row[0]), int(row[1])
            except (ValueError, IndexError):
                raise FormatError(f"malformed row {row!r}", f"{path}:row {rowno}") from None
            if lab not in (NORMAL, ABNORMAL):
                raise FormatError(f"label must be 0 or 1, got {lab}", f"{path}:row {rowno}")
            labels[wid] = lab
    return labels


def write_labels_csv(labels: Sequence[int], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window_id", "label"])
        for i, y in enumerate(labels):
            w.writerow([i, int(y)])

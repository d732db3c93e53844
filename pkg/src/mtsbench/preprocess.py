"""Z-score scaling, calendar features and sliding-window sampling."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dataset import ChronologicalSplit, TimeSeriesDataset
from .errors import ShapeError, WindowError

SECONDS_PER_DAY = 86400
DEFAULT_EPSILON = 1e-8

# floats per gathered chunk (~32 MB); keeps wide datasets with long windows in memory
CHUNK_ELEMENTS = 1 << 22


@dataclass(frozen=True, eq=False)
class ZScoreScaler:
    mean: np.ndarray
    std: np.ndarray
    epsilon: float = DEFAULT_EPSILON

    def _check(self, block):
        block = np.asarray(block, dtype=np.float64)
        if block.ndim == 0 or block.shape[-1] != self.mean.shape[0]:
            raise ShapeError(f"block with shape {block.shape} does not have "
                             f"{self.mean.shape[0]} trailing channels")
        return block

    def transform(self, block) -> np.ndarray:
        return (self._check(block) - self.mean) / self.std

    def inverse_transform(self, block) -> np.ndarray:
        return self._check(block) * self.std + self.mean

    @classmethod
    def identity(cls, n: int) -> "ZScoreScaler":
        return cls(np.zeros(n), np.ones(n))


def fit_scaler(ds: TimeSeriesDataset, split, epsilon: float = DEFAULT_EPSILON) -> ZScoreScaler:
    """Per-channel population mean/std over observed training entries.

    ``split`` is a :class:`ChronologicalSplit` or a bare ``(lo, hi)`` range.
    """
    lo, hi = split.train_range if isinstance(split, ChronologicalSplit) else split
    x = ds.values[lo:hi]
    m = ds.mask[lo:hi]
    count = m.sum(axis=0)
    safe = np.maximum(count, 1)
    mean = np.where(m, x, 0.0).sum(axis=0) / safe
    var = np.where(m, (x - mean) ** 2, 0.0).sum(axis=0) / safe
    std = np.maximum(np.sqrt(var), epsilon)
    std = np.where(count >= 2, std, epsilon)
    mean = np.where(count >= 1, mean, 0.0)
    return ZScoreScaler(mean, std, epsilon)


transform = ZScoreScaler.transform
inverse_transform = ZScoreScaler.inverse_transform


@dataclass(frozen=True, eq=False)
class TemporalFeatures:
    time_of_day: np.ndarray
    day_of_week: np.ndarray


def temporal_features(ds: TimeSeriesDataset) -> TemporalFeatures:
    start = ds.start_time
    # integer microseconds keep the daily cycle exact over long series
    sod_us = ((start.hour * 60 + start.minute) * 60 + start.second) * 1_000_000 + start.microsecond
    offset_us = sod_us + np.arange(ds.T, dtype=np.int64) * (ds.frequency * 1_000_000)
    day_us = SECONDS_PER_DAY * 1_000_000
    tod = (offset_us % day_us) / day_us
    dow = (start.weekday() + offset_us // day_us) % 7
    return TemporalFeatures(tod, dow.astype(np.int64))


@dataclass(frozen=True, eq=False)
class WindowSample:
    history: np.ndarray
    future: np.ndarray
    history_mask: np.ndarray
    future_mask: np.ndarray
    anchor: int


def make_windows(ds_or_T, split_range, T_p: int, T_f: int, stride: int = 1) -> np.ndarray:
    """Anchors ``t`` such that ``[t - T_p, t + T_f)`` lies inside ``split_range``.

    Anchors are returned in ascending order; that order is what every
    consumer iterates in.
    """
    if T_p < 1 or T_f < 1:
        raise WindowError(f"T_p and T_f must be >= 1, got {T_p}, {T_f}")
    if stride < 1:
        raise WindowError(f"stride must be >= 1, got {stride}")
    lo, hi = split_range
    if hi - lo < T_p + T_f:
        raise WindowError(f"range [{lo}, {hi}) is shorter than T_p + T_f = {T_p + T_f}")
    return np.arange(lo + T_p, hi - T_f + 1, stride, dtype=np.int64)


def window_sample(ds: TimeSeriesDataset, scaler: ZScoreScaler, anchor: int,
                  T_p: int, T_f: int) -> WindowSample:
    hist = slice(anchor - T_p, anchor)
    fut = slice(anchor, anchor + T_f)
    return WindowSample(scaler.transform(ds.values[hist]), scaler.transform(ds.values[fut]),
                        ds.mask[hist].copy(), ds.mask[fut].copy(), int(anchor))


def gather_windows(arr: np.ndarray, anchors: np.ndarray, length: int, offset: int) -> np.ndarray:
    """Stack ``arr[a + offset : a + offset + length]`` for every anchor.

    Returns shape ``(len(anchors), length, N)``.
    """
    view = sliding_window_view(arr, length, axis=0)  # (T - length + 1, N, length)
    return np.ascontiguousarray(view[np.asarray(anchors) + offset].transpose(0, 2, 1))


def augment_features(sample: WindowSample, features: TemporalFeatures,
                     enabled=(True, True), mode: str = "shared") -> WindowSample:
    """Append time-of-day and day-of-week/7 to the history block.

    ``mode="shared"`` adds one column per feature (``T_p x (N + k)``);
    ``mode="broadcast"`` stacks features behind every variate
    (``T_p x N x (1 + k)``).
    """
    use_tod, use_dow = enabled
    if not (use_tod or use_dow):
        return sample
    T_p = sample.history.shape[0]
    sl = slice(sample.anchor - T_p, sample.anchor)
    cols = []
    if use_tod:
        cols.append(features.time_of_day[sl])
    if use_dow:
        cols.append(features.day_of_week[sl] / 7.0)
    extra = np.stack(cols, axis=1)
    if mode == "shared":
        history = np.concatenate([sample.history, extra], axis=1)
    elif mode == "broadcast":
        n = sample.history.shape[1]
        history = np.concatenate(
            [sample.history[:, :, None], np.broadcast_to(extra[:, None, :], (T_p, n, extra.shape[1]))],
            axis=2)
    else:
        raise ValueError(f"unknown feature mode {mode!r}")
    return replace(sample, history=history)


class WindowSet:
    """Normalized windows of one split, gathered lazily by anchor index.

    Holding only the anchor list keeps memory at ``O(T * N)`` even when
    ``T_p`` is several hundred steps.
    """

    def __init__(self, normalized: np.ndarray, mask: np.ndarray, anchors: np.ndarray,
                 T_p: int, T_f: int):
        self.data = normalized
        self.mask = mask
        self.anchors = np.asarray(anchors, dtype=np.int64)
        self.T_p = T_p
        self.T_f = T_f

    @classmethod
    def from_dataset(cls, ds: TimeSeriesDataset, scaler: ZScoreScaler, split_range,
                     T_p: int, T_f: int, stride: int = 1) -> "WindowSet":
        anchors = make_windows(ds, split_range, T_p, T_f, stride)
        return cls(scaler.transform(ds.values), ds.mask, anchors, T_p, T_f)

    def __len__(self):
        return self.anchors.size

    def batch(self, idx=None):
        """``(history, future, history_mask, future_mask)`` for anchors ``idx``."""
        a = self.anchors if idx is None else self.anchors[idx]
        return (gather_windows(self.data, a, self.T_p, -self.T_p),
                gather_windows(self.data, a, self.T_f, 0),
                gather_windows(self.mask, a, self.T_p, -self.T_p),
                gather_windows(self.mask, a, self.T_f, 0))

    def chunk_size(self, budget: int = CHUNK_ELEMENTS) -> int:
        """Windows per chunk so one chunk holds about ``budget`` floats."""
        per_window = (self.T_p + self.T_f) * max(1, self.data.shape[1])
        return max(1, budget // per_window)

    def chunks(self, size: int | None = None):
        size = size or self.chunk_size()
        for i in range(0, len(self), size):
            yield self.batch(slice(i, i + size))

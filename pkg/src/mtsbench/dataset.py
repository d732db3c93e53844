"""Loading, masking and chronological splitting of multivariate series."""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import EmptyDataset, ParseError, ShapeError, SplitError, UsageError

DEFAULT_SENTINEL = "NaN"
DEFAULT_START = datetime(1970, 1, 1)

TSB_MAGIC = b"MTSB"
TSB_VERSION = 1
# magic, version, reserved, T, N, frequency [s], start [us since epoch], name length
_TSB_HEADER = struct.Struct("<4sHHQQqqI")
_EPOCH = datetime(1970, 1, 1)

STF_DATASETS = frozenset({"METR-LA", "PEMS-BAY", "PEMS03", "PEMS04", "PEMS07", "PEMS08"})
ETT_DATASETS = frozenset({"ETTh1", "ETTh2", "ETTm1", "ETTm2"})


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    """A ``T x N`` value matrix on a regular time grid.

    Missing cells are stored as 0 with ``mask`` False. Arrays are made
    read-only on construction so a dataset can be shared freely.
    """

    values: np.ndarray
    mask: np.ndarray
    frequency: int
    start_time: datetime = DEFAULT_START
    name: str = "dataset"

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        mask = np.ascontiguousarray(self.mask, dtype=bool)
        if values.ndim != 2:
            raise ShapeError(f"values must be 2-D, got shape {values.shape}")
        if mask.shape != values.shape:
            raise ShapeError(f"mask shape {mask.shape} != values shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise EmptyDataset(f"dataset {self.name!r} has shape {values.shape}")
        if self.frequency <= 0:
            raise UsageError(f"frequency must be positive, got {self.frequency}")
        if np.isnan(values).any():
            raise ShapeError("values contain NaN; encode missing cells through the mask")
        values = np.where(mask, values, 0.0)
        values.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "frequency", int(self.frequency))

    @classmethod
    def from_array(cls, data, frequency: int, start_time: datetime = DEFAULT_START,
                   name: str = "dataset", mask=None) -> "TimeSeriesDataset":
        """Build a dataset from an array where NaN marks missing cells."""
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, None]
        observed = ~np.isnan(data)
        if mask is not None:
            observed &= np.asarray(mask, dtype=bool)
        return cls(np.nan_to_num(data, nan=0.0), observed, frequency, start_time, name)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    def timestamp(self, t: int) -> datetime:
        return self.start_time + timedelta(seconds=t * self.frequency)

    def with_values(self, values, mask=None) -> "TimeSeriesDataset":
        return TimeSeriesDataset(values, self.mask if mask is None else mask,
                                 self.frequency, self.start_time, self.name)


@dataclass(frozen=True)
class ChronologicalSplit:
    train_range: tuple[int, int]
    val_range: tuple[int, int]
    test_range: tuple[int, int]

    def ranges(self):
        return {"train": self.train_range, "val": self.val_range, "test": self.test_range}


def _parse_cells(cells, lineno, sentinel, skip_columns):
    vals, obs = [], []
    for col, cell in enumerate(cells[skip_columns:], start=skip_columns + 1):
        cell = cell.strip()
        if cell == "" or cell == sentinel:
            vals.append(0.0)
            obs.append(False)
            continue
        try:
            v = float(cell)
        except ValueError:
            raise ParseError(lineno, col, f"non-numeric cell {cell!r}") from None
        if not math.isfinite(v):
            raise ParseError(lineno, col, f"non-finite cell {cell!r} (sentinel is {sentinel!r})")
        vals.append(v)
        obs.append(True)
    return vals, obs


def _load_csv(path, has_header, sentinel, skip_columns, max_rows):
    rows, masks = [], []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, cells in enumerate(reader, start=1):
            if lineno == 1 and has_header:
                continue
            if not cells:
                continue
            if width is None:
                width = len(cells)
                if width <= skip_columns:
                    raise ParseError(lineno, None, f"only {width} fields, {skip_columns} skipped")
            elif len(cells) != width:
                raise ParseError(lineno, None, f"expected {width} fields, got {len(cells)}")
            vals, obs = _parse_cells(cells, lineno, sentinel, skip_columns)
            rows.append(vals)
            masks.append(obs)
            if max_rows is not None and len(rows) >= max_rows:
                break
    if not rows:
        raise EmptyDataset(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64), np.array(masks, dtype=bool)


def save_binary(ds: TimeSeriesDataset, path) -> None:
    """Write ``ds`` to the ``.tsb`` binary cache."""
    name = ds.name.encode("utf-8")
    start_us = (ds.start_time.replace(tzinfo=None) - _EPOCH) // timedelta(microseconds=1)
    header = _TSB_HEADER.pack(TSB_MAGIC, TSB_VERSION, 0, ds.T, ds.N, ds.frequency, start_us, len(name))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(name)
        fh.write(ds.values.astype("<f8").tobytes(order="C"))
        fh.write(np.packbits(ds.mask.ravel(), bitorder="little").tobytes())


def _load_binary(path):
    raw = Path(path).read_bytes()
    if len(raw) == 0:
        raise EmptyDataset(f"{path}: empty file")
    if len(raw) < _TSB_HEADER.size:
        raise ParseError(1, None, "truncated header")
    magic, version, _, T, N, freq, start_us, name_len = _TSB_HEADER.unpack_from(raw, 0)
    if magic != TSB_MAGIC:
        raise ParseError(1, None, f"bad magic {magic!r}")
    if version != TSB_VERSION:
        raise ParseError(1, None, f"unsupported version {version}")
    off = _TSB_HEADER.size
    name = raw[off:off + name_len].decode("utf-8")
    off += name_len
    nbytes = T * N * 8
    nmask = (T * N + 7) // 8
    if len(raw) != off + nbytes + nmask:
        raise ParseError(1, None, "payload size does not match header")
    values = np.frombuffer(raw, dtype="<f8", count=T * N, offset=off).reshape(T, N)
    bits = np.frombuffer(raw, dtype=np.uint8, count=nmask, offset=off + nbytes)
    mask = np.unpackbits(bits, count=T * N, bitorder="little").astype(bool).reshape(T, N)
    start = _EPOCH + timedelta(microseconds=start_us)
    return TimeSeriesDataset(values.astype(np.float64), mask, freq, start, name)


def load_dataset(path, format: str | None = None, frequency: int | None = None,
                 start_time: datetime | None = None, name: str | None = None,
                 has_header: bool = False, sentinel: str = DEFAULT_SENTINEL,
                 skip_columns: int = 0, max_rows: int | None = None) -> TimeSeriesDataset:
    """Load a dataset from CSV or the ``.tsb`` binary cache.

    ``format`` is inferred from the file suffix when omitted. For CSV input
    ``frequency`` is required; ``skip_columns`` drops leading columns such as a
    date stamp, and ``max_rows`` truncates the series.
    """
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"no such file: {path}")
    if format is None:
        format = "binary-cache" if path.suffix == ".tsb" else "csv"
    if format == "binary-cache":
        ds = _load_binary(path)
        if max_rows is not None and max_rows < ds.T:
            ds = TimeSeriesDataset(ds.values[:max_rows], ds.mask[:max_rows], ds.frequency,
                                   ds.start_time, ds.name)
        if name is not None or start_time is not None or frequency is not None:
            ds = TimeSeriesDataset(ds.values, ds.mask, frequency or ds.frequency,
                                   start_time or ds.start_time, name or ds.name)
        return ds
    if format != "csv":
        raise UsageError(f"unknown format {format!r}")
    if frequency is None:
        raise UsageError("frequency is required for CSV input")
    if path.stat().st_size == 0:
        raise EmptyDataset(f"{path}: empty file")
    values, mask = _load_csv(path, has_header, sentinel, skip_columns, max_rows)
    return TimeSeriesDataset(values, mask, frequency, start_time or DEFAULT_START,
                             name or path.stem)


def default_split_ratios(name: str) -> tuple[float, float, float]:
    if name in ETT_DATASETS:
        return (0.6, 0.2, 0.2)
    return (0.7, 0.1, 0.2)


def chronological_split(ds_or_T, ratios=(0.7, 0.1, 0.2)) -> ChronologicalSplit:
    """Cut ``[0, T)`` into contiguous train/val/test ranges.

    Train and val lengths are ``floor(ratio * T)``; test takes the rest.
    """
    T = ds_or_T if isinstance(ds_or_T, int) else ds_or_T.T
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise SplitError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    # tolerance absorbs products such as 0.29 * 100 = 28.999999999999996
    n_train = int(math.floor(ratios[0] * T + 1e-9))
    n_val = int(math.floor(ratios[1] * T + 1e-9))
    n_test = T - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise SplitError(f"T={T} with ratios {ratios} gives segment lengths "
                         f"({n_train}, {n_val}, {n_test})")
    return ChronologicalSplit((0, n_train), (n_train, n_train + n_val), (n_train + n_val, T))

"""Metadata for the public benchmark datasets and lookup on disk.

Files are searched in ``data_dir`` as ``<name>.tsb``, ``<name>.csv`` (an
optional leading date column is dropped, header expected), ``<name>.npz``
(traffic archives: key ``data``, channel 0) or ``<name>.h5`` (pandas HDF).
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np

from .dataset import TimeSeriesDataset, load_dataset
from .errors import UsageError

DATA_DIR_ENV = "MTSBENCH_DATA_DIR"


@dataclass(frozen=True)
class DatasetInfo:
    name: str
    samples: int
    variates: int
    frequency: int
    start_time: datetime


CATALOG = {d.name: d for d in [
    DatasetInfo("METR-LA", 34272, 207, 300, datetime(2012, 3, 1)),
    DatasetInfo("PEMS-BAY", 52116, 325, 300, datetime(2017, 1, 1)),
    DatasetInfo("PEMS03", 26208, 358, 300, datetime(2018, 9, 1)),
    DatasetInfo("PEMS04", 16992, 307, 300, datetime(2018, 1, 1)),
    DatasetInfo("PEMS07", 28224, 883, 300, datetime(2017, 5, 1)),
    DatasetInfo("PEMS08", 17856, 170, 300, datetime(2016, 7, 1)),
    DatasetInfo("ETTh1", 14400, 7, 3600, datetime(2016, 7, 1)),
    DatasetInfo("ETTh2", 14400, 7, 3600, datetime(2016, 7, 1)),
    DatasetInfo("ETTm1", 57600, 7, 900, datetime(2016, 7, 1)),
    DatasetInfo("ETTm2", 57600, 7, 900, datetime(2016, 7, 1)),
    DatasetInfo("Electricity", 26304, 321, 3600, datetime(2016, 7, 1)),
    DatasetInfo("Weather", 52696, 21, 600, datetime(2020, 1, 1)),
    DatasetInfo("ExchangeRate", 7588, 8, 86400, datetime(1990, 1, 1)),
]}


def data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "data"))


def find_dataset_file(name: str, directory=None) -> Path | None:
    directory = Path(directory) if directory is not None else data_dir()
    for suffix in (".tsb", ".csv", ".npz", ".h5"):
        p = directory / f"{name}{suffix}"
        if p.is_file():
            return p
    return None


def _csv_has_date_column(path: Path) -> bool:
    with open(path) as fh:
        fh.readline()
        first = fh.readline().split(",")[0].strip()
    try:
        float(first)
    except ValueError:
        return True
    return False


def load_named(name: str, directory=None) -> TimeSeriesDataset:
    """Load a catalogued dataset, truncated to its benchmark length."""
    if name not in CATALOG:
        raise UsageError(f"unknown dataset {name!r}; known: {sorted(CATALOG)}")
    info = CATALOG[name]
    path = find_dataset_file(name, directory)
    if path is None:
        where = directory if directory is not None else data_dir()
        raise UsageError(f"dataset {name} not found in {where} (set ${DATA_DIR_ENV})")
    if path.suffix == ".tsb":
        return load_dataset(path, max_rows=info.samples)
    if path.suffix == ".csv":
        skip = 1 if _csv_has_date_column(path) else 0
        return load_dataset(path, "csv", info.frequency, info.start_time, name,
                            has_header=True, skip_columns=skip, max_rows=info.samples)
    if path.suffix == ".npz":
        arr = np.load(path)["data"]
        if arr.ndim == 3:
            arr = arr[..., 0]
        values = arr[:info.samples].astype(np.float64)
    else:
        import pandas as pd
        values = pd.read_hdf(path).to_numpy(dtype=np.float64)[:info.samples]
    # traffic archives encode sensor outages as 0
    return TimeSeriesDataset(values, values != 0, info.frequency, info.start_time, name)

"""Masked error metrics, M4 metrics and the reported-vs-reproduced gap.

Percentage-type metrics (MAPE, WAPE) are fractions here; rendering as
percentages happens in :mod:`mtsbench.report`. sMAPE keeps its customary
0-200 scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScale, EmptyMask, InsufficientInsample, ShapeError

MASKED_METRICS = ("mae", "rmse", "mse", "mape", "wape")
REPORT_KEYS = ("mae", "rmse", "mse", "mape", "wape", "smape", "mase", "owa")
FRACTION_METRICS = frozenset({"mape", "wape"})
STF_METRICS = ("mae", "rmse", "mse", "mape", "wape")
LTSF_METRICS = ("mae", "rmse", "mse", "wape")


def _prepare(truth, pred, mask):
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.shape != pred.shape:
        raise ShapeError(f"truth {truth.shape} and pred {pred.shape} differ")
    if mask is None:
        mask = np.ones(truth.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != truth.shape:
            raise ShapeError(f"mask {mask.shape} does not match {truth.shape}")
    return truth, pred, mask


def _require(mask):
    n = int(mask.sum())
    if n == 0:
        raise EmptyMask("no observed entries to evaluate")
    return n


def masked_mae(truth, pred, mask=None) -> float:
    truth, pred, mask = _prepare(truth, pred, mask)
    n = _require(mask)
    return float(np.abs(truth - pred)[mask].sum() / n)


def masked_mse(truth, pred, mask=None) -> float:
    truth, pred, mask = _prepare(truth, pred, mask)
    n = _require(mask)
    return float(((truth - pred)[mask] ** 2).sum() / n)


def masked_rmse(truth, pred, mask=None) -> float:
    return math.sqrt(masked_mse(truth, pred, mask))


def masked_mape(truth, pred, mask=None) -> float:
    """MAPE as a fraction; zero-valued truth entries are excluded."""
    truth, pred, mask = _prepare(truth, pred, mask)
    mask = mask & (truth != 0)
    n = _require(mask)
    return float((np.abs(truth - pred)[mask] / np.abs(truth[mask])).sum() / n)


def masked_wape(truth, pred, mask=None) -> float:
    truth, pred, mask = _prepare(truth, pred, mask)
    _require(mask)
    denom = np.abs(truth[mask]).sum()
    if denom == 0:
        raise DegenerateScale("sum of |truth| over observed entries is 0")
    return float(np.abs(truth - pred)[mask].sum() / denom)


_MASKED_FUNCS = {"mae": masked_mae, "rmse": masked_rmse, "mse": masked_mse,
                 "mape": masked_mape, "wape": masked_wape}


def smape(truth, pred) -> float:
    truth = np.asarray(truth, dtype=np.float64).ravel()
    pred = np.asarray(pred, dtype=np.float64).ravel()
    if truth.shape != pred.shape or truth.size == 0:
        raise ShapeError(f"smape needs equal non-empty series, got {truth.shape}, {pred.shape}")
    denom = np.abs(truth) + np.abs(pred)
    terms = np.divide(np.abs(truth - pred), denom, out=np.zeros_like(denom), where=denom > 0)
    return float(200.0 * terms.sum() / truth.size)


def seasonal_scale(insample, season: int) -> float:
    insample = np.asarray(insample, dtype=np.float64).ravel()
    if season < 1:
        raise ValueError(f"season must be >= 1, got {season}")
    if insample.size <= season:
        raise InsufficientInsample(f"in-sample length {insample.size} <= season {season}")
    scale = float(np.abs(insample[season:] - insample[:-season]).mean())
    if scale == 0:
        raise DegenerateScale("seasonal-naive in-sample error is 0")
    return scale


def mase(truth, pred, insample, season: int) -> float:
    truth = np.asarray(truth, dtype=np.float64).ravel()
    pred = np.asarray(pred, dtype=np.float64).ravel()
    if truth.shape != pred.shape or truth.size == 0:
        raise ShapeError(f"mase needs equal non-empty series, got {truth.shape}, {pred.shape}")
    return float(np.abs(truth - pred).mean() / seasonal_scale(insample, season))


def naive2_forecast(insample, horizon: int, season: int) -> np.ndarray:
    """Plain seasonal naive: repeat the last observed season."""
    insample = np.asarray(insample, dtype=np.float64).ravel()
    if insample.size < season:
        raise InsufficientInsample(f"in-sample length {insample.size} < season {season}")
    last = insample[insample.size - season:]
    return last[np.arange(horizon) % season]


def owa(smape_model: float, mase_model: float, smape_naive2: float, mase_naive2: float) -> float:
    if smape_naive2 == 0 or mase_naive2 == 0:
        raise DegenerateScale("Naive2 reference error is 0")
    return 0.5 * (smape_model / smape_naive2 + mase_model / mase_naive2)


def m4_scores(truth, pred, insample, season: int) -> dict:
    """sMAPE, MASE and OWA (against plain seasonal naive) for one series."""
    ref = naive2_forecast(insample, len(np.ravel(truth)), season)
    s_m, m_m = smape(truth, pred), mase(truth, pred, insample, season)
    s_n, m_n = smape(truth, ref), mase(truth, ref, insample, season)
    return {"smape": s_m, "mase": m_m, "owa": owa(s_m, m_m, s_n, m_n)}


def gap(reported: float, reproduced: float) -> float:
    """``(reported - reproduced) / reported * 100``."""
    if reported == 0:
        raise DegenerateScale("reported value is 0")
    return (reported - reproduced) / reported * 100.0


@dataclass
class MetricReport:
    values: dict
    n_evaluated: int
    horizon_mode: str = "average"

    def __getitem__(self, key):
        return self.values[key]

    def to_json(self) -> dict:
        out = {k: self.values.get(k) for k in REPORT_KEYS}
        out["n_evaluated"] = self.n_evaluated
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "MetricReport":
        return cls({k: obj[k] for k in REPORT_KEYS if obj.get(k) is not None},
                   int(obj["n_evaluated"]))


@dataclass
class MetricAccumulator:
    """Running sums for the masked metrics, fed chunk by chunk.

    Chunk sums are combined in arrival order, so the result is deterministic
    for a fixed chunking.
    """

    n: int = 0
    abs_err: float = 0.0
    sq_err: float = 0.0
    abs_truth: float = 0.0
    ape: float = 0.0
    n_ape: int = 0

    def update(self, truth, pred, mask=None):
        truth, pred, mask = _prepare(truth, pred, mask)
        err = np.abs(truth - pred)[mask]
        t = truth[mask]
        self.n += int(mask.sum())
        self.abs_err += float(err.sum())
        self.sq_err += float((err ** 2).sum())
        self.abs_truth += float(np.abs(t).sum())
        nz = t != 0
        self.ape += float((err[nz] / np.abs(t[nz])).sum())
        self.n_ape += int(nz.sum())

    def result(self, metric_set=MASKED_METRICS) -> MetricReport:
        if self.n == 0:
            raise EmptyMask("no observed entries to evaluate")
        vals = {}
        for m in metric_set:
            if m == "mae":
                vals[m] = self.abs_err / self.n
            elif m == "mse":
                vals[m] = self.sq_err / self.n
            elif m == "rmse":
                vals[m] = math.sqrt(self.sq_err / self.n)
            elif m == "mape":
                if self.n_ape == 0:
                    raise EmptyMask("no non-zero observed truth entries for MAPE")
                vals[m] = self.ape / self.n_ape
            elif m == "wape":
                if self.abs_truth == 0:
                    raise DegenerateScale("sum of |truth| over observed entries is 0")
                vals[m] = self.abs_err / self.abs_truth
            else:
                raise ValueError(f"unknown masked metric {m!r}")
        return MetricReport(vals, self.n)


def evaluate_renormalized(scaler, truth_norm, pred_norm, mask=None,
                          metric_set=STF_METRICS) -> MetricReport:
    """De-normalize both blocks, then compute the averaged masked metrics."""
    truth_norm, pred_norm, mask = _prepare(truth_norm, pred_norm, mask)
    acc = MetricAccumulator()
    acc.update(scaler.inverse_transform(truth_norm), scaler.inverse_transform(pred_norm), mask)
    return acc.result(metric_set)

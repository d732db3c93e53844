"""Parameter-free reference forecasters.

All functions accept a single ``T_p x N`` history or a batch
``B x T_p x N`` and return the matching ``T_f``-step forecast.
"""
import numpy as np

from ..errors import SpecError


def predict_naive_last(history, T_f: int) -> np.ndarray:
    history = np.asarray(history, dtype=np.float64)
    last = history[..., -1:, :]
    return np.repeat(last, T_f, axis=-2)


def predict_seasonal_naive(history, T_f: int, season: int) -> np.ndarray:
    history = np.asarray(history, dtype=np.float64)
    T_p = history.shape[-2]
    if season < 1 or season > T_p:
        raise SpecError(f"season must be in [1, T_p={T_p}], got {season}")
    idx = T_p - season + np.arange(T_f) % season
    return history[..., idx, :]


def predict_historical_average(history, T_f: int, history_mask=None) -> np.ndarray:
    """Column mean of the observed history; fully masked channels give 0."""
    history = np.asarray(history, dtype=np.float64)
    if history_mask is None:
        mean = history.mean(axis=-2, keepdims=True)
    else:
        m = np.asarray(history_mask, dtype=bool)
        cnt = m.sum(axis=-2, keepdims=True)
        mean = np.where(m, history, 0.0).sum(axis=-2, keepdims=True) / np.maximum(cnt, 1)
        mean = np.where(cnt > 0, mean, 0.0)
    return np.repeat(mean, T_f, axis=-2)

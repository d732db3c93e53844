"""Spatial indistinguishability (r1/r2) and temporal diagnostics.

Pair counting streams over blocks of anchors: for each anchor the history
and future windows of all channels are unit-normalized and their Gram
matrices thresholded, so the ``T x N x N`` similarity tensors never exist
in memory at once.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.spatial.distance import cdist

from .dataset import ChronologicalSplit, TimeSeriesDataset
from .errors import InsufficientData, ShapeError, UsageError, WindowError
from .preprocess import ZScoreScaler, fit_scaler, make_windows

E_UPPER = 0.9
E_LOWER = 0.5
# Gram-matrix floats held per block; bounds memory for wide datasets
_BLOCK_BUDGET = 1 << 22


def pair_similarity(x, y) -> float:
    """Cosine similarity of two windows; 0 if either has zero norm."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape or x.size == 0:
        raise ShapeError(f"windows must have equal non-zero length, got {x.size} and {y.size}")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        return 0.0
    return float(np.dot(x, y) / (nx * ny))


@dataclass(frozen=True)
class IndistinguishabilityCounts:
    total_pairs: int
    similar_past: int
    indistinguishable: int
    valid_steps: int
    T_p: int
    T_f: int
    e_u: float
    e_l: float
    stride: int


def _unit_rows(w):
    # w: (B, N, L)
    norm = np.sqrt(np.einsum("bnl,bnl->bn", w, w))
    safe = np.where(norm > 0, norm, 1.0)
    return np.where((norm > 0)[..., None], w / safe[..., None], 0.0)


def _count_block(hist_view, fut_view, anchors, T_p, e_u, e_l):
    P = _unit_rows(hist_view[anchors - T_p])
    F = _unit_rows(fut_view[anchors])
    sim_p = np.matmul(P, P.transpose(0, 2, 1)) > e_u
    diverge = np.matmul(F, F.transpose(0, 2, 1)) < e_l
    return int(np.count_nonzero(sim_p)), int(np.count_nonzero(sim_p & diverge))


def indistinguishability_counts(ds: TimeSeriesDataset, T_p: int = 12, T_f: int = 12,
                                e_u: float = E_UPPER, e_l: float = E_LOWER, stride: int = 1,
                                threads: int = 1) -> IndistinguishabilityCounts:
    """Count history-similar and indistinguishable ordered channel pairs.

    Every ordered pair ``(i, j)``, diagonal included, is visited at each
    anchor ``t`` in ``T_p, T_p + stride, ..., T - T_f``. Counts are exact
    integers, so the result does not depend on ``threads``.
    """
    if not e_l < e_u:
        raise UsageError(f"need e_l < e_u, got e_l={e_l}, e_u={e_u}")
    values = ds.values if isinstance(ds, TimeSeriesDataset) else np.asarray(ds, dtype=np.float64)
    T, N = values.shape
    anchors = make_windows(T, (0, T), T_p, T_f, stride)
    if anchors.size == 0:
        raise WindowError("no valid anchor")
    hist_view = sliding_window_view(values, T_p, axis=0)  # (T - T_p + 1, N, T_p)
    fut_view = sliding_window_view(values, T_f, axis=0)
    bsize = max(1, _BLOCK_BUDGET // (N * N))
    blocks = [anchors[i:i + bsize] for i in range(0, anchors.size, bsize)]

    def work(block):
        return _count_block(hist_view, fut_view, block, T_p, e_u, e_l)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    similar = sum(p[0] for p in parts)
    indist = sum(p[1] for p in parts)
    return IndistinguishabilityCounts(int(anchors.size) * N * N, similar, indist,
                                      int(anchors.size), T_p, T_f, e_u, e_l, stride)


def r1_r2(counts: IndistinguishabilityCounts) -> tuple[float, float]:
    r1 = counts.indistinguishable / counts.total_pairs if counts.total_pairs else 0.0
    r2 = counts.indistinguishable / counts.similar_past if counts.similar_past else 0.0
    return r1, r2


def _acf(x: np.ndarray, lag: int) -> float:
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    if denom == 0:
        return 0.0
    return float(np.dot(xc[:-lag], xc[lag:]) / denom)


def periodicity_strength(ds: TimeSeriesDataset, candidate_periods) -> tuple[float, int]:
    """Mean over channels of the best lag autocorrelation among the candidates.

    Masked cells are replaced by the channel's observed mean, so they add
    nothing to the autocovariance. Returns ``(strength, dominant_period)``
    where the dominant period maximizes the channel-averaged autocorrelation.
    """
    periods = sorted({int(p) for p in candidate_periods})
    if not periods or periods[0] < 1:
        raise UsageError(f"candidate periods must be positive, got {candidate_periods}")
    if ds.T <= 2 * periods[-1]:
        raise InsufficientData(f"T={ds.T} must exceed twice the longest period {periods[-1]}")
    acf = np.zeros((ds.N, len(periods)))
    for i in range(ds.N):
        obs = ds.mask[:, i]
        if not obs.any():
            continue
        x = np.where(obs, ds.values[:, i], ds.values[obs, i].mean())
        acf[i] = [_acf(x, p) for p in periods]
    strength = float(acf.max(axis=1).mean())
    dominant = periods[int(np.argmax(acf.mean(axis=0)))]
    return strength, dominant


def default_periods(frequency: int, T: int) -> list[int]:
    """Daily and weekly cycles in steps (weekly/monthly/yearly for daily data)."""
    if frequency < 86400 and 86400 % frequency == 0:
        day = 86400 // frequency
        cands = [day, 7 * day] if day > 1 else [7 * day]
    else:
        cands = [7, 30, 365]
    cands = [p for p in cands if 2 * p < T]
    if not cands:
        cands = [max(1, (T - 1) // 2 - 1)]
    return cands


def _window_summaries(values, mask, lo, hi, window, max_windows):
    starts = np.arange(lo, hi - window + 1, window)
    if starts.size > max_windows:
        starts = starts[np.linspace(0, starts.size - 1, max_windows).round().astype(int)]
    w = sliding_window_view(values, window, axis=0)[starts]   # (K, N, window)
    m = sliding_window_view(mask, window, axis=0)[starts]
    cnt = m.sum(axis=2)
    safe = np.maximum(cnt, 1)
    mean = np.where(m, w, 0.0).sum(axis=2) / safe
    var = np.where(m, (w - mean[..., None]) ** 2, 0.0).sum(axis=2) / safe
    return np.concatenate([mean, np.sqrt(var)], axis=1)


def energy_distance(a: np.ndarray, b: np.ndarray) -> float:
    """V-statistic energy distance between two point clouds (rows)."""
    d = 2.0 * cdist(a, b).mean() - cdist(a, a).mean() - cdist(b, b).mean()
    return max(0.0, float(d))


def drift_score(train_range, test_range, ds: TimeSeriesDataset, window: int,
                scaler: ZScoreScaler | None = None, max_windows: int = 2000) -> float:
    """Energy distance between per-window (mean, std) summaries of two ranges.

    Values are z-scored with ``scaler`` (fit on ``train_range`` by default).
    """
    if window < 1:
        raise InsufficientData(f"window must be >= 1, got {window}")
    for lo, hi in (train_range, test_range):
        if hi - lo < window:
            raise InsufficientData(f"range [{lo}, {hi}) shorter than window {window}")
    if scaler is None:
        scaler = fit_scaler(ds, train_range)
    z = np.where(ds.mask, scaler.transform(ds.values), 0.0)
    a = _window_summaries(z, ds.mask, *train_range, window, max_windows)
    b = _window_summaries(z, ds.mask, *test_range, window, max_windows)
    return energy_distance(a, b)


def calibrate_drift_threshold(ds: TimeSeriesDataset, train_range, window: int,
                              scaler: ZScoreScaler | None = None, factor: float = 3.0,
                              n_boot: int = 20, seed: int = 0, max_windows: int = 2000,
                              test_windows: int | None = None) -> float:
    """``factor`` times the mean drift score between disjoint halves of the train range.

    Each draw shuffles the training windows and splits off ``test_windows``
    of them (half by default) so the null sample sizes match the real
    comparison; the V-statistic is biased upward for small samples.
    """
    if scaler is None:
        scaler = fit_scaler(ds, train_range)
    z = np.where(ds.mask, scaler.transform(ds.values), 0.0)
    s = _window_summaries(z, ds.mask, *train_range, window, max_windows)
    k = s.shape[0]
    if k < 2:
        raise InsufficientData("need at least two training windows to calibrate drift")
    m = k // 2 if not test_windows or test_windows >= k else int(test_windows)
    rng = np.random.default_rng(seed)
    scores = []
    for _ in range(n_boot):
        order = rng.permutation(k)
        scores.append(energy_distance(s[order[m:]], s[order[:m]]))
    return factor * float(np.mean(scores))


def _n_windows(lo, hi, window, max_windows):
    return min(max(0, (hi - lo - window) // window + 1), max_windows)


@dataclass(frozen=True)
class Thresholds:
    r1: float = 0.01
    r2: float = 0.2
    strength: float = 0.5
    drift: float | None = None  # None: calibrate from the training range


@dataclass
class HeterogeneityProfile:
    r1: float
    r2: float
    periodicity_strength: float
    dominant_period: int
    drift_score: float
    spatial_label: str
    temporal_label: str
    thresholds: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    name: str = ""

    def to_json(self) -> dict:
        return asdict(self)


def classify(r1: float, r2: float, strength: float, dominant_period: int, drift: float,
             thresholds: Thresholds = Thresholds(), counts=None, name: str = "") -> HeterogeneityProfile:
    if thresholds.drift is None:
        raise UsageError("drift threshold must be resolved before classification")
    spatial = "significant" if (r1 >= thresholds.r1 or r2 >= thresholds.r2) else "not-significant"
    if drift > thresholds.drift:
        temporal = "distribution-drift"
    elif strength >= thresholds.strength and drift < thresholds.drift:
        temporal = "clear-stable"
    else:
        temporal = "unclear"
    return HeterogeneityProfile(r1, r2, strength, int(dominant_period), drift, spatial, temporal,
                                asdict(thresholds), asdict(counts) if counts is not None else {}, name)


def profile_dataset(ds: TimeSeriesDataset, split: ChronologicalSplit, T_p: int = 12, T_f: int = 12,
                    e_u: float = E_UPPER, e_l: float = E_LOWER, stride: int = 1,
                    candidate_periods=None, drift_window: int | None = None,
                    thresholds: Thresholds = Thresholds(), threads: int = 1,
                    seed: int = 0) -> HeterogeneityProfile:
    counts = indistinguishability_counts(ds, T_p, T_f, e_u, e_l, stride, threads)
    r1, r2 = r1_r2(counts)
    periods = candidate_periods or default_periods(ds.frequency, ds.T)
    strength, period = periodicity_strength(ds, periods)
    window = drift_window or (T_p + T_f)
    scaler = fit_scaler(ds, split)
    drift = drift_score(split.train_range, split.test_range, ds, window, scaler)
    if thresholds.drift is None:
        thr = calibrate_drift_threshold(ds, split.train_range, window, scaler, seed=seed,
                                        test_windows=_n_windows(*split.test_range, window, 2000))
        thresholds = Thresholds(thresholds.r1, thresholds.r2, thresholds.strength, thr)
    return classify(r1, r2, strength, period, drift, thresholds, counts, ds.name)


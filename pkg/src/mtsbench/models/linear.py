"""Linear forecasters: plain, level-shifted (NLinear) and decomposed (DLinear).

Each model maps a normalized history ``B x T_p x N`` to a forecast
``B x T_f x N`` through one or two affine maps over the time axis. In
``independent`` channel mode a single ``T_p x T_f`` weight matrix is shared
by all variates; ``per-channel`` keeps one matrix per variate.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from ..errors import SingularSystem, SpecError
from . import baselines

KINDS = ("naive-last", "seasonal-naive", "historical-average", "linear", "dlinear", "nlinear")
LINEAR_KINDS = ("linear", "dlinear", "nlinear")
CHANNEL_MODES = ("independent", "per-channel")


@dataclass(frozen=True)
class ForecasterSpec:
    kind: str
    T_p: int
    T_f: int
    channel_mode: str = "independent"
    kernel: int = 25
    season: int = 1
    ridge: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown forecaster kind {self.kind!r}")
        if self.T_p < 1 or self.T_f < 1:
            raise SpecError(f"T_p and T_f must be >= 1, got {self.T_p}, {self.T_f}")
        if self.channel_mode not in CHANNEL_MODES:
            raise SpecError(f"unknown channel mode {self.channel_mode!r}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise SpecError(f"kernel must be odd and >= 1, got {self.kernel}")
        if self.season < 1:
            raise SpecError(f"season must be >= 1, got {self.season}")
        if self.ridge < 0:
            raise SpecError(f"ridge must be non-negative, got {self.ridge}")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class LinearWeights:
    W: np.ndarray
    b: np.ndarray


@lru_cache(maxsize=32)
def moving_average_matrix(T_p: int, kernel: int) -> np.ndarray:
    """``M`` with ``trend = M @ x``: centered mean, replicate-padded ends."""
    if kernel < 1 or kernel % 2 == 0:
        raise SpecError(f"kernel must be odd and >= 1, got {kernel}")
    half = kernel // 2
    M = np.zeros((T_p, T_p))
    for t in range(T_p):
        for o in range(-half, half + 1):
            M[t, min(max(t + o, 0), T_p - 1)] += 1.0 / kernel
    M.flags.writeable = False
    return M


def dlinear_decompose(history, kernel: int):
    """Split ``history`` (time on axis -2) into moving-average trend and remainder."""
    history = np.asarray(history, dtype=np.float64)
    M = moving_average_matrix(history.shape[-2], kernel)
    trend = np.matmul(M, history)
    return trend, history - trend


def nlinear_shift(history):
    history = np.asarray(history, dtype=np.float64)
    offset = history[..., -1:, :]
    return history - offset, offset


def nlinear_unshift(prediction, offset):
    return prediction + offset


class Forecaster:
    """Common surface: ``predict`` maps normalized history to normalized future."""

    trainable = False

    def __init__(self, spec: ForecasterSpec, n_channels: int):
        self.spec = spec
        self.n_channels = n_channels
        self.params: dict[str, np.ndarray] = {}

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def predict(self, history, history_mask=None) -> np.ndarray:
        s = self.spec
        if s.kind == "naive-last":
            return baselines.predict_naive_last(history, s.T_f)
        if s.kind == "seasonal-naive":
            return baselines.predict_seasonal_naive(history, s.T_f, s.season)
        if s.kind == "historical-average":
            return baselines.predict_historical_average(history, s.T_f, history_mask)
        raise NotImplementedError(s.kind)


class LinearModel(Forecaster):
    trainable = True

    def __init__(self, spec: ForecasterSpec, n_channels: int, params=None):
        if spec.kind not in LINEAR_KINDS:
            raise SpecError(f"{spec.kind!r} is not a linear kind")
        super().__init__(spec, n_channels)
        self.params = {k: np.array(v, dtype=np.float64) for k, v in (params or {}).items()}

    def param_shapes(self) -> dict:
        s = self.spec
        if s.channel_mode == "independent":
            w, b = (s.T_p, s.T_f), (s.T_f,)
        else:
            w, b = (self.n_channels, s.T_p, s.T_f), (self.n_channels, s.T_f)
        names = ("trend", "season") if s.kind == "dlinear" else ("",)
        shapes = {}
        for n in names:
            suffix = f"_{n}" if n else ""
            shapes["W" + suffix] = w
            shapes["b" + suffix] = b
        return shapes

    def init_params(self, rng: np.random.Generator) -> "LinearModel":
        bound = 1.0 / np.sqrt(self.spec.T_p)
        self.params = {k: rng.uniform(-bound, bound, size=shape)
                       for k, shape in self.param_shapes().items()}
        return self

    def weights(self) -> list[LinearWeights]:
        if self.spec.kind == "dlinear":
            return [LinearWeights(self.params["W_trend"], self.params["b_trend"]),
                    LinearWeights(self.params["W_season"], self.params["b_season"])]
        return [LinearWeights(self.params["W"], self.params["b"])]

    def _inputs(self, history):
        """Per-weight-set inputs and the additive offset, all ``B x T x N``."""
        kind = self.spec.kind
        if kind == "linear":
            return [history], 0.0
        if kind == "nlinear":
            shifted, offset = nlinear_shift(history)
            return [shifted], offset
        trend, rem = dlinear_decompose(history, self.spec.kernel)
        return [trend, rem], 0.0

    def _affine(self, X, W, b):
        if self.spec.channel_mode == "independent":
            return np.matmul(X.transpose(0, 2, 1), W).transpose(0, 2, 1) + b[None, :, None]
        return np.matmul(X.transpose(2, 0, 1), W).transpose(1, 2, 0) + b.T[None]

    def forward(self, history, params=None) -> np.ndarray:
        if params is not None:
            saved, self.params = self.params, params
        try:
            history = np.asarray(history, dtype=np.float64)
            single = history.ndim == 2
            if single:
                history = history[None]
            inputs, offset = self._inputs(history)
            out = offset
            for X, w in zip(inputs, self.weights()):
                out = out + self._affine(X, w.W, w.b)
            return out[0] if single else out
        finally:
            if params is not None:
                self.params = saved

    def predict(self, history, history_mask=None) -> np.ndarray:
        return self.forward(history)

    def loss_and_grad(self, history, future, mask=None, horizon: int | None = None):
        """Masked MAE over the first ``horizon`` steps and its (sub)gradient.

        Residuals that are exactly zero contribute a zero subgradient.
        """
        history = np.asarray(history, dtype=np.float64)
        future = np.asarray(future, dtype=np.float64)
        mask = np.ones(future.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if horizon is not None and horizon < self.spec.T_f:
            mask = mask.copy()
            mask[:, horizon:, :] = False
        n = int(mask.sum())
        if n == 0:
            zeros = {k: np.zeros_like(v) for k, v in self.params.items()}
            return 0.0, zeros
        inputs, offset = self._inputs(history)
        pred = offset
        for X, w in zip(inputs, self.weights()):
            pred = pred + self._affine(X, w.W, w.b)
        resid = pred - future
        loss = float(np.abs(resid)[mask].sum() / n)
        G = np.where(mask, np.sign(resid), 0.0) / n
        names = ["_trend", "_season"] if self.spec.kind == "dlinear" else [""]
        grads = {}
        for X, suffix in zip(inputs, names):
            if self.spec.channel_mode == "independent":
                grads["W" + suffix] = np.tensordot(X, G, axes=([0, 2], [0, 2]))
                grads["b" + suffix] = G.sum(axis=(0, 2))
            else:
                grads["W" + suffix] = np.matmul(X.transpose(2, 1, 0), G.transpose(2, 0, 1))
                grads["b" + suffix] = G.sum(axis=0).T
        return loss, grads


def build_forecaster(spec: ForecasterSpec, n_channels: int) -> Forecaster:
    if spec.kind in LINEAR_KINDS:
        return LinearModel(spec, n_channels)
    return Forecaster(spec, n_channels)


def _design(model: LinearModel, H, F, reduce_dlinear: bool):
    """Flatten ``(window, channel)`` pairs into regression rows.

    Returns features ``B x N x d`` and targets ``B x N x T_f``.
    """
    kind = model.spec.kind
    if kind == "linear" or (kind == "dlinear" and reduce_dlinear):
        X, target = H, F
    elif kind == "nlinear":
        shifted, offset = nlinear_shift(H)
        # the last shifted step is identically zero; leave it out
        X, target = shifted[:, :-1, :], F - offset
    else:
        trend, rem = dlinear_decompose(H, model.spec.kernel)
        X, target = np.concatenate([trend, rem], axis=1), F
    return X.transpose(0, 2, 1), target.transpose(0, 2, 1)


def _solve(gram, rhs, ridge):
    d = gram.shape[-1]
    A = gram + ridge * np.eye(d)
    if ridge == 0:
        cond = float(np.max(np.linalg.cond(A)))
        if not np.isfinite(cond) or cond > 1e13:
            raise SingularSystem(f"normal equations are singular (cond={cond:.3g}); use ridge > 0")
    try:
        return np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"normal equations are singular ({exc}); use ridge > 0") from None


def fit_linear_closed_form(train, spec: ForecasterSpec, n_channels: int,
                           chunk: int | None = None) -> LinearModel:
    """Ridge least squares on all training windows.

    Solves ``(A^T A + ridge I) beta = A^T Y`` where each row of ``A`` is one
    (window, channel) history with a trailing 1 for the bias. Rows whose
    future has a masked entry are dropped. With ``ridge == 0`` a DLinear
    model is fit as the equivalent plain linear map and split evenly across
    its two branches, since the trend/remainder design is rank deficient.
    """
    model = LinearModel(spec, n_channels)
    reduce_dlinear = spec.kind == "dlinear" and spec.ridge == 0
    per_channel = spec.channel_mode == "per-channel"
    gram = rhs = None
    rows = 0
    for H, F, _, Fm in train.chunks(chunk):
        X, Y = _design(model, H, F, reduce_dlinear)
        keep = Fm.all(axis=1)  # (B, N)
        X = np.concatenate([X, np.ones(X.shape[:2] + (1,))], axis=2) * keep[..., None]
        Y = Y * keep[..., None]
        rows += int(keep.sum())
        if per_channel:
            Xc = X.transpose(1, 0, 2)
            g = np.matmul(Xc.transpose(0, 2, 1), Xc)
            r = np.matmul(Xc.transpose(0, 2, 1), Y.transpose(1, 0, 2))
        else:
            Xf = X.reshape(-1, X.shape[2])
            g = Xf.T @ Xf
            r = Xf.T @ Y.reshape(-1, Y.shape[2])
        gram = g if gram is None else gram + g
        rhs = r if rhs is None else rhs + r
    if rows == 0:
        raise SingularSystem("no fully observed training rows")
    beta = _solve(gram, rhs, spec.ridge)
    W, b = beta[..., :-1, :], beta[..., -1, :]
    if spec.kind == "nlinear":
        pad = np.zeros(W.shape[:-2] + (1, W.shape[-1]))
        W = np.concatenate([W, pad], axis=-2)
        model.params = {"W": W, "b": b}
    elif spec.kind == "dlinear" and reduce_dlinear:
        model.params = {"W_trend": W.copy(), "b_trend": b / 2,
                        "W_season": W.copy(), "b_season": b / 2}
    elif spec.kind == "dlinear":
        T_p = spec.T_p
        model.params = {"W_trend": W[..., :T_p, :], "b_trend": b / 2,
                        "W_season": W[..., T_p:, :], "b_season": b / 2}
    else:
        model.params = {"W": W, "b": b}
    model.params = {k: np.ascontiguousarray(v) for k, v in model.params.items()}
    return model

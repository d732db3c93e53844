"""Mini-batch training under masked MAE with clipping and curriculum."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import DivergenceError, SpecError
from ..metrics import MetricAccumulator


@dataclass(frozen=True)
class TrainerConfig:
    method: str = "closed-form"
    lr: float = 5e-3
    epochs: int = 100
    batch_size: int = 64
    clip_norm: float | None = None
    patience: int = 10
    curriculum: bool = False
    curriculum_start: int = 1
    curriculum_step: int = 1
    optimizer: str = "adam"
    # a batch loss this many times the first one counts as divergence
    divergence_factor: float = 1e4
    eval_chunk: int | None = None

    def __post_init__(self):
        if self.method not in ("closed-form", "sgd"):
            raise SpecError(f"unknown fit method {self.method!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise SpecError(f"unknown optimizer {self.optimizer!r}")
        if self.lr <= 0 or self.epochs < 0 or self.batch_size < 1 or self.patience < 1:
            raise SpecError("need lr > 0, epochs >= 0, batch_size >= 1, patience >= 1")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise SpecError(f"clip_norm must be positive, got {self.clip_norm}")
        if self.curriculum_start < 1 or self.curriculum_step < 1:
            raise SpecError("curriculum start and step must be >= 1")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    seconds: float
    horizon: int


def early_stop(val_history, patience: int) -> str:
    """``"stop"`` once the best value has gone ``patience`` epochs without a strict improvement."""
    if patience < 1:
        raise SpecError(f"patience must be >= 1, got {patience}")
    if not val_history:
        return "continue"
    best = math.inf
    since = 0
    for v in val_history:
        if v < best:
            best = v
            since = 0
        else:
            since += 1
    return "stop" if since >= patience else "continue"


def masked_mae_on(model, windows, chunk: int | None = None) -> float:
    """Masked MAE of ``model`` over a :class:`WindowSet` in normalized units."""
    acc = MetricAccumulator()
    for H, F, Hm, Fm in windows.chunks(chunk):
        acc.update(F, model.predict(H, Hm), Fm)
    return acc.result(("mae",))["mae"]


def clip_global_norm(grads: dict, clip_norm: float | None) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if clip_norm is not None and norm > clip_norm:
        scale = clip_norm / norm
        for k in grads:
            grads[k] = grads[k] * scale
    return norm


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class _SGD:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for k, g in grads.items():
            params[k] = params[k] - self.lr * g


def sgd_fit(model, train, val, config: TrainerConfig, rng: np.random.Generator):
    """Train ``model`` in place; keep the parameters with the best validation MAE.

    Returns ``(model, records)`` with one :class:`EpochRecord` per epoch run.
    """
    records: list[EpochRecord] = []
    if config.epochs == 0:
        return model, records
    params = {k: v.copy() for k, v in model.params.items()}
    opt = _Adam(params, config.lr) if config.optimizer == "adam" else _SGD(params, config.lr)
    best_params = {k: v.copy() for k, v in params.items()}
    best_val = math.inf
    first_loss = None
    T_f = model.spec.T_f
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        if config.curriculum:
            horizon = min(T_f, config.curriculum_start + epoch * config.curriculum_step)
        else:
            horizon = T_f
        order = rng.permutation(len(train))
        losses = []
        for bi, start in enumerate(range(0, len(order), config.batch_size)):
            idx = np.sort(order[start:start + config.batch_size])
            H, F, _, Fm = train.batch(idx)
            model.params = params
            loss, grads = model.loss_and_grad(H, F, Fm, horizon)
            if first_loss is None:
                first_loss = max(loss, 1e-12)
            if not math.isfinite(loss) or loss > config.divergence_factor * first_loss:
                raise DivergenceError(epoch, bi, loss)
            clip_global_norm(grads, config.clip_norm)
            opt.step(params, grads)
            losses.append(loss)
        model.params = params
        val_loss = masked_mae_on(model, val, config.eval_chunk)
        if not math.isfinite(val_loss):
            raise DivergenceError(epoch, -1, val_loss)
        records.append(EpochRecord(epoch, float(np.mean(losses)), val_loss,
                                   time.perf_counter() - t0, horizon))
        if val_loss < best_val:
            best_val = val_loss
            best_params = {k: v.copy() for k, v in params.items()}
        if early_stop([r.val_loss for r in records], config.patience) == "stop":
            break
    model.params = best_params
    return model, records

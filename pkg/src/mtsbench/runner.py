"""Train / validate / test orchestration shared by every forecaster."""
from __future__ import annotations

import json
import logging
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path

import numpy as np

from . import __version__
from .catalog import CATALOG, load_named
from .config import ExperimentConfig, config_from_json
from .dataset import TimeSeriesDataset, chronological_split, load_dataset
from .errors import BenchError, ConfigError
from .metrics import MetricAccumulator, MetricReport
from .models import (build_forecaster, early_stop, fit_linear_closed_form,
                     load_model, masked_mae_on, save_model, sgd_fit)
from .preprocess import WindowSet, ZScoreScaler, fit_scaler

log = logging.getLogger(__name__)

MIN_BATCH_SIZE = 8
HISTORY_LENGTHS = (96, 192, 336, 720)

__all__ = ["ExperimentResult", "run_experiment", "sweep_history_length", "early_stop",
           "evaluate_result_dir", "load_experiment_dataset"]


@dataclass
class ExperimentResult:
    config: dict
    dataset: dict
    model: dict
    curve: list
    best_epoch: int
    val_mae: float
    test_metrics: MetricReport
    effective_batch_size: int
    scaler: dict
    timing: dict = field(default_factory=dict)
    output_dir: str | None = None

    def to_json(self) -> dict:
        return {
            "version": __version__,
            "config": self.config,
            "dataset": self.dataset,
            "model": self.model,
            "curve": self.curve,
            "best_epoch": self.best_epoch,
            "val_mae": self.val_mae,
            "test_metrics": self.test_metrics.to_json(),
            "effective_batch_size": self.effective_batch_size,
            "scaler": self.scaler,
            "timing": self.timing,
        }


class StageError(BenchError):
    """Wraps a module error with the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: BenchError):
        self.stage = stage
        self.cause = cause
        self.exit_code = cause.exit_code
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if isinstance(exc, BenchError) and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def load_experiment_dataset(cfg: ExperimentConfig) -> TimeSeriesDataset:
    if not cfg.dataset_path:
        return load_named(cfg.dataset_name)
    info = CATALOG.get(cfg.dataset_name)
    frequency = cfg.frequency or (info.frequency if info else None)
    if cfg.start_time:
        start = datetime.fromisoformat(cfg.start_time)
    else:
        start = info.start_time if info else None
    return load_dataset(cfg.dataset_path, cfg.dataset_format or None, frequency, start,
                        cfg.dataset_name or None, cfg.has_header, cfg.sentinel,
                        cfg.skip_columns, cfg.max_rows or None)


def _evaluate_test(model, scaler: ZScoreScaler, test: WindowSet, metric_set, chunk=None) -> MetricReport:
    acc = MetricAccumulator()
    for H, F, Hm, Fm in test.chunks(chunk):
        pred = model.predict(H, Hm)
        acc.update(scaler.inverse_transform(F), scaler.inverse_transform(pred), Fm)
    return acc.result(metric_set)


def _fit(model, cfg: ExperimentConfig, train, val):
    trainer = cfg.trainer_config()
    if not model.trainable:
        return model, [], trainer.batch_size
    if trainer.method == "closed-form":
        spec = cfg.forecaster_spec()
        return fit_linear_closed_form(train, spec, model.n_channels), [], trainer.batch_size
    batch = trainer.batch_size
    while True:
        # every attempt replays the same seeded init and shuffles
        rng = np.random.default_rng(cfg.seed)
        model.init_params(rng)
        try:
            fitted, records = sgd_fit(model, train, val, replace(trainer, batch_size=batch), rng)
            return fitted, records, batch
        except MemoryError:
            if batch // 2 < MIN_BATCH_SIZE:
                raise
            log.warning("out of memory at batch size %d; retrying with %d", batch, batch // 2)
            batch //= 2


def _write_atomic(out_dir: Path, files: dict, model) -> None:
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.", dir=out_dir.parent))
    try:
        for name, text in files.items():
            (tmp / name).write_text(text)
        save_model(model, tmp / "checkpoint.bin")
        if out_dir.exists():
            trash = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.old.", dir=out_dir.parent))
            os.replace(out_dir, trash / "old")
            os.replace(tmp, out_dir)
            shutil.rmtree(trash, ignore_errors=True)
        else:
            os.replace(tmp, out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def run_experiment(cfg: ExperimentConfig, ds: TimeSeriesDataset | None = None,
                   persist: bool = True) -> ExperimentResult:
    """load -> split -> scale -> window -> fit -> evaluate best on test -> persist."""
    t_start = time.perf_counter()
    with _Stage("load"):
        if ds is None:
            ds = load_experiment_dataset(cfg)
    with _Stage("split"):
        split = chronological_split(ds, cfg.resolved_split)
    with _Stage("scale"):
        scaler = fit_scaler(ds, split)
    with _Stage("window"):
        train = WindowSet.from_dataset(ds, scaler, split.train_range, cfg.T_p, cfg.T_f, cfg.train_stride)
        val = WindowSet.from_dataset(ds, scaler, split.val_range, cfg.T_p, cfg.T_f)
        test = WindowSet.from_dataset(ds, scaler, split.test_range, cfg.T_p, cfg.T_f)
    with _Stage("fit"):
        model = build_forecaster(cfg.forecaster_spec(), ds.N)
        t_fit = time.perf_counter()
        model, records, batch = _fit(model, cfg, train, val)
        fit_seconds = time.perf_counter() - t_fit
    with _Stage("validate"):
        val_mae = masked_mae_on(model, val)
    with _Stage("test"):
        report = _evaluate_test(model, scaler, test, cfg.resolved_metrics)
    if records:
        best_epoch = int(np.argmin([r.val_loss for r in records]))
        per_epoch = [r.seconds for r in records]
    else:
        best_epoch = 0
        per_epoch = [fit_seconds]
    curve = [{"epoch": r.epoch, "train_loss": r.train_loss, "val_loss": r.val_loss,
              "horizon": r.horizon} for r in records]
    result = ExperimentResult(
        config=cfg.to_json(),
        dataset={"name": ds.name, "T": ds.T, "N": ds.N, "frequency": ds.frequency,
                 "train_range": list(split.train_range), "val_range": list(split.val_range),
                 "test_range": list(split.test_range), "n_train_windows": len(train),
                 "n_val_windows": len(val), "n_test_windows": len(test)},
        model={"spec": cfg.forecaster_spec().to_json(), "trainer": cfg.trainer_config().to_json(),
               "n_params": model.n_params, "param_millions": model.n_params / 1e6},
        curve=curve,
        best_epoch=best_epoch,
        val_mae=val_mae,
        test_metrics=report,
        effective_batch_size=batch,
        scaler={"mean": scaler.mean.tolist(), "std": scaler.std.tolist()},
        timing={"seconds_per_epoch": float(np.mean(per_epoch)), "epoch_seconds": per_epoch,
                "fit_seconds": fit_seconds},
    )
    result.timing["total_seconds"] = time.perf_counter() - t_start
    if persist:
        out = Path(cfg.output_dir)
        curve_csv = "epoch,train_loss,val_loss\n" + "".join(
            f"{r['epoch']},{r['train_loss']!r},{r['val_loss']!r}\n" for r in curve)
        with _Stage("persist"):
            _write_atomic(out, {"config.json": _dump(cfg.to_json()),
                                "result.json": _dump(result.to_json()),
                                "curve.csv": curve_csv}, model)
        result.output_dir = str(out)
    log.info("%s/%s T_p=%d: val MAE %.4f, test %s", ds.name, cfg.model, cfg.T_p, val_mae,
             report.values)
    return result


@dataclass
class SweepResult:
    best: ExperimentResult
    runs: dict

    def to_json(self) -> dict:
        return {"best_T_p": self.best.config["T_p"],
                "val_mae": {str(k): r.val_mae for k, r in self.runs.items()},
                "best": self.best.to_json()}


def sweep_history_length(cfg: ExperimentConfig, lengths=HISTORY_LENGTHS,
                         ds: TimeSeriesDataset | None = None, persist: bool = True) -> SweepResult:
    """One run per history length; the lowest validation MAE wins, ties go to the first."""
    if not lengths:
        raise ConfigError("no history lengths to sweep")
    if ds is None:
        with _Stage("load"):
            ds = load_experiment_dataset(cfg)
    runs = {}
    best = None
    base = Path(cfg.output_dir)
    for L in lengths:
        sub = cfg.replace(T_p=int(L), output_dir=str(base / f"T_p={L}"))
        res = run_experiment(sub, ds, persist)
        runs[int(L)] = res
        if best is None or res.val_mae < best.val_mae:
            best = res
    sweep = SweepResult(best, runs)
    if persist:
        base.mkdir(parents=True, exist_ok=True)
        (base / "sweep.json").write_text(_dump(sweep.to_json()))
    return sweep


def load_result(result_dir) -> dict:
    path = Path(result_dir) / "result.json"
    if not path.is_file():
        raise ConfigError(f"no result.json in {result_dir}")
    return json.loads(path.read_text())


def evaluate_result_dir(result_dir, ds: TimeSeriesDataset | None = None) -> MetricReport:
    """Recompute test metrics from a persisted config and checkpoint."""
    result_dir = Path(result_dir)
    cfg_path = result_dir / "config.json"
    ckpt = result_dir / "checkpoint.bin"
    if not cfg_path.is_file() or not ckpt.is_file():
        raise ConfigError(f"{result_dir} is not a result directory")
    cfg = config_from_json(json.loads(cfg_path.read_text()))
    if ds is None:
        ds = load_experiment_dataset(cfg)
    split = chronological_split(ds, cfg.resolved_split)
    scaler = fit_scaler(ds, split)
    test = WindowSet.from_dataset(ds, scaler, split.test_range, cfg.T_p, cfg.T_f)
    model = load_model(ckpt)
    return _evaluate_test(model, scaler, test, cfg.resolved_metrics)


"""Flat, typed experiment configuration.

A config file is a list of ``key = value`` lines (``#`` comments allowed,
no sections). Every key is a field of :class:`ExperimentConfig`; values are
converted according to the field's type. Lists are comma separated.

Precedence, lowest to highest: field defaults, the file, environment
variables named ``MTSBENCH_<KEY>`` (e.g. ``MTSBENCH_SEED=3``), explicit
overrides passed by the caller (CLI flags).
"""
from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .dataset import default_split_ratios
from .errors import ConfigError
from .metrics import LTSF_METRICS, MASKED_METRICS, STF_METRICS
from .models.linear import ForecasterSpec
from .models.training import TrainerConfig

ENV_PREFIX = "MTSBENCH_"


@dataclass(frozen=True)
class ExperimentConfig:
    # dataset
    dataset_name: str = ""
    dataset_path: str = ""
    dataset_format: str = ""
    frequency: int = 0
    start_time: str = ""
    has_header: bool = False
    skip_columns: int = 0
    max_rows: int = 0
    sentinel: str = "NaN"
    split_ratios: tuple = ()
    # windows
    T_p: int = 96
    T_f: int = 336
    train_stride: int = 1
    # forecaster
    model: str = "linear"
    channel_mode: str = "independent"
    kernel: int = 25
    season: int = 1
    ridge: float = 1.0
    # trainer
    method: str = "closed-form"
    lr: float = 5e-3
    epochs: int = 100
    batch_size: int = 64
    clip_norm: float = 0.0
    patience: int = 10
    curriculum: bool = False
    curriculum_start: int = 1
    curriculum_step: int = 1
    optimizer: str = "adam"
    # run
    seed: int = 0
    metrics: tuple = ()
    output_dir: str = "runs/experiment"
    threads: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.T_p < 1 or self.T_f < 1:
            raise ConfigError(f"T_p and T_f must be positive, got {self.T_p}, {self.T_f}")
        if not (self.dataset_name or self.dataset_path):
            raise ConfigError("one of dataset_name or dataset_path is required")
        bad = [m for m in self.metrics if m not in MASKED_METRICS]
        if bad:
            raise ConfigError(f"unknown metrics {bad}; choose from {MASKED_METRICS}")

    @property
    def resolved_split(self) -> tuple:
        if self.split_ratios:
            return tuple(self.split_ratios)
        return default_split_ratios(self.dataset_name)

    @property
    def resolved_metrics(self) -> tuple:
        if self.metrics:
            return tuple(self.metrics)
        # long horizons skip MAPE: LTSF data is full of zeros
        return STF_METRICS if self.T_f <= 12 else LTSF_METRICS

    def forecaster_spec(self) -> ForecasterSpec:
        return ForecasterSpec(self.model, self.T_p, self.T_f, self.channel_mode,
                              self.kernel, self.season, self.ridge)

    def trainer_config(self) -> TrainerConfig:
        return TrainerConfig(self.method, self.lr, self.epochs, self.batch_size,
                             self.clip_norm or None, self.patience, self.curriculum,
                             self.curriculum_start, self.curriculum_step, self.optimizer)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        out["split_ratios"] = list(self.resolved_split)
        out["metrics"] = list(self.resolved_metrics)
        return out


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(key: str, raw):
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    ftype = _FIELDS[key].type
    if not isinstance(raw, str):
        if ftype == "tuple":
            return tuple(raw)
        return raw
    text = raw.strip()
    try:
        if ftype == "int":
            return int(text)
        if ftype == "float":
            return float(text)
        if ftype == "bool":
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if ftype == "tuple":
            items = [t.strip() for t in text.split(",") if t.strip()]
            if key == "split_ratios":
                return tuple(float(t) for t in items)
            return tuple(items)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {ftype}") from None
    return text


def parse_config_text(text: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                       inline_comment_prefixes=("#",), delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return {k: _convert(k, v) for k, v in parser["config"].items()}


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for key in _FIELDS:
        var = ENV_PREFIX + key.upper()
        if var in environ:
            out[key] = _convert(key, environ[var])
    return out


def load_config(path=None, overrides=None, environ=None) -> ExperimentConfig:
    values = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values.update(parse_config_text(path.read_text()))
    values.update(env_overrides(environ))
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = _convert(k, v)
    return ExperimentConfig(**values)


def config_from_json(obj: dict) -> ExperimentConfig:
    return ExperimentConfig(**{k: _convert(k, v) for k, v in obj.items()})


def render_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key, value in cfg.to_json().items():
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"

"""Tabulation of experiment results, gap comparisons and profiles."""
from __future__ import annotations

import csv
import io
import json
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path

from .errors import ConfigError, DegenerateScale, ReportError
from .metrics import FRACTION_METRICS, gap

METRIC_LABELS = {"mae": "MAE", "rmse": "RMSE", "mse": "MSE", "mape": "MAPE", "wape": "WAPE",
                 "smape": "sMAPE", "mase": "MASE", "owa": "OWA",
                 "param": "Param", "speed": "Speed"}


def round_half_even(value: float, places: int) -> str:
    q = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(value))).quantize(q, rounding=ROUND_HALF_EVEN))


def render_value(metric: str, value) -> str:
    """Percent metrics as ``12.34%``; others with 2 decimals, 4 below magnitude 1."""
    if value is None:
        return "-"
    if metric in FRACTION_METRICS:
        return round_half_even(value * 100.0, 2) + "%"
    places = 4 if abs(value) < 1 and metric not in ("param", "speed") else 2
    return round_half_even(value, places)


def read_manifest(path) -> list[dict]:
    """``{"runs": [{"dataset": ..., "model": ..., "result": dir}, ...]}``."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"manifest not found: {path}")
    try:
        runs = json.loads(path.read_text())["runs"]
    except (ValueError, KeyError) as exc:
        raise ReportError(f"malformed manifest {path}: {exc}") from None
    out = []
    for r in runs:
        res_dir = Path(r["result"])
        if not res_dir.is_absolute():
            res_dir = path.parent / res_dir
        res_file = res_dir / "result.json"
        if not res_file.is_file():
            raise ReportError(f"missing result: {res_file}")
        out.append({"dataset": r["dataset"], "model": r["model"],
                    "result": json.loads(res_file.read_text())})
    return out


def build_table(entries) -> dict:
    """Rows are models; columns are (dataset, metric) plus Param and Speed."""
    if not entries:
        raise ReportError("no results to tabulate")
    metric_sets = {tuple(e["result"]["config"]["metrics"]) for e in entries}
    if len(metric_sets) != 1:
        raise ReportError(f"results use different metric sets: {sorted(metric_sets)}")
    metrics = list(metric_sets.pop())
    datasets, models, cells = [], [], {}
    for e in entries:
        ds, model, res = e["dataset"], e["model"], e["result"]
        if ds not in datasets:
            datasets.append(ds)
        if model not in models:
            models.append(model)
        row = {m: res["test_metrics"][m] for m in metrics}
        row["param"] = res["model"]["param_millions"]
        row["speed"] = res["timing"]["seconds_per_epoch"]
        cells.setdefault(model, {})[ds] = row
    return {"datasets": datasets, "models": models, "metrics": metrics + ["param", "speed"],
            "cells": cells}


def _columns(table):
    return [(ds, m) for ds in table["datasets"] for m in table["metrics"]]


def _best(table):
    best = {}
    for ds, m in _columns(table):
        vals = [table["cells"].get(model, {}).get(ds, {}).get(m) for model in table["models"]]
        vals = [v for v in vals if v is not None]
        if vals:
            best[(ds, m)] = min(vals)
    return best


def render_markdown(table: dict) -> str:
    cols = _columns(table)
    best = _best(table)
    head = ["Model"] + [f"{ds} {METRIC_LABELS.get(m, m)}" for ds, m in cols]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for model in table["models"]:
        row = [model]
        for ds, m in cols:
            v = table["cells"].get(model, {}).get(ds, {}).get(m)
            text = render_value(m, v)
            if v is not None and v == best.get((ds, m)):
                text = f"**{text}**"
            row.append(text)
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def render_csv(table: dict) -> str:
    cols = _columns(table)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model"] + [f"{ds}:{m}" for ds, m in cols])
    for model in table["models"]:
        row = [model]
        for ds, m in cols:
            v = table["cells"].get(model, {}).get(ds, {}).get(m)
            row.append("" if v is None else repr(float(v)))
        w.writerow(row)
    return buf.getvalue()


def render_json(table: dict) -> str:
    return json.dumps(table, indent=2, sort_keys=True) + "\n"


def table_from_json(text: str) -> dict:
    obj = json.loads(text)
    for key in ("datasets", "models", "metrics", "cells"):
        if key not in obj:
            raise ReportError(f"report JSON lacks {key!r}")
    return obj


def render_table(table: dict, fmt: str) -> str:
    if fmt == "markdown":
        return render_markdown(table)
    if fmt == "csv":
        return render_csv(table)
    if fmt == "json":
        return render_json(table)
    raise ConfigError(f"unknown report format {fmt!r}")


def read_values(path) -> dict:
    """``metric,value`` CSV (header optional); ``12.3%`` is read as 0.123."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"values file not found: {path}")
    out = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() in ("metric", ""):
                continue
            name, raw = row[0].strip().lower(), row[1].strip()
            try:
                out[name] = float(raw[:-1]) / 100.0 if raw.endswith("%") else float(raw)
            except ValueError:
                raise ReportError(f"{path}: bad value {raw!r} for {name}") from None
    return out


def gap_rows(reported: dict, reproduced: dict) -> list[dict]:
    rows = []
    for metric, x in reported.items():
        y = reproduced.get(metric)
        if y is None:
            rows.append({"metric": metric, "reported": x, "reproduced": None, "gap": None,
                         "error": "no reproduced value"})
            continue
        try:
            rows.append({"metric": metric, "reported": x, "reproduced": y, "gap": gap(x, y),
                         "error": None})
        except DegenerateScale as exc:
            rows.append({"metric": metric, "reported": x, "reproduced": y, "gap": None,
                         "error": str(exc)})
    return rows


def render_gap(rows) -> str:
    lines = ["| Metric | Reported | Reproduced | Gap |", "|---|---|---|---|"]
    for r in rows:
        m = r["metric"]
        g = f"ERROR: {r['error']}" if r["error"] else round_half_even(r["gap"], 2) + "%"
        lines.append(f"| {METRIC_LABELS.get(m, m)} | {render_value(m, r['reported'])} | "
                     f"{render_value(m, r['reproduced'])} | {g} |")
    return "\n".join(lines) + "\n"


def render_profiles(profiles) -> str:
    """Plain-text r1/r2 table with bars, one row per dataset."""
    width = 30
    lines = [f"{'dataset':<14}{'r1':>9}{'r2':>9}  {'spatial':<16}{'temporal':<19}r2 bar"]
    for p in profiles:
        bar = "#" * int(round(p.r2 * width))
        lines.append(f"{p.name:<14}{p.r1 * 100:>8.2f}%{p.r2 * 100:>8.2f}%  "
                     f"{p.spatial_label:<16}{p.temporal_label:<19}{bar}")
    return "\n".join(lines) + "\n"

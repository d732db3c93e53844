"""Command-line entry point: profile, train, evaluate, report, gap.

Exit codes: 0 success, 2 usage error, 3 data error, 4 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime
from pathlib import Path

from . import heterogeneity as het
from .catalog import CATALOG, load_named
from .config import load_config
from .dataset import chronological_split, default_split_ratios, load_dataset
from .errors import BenchError, UsageError
from .report import (build_table, gap_rows, read_manifest, read_values, render_gap,
                     render_profiles, render_table)
from .runner import evaluate_result_dir, load_result, run_experiment, sweep_history_length

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default)
    parser.add_argument("--threads", type=int, default=argparse.SUPPRESS if suppress else 1)
    parser.add_argument("--output-dir", default=default)
    parser.add_argument("--has-header", action="store_true",
                        default=argparse.SUPPRESS if suppress else False)


def _csv_floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _csv_ints(text):
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mtsbench", description=__doc__.splitlines()[0])
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("profile", help="spatial/temporal heterogeneity of datasets")
    _global_flags(pr, suppress=True)
    pr.add_argument("datasets", nargs="+", help="data files or catalogued dataset names")
    pr.add_argument("--format", choices=["csv", "binary-cache"])
    pr.add_argument("--frequency", type=int, help="sampling interval in seconds (CSV input)")
    pr.add_argument("--start-time", type=datetime.fromisoformat)
    pr.add_argument("--skip-columns", type=int, default=0)
    pr.add_argument("--data-dir")
    pr.add_argument("--tp", type=int, default=12)
    pr.add_argument("--tf", type=int, default=12)
    pr.add_argument("--stride", type=int, default=1)
    pr.add_argument("--eu", type=float, default=het.E_UPPER)
    pr.add_argument("--el", type=float, default=het.E_LOWER)
    pr.add_argument("--theta-r1", type=float, default=0.01)
    pr.add_argument("--theta-r2", type=float, default=0.2)
    pr.add_argument("--strength-threshold", type=float, default=0.5)
    pr.add_argument("--drift-threshold", type=float)
    pr.add_argument("--periods", type=_csv_ints)
    pr.add_argument("--drift-window", type=int)
    pr.add_argument("--split", type=_csv_floats)

    tr = sub.add_parser("train", help="run one experiment (or a history-length sweep)")
    _global_flags(tr, suppress=True)
    tr.add_argument("config")
    tr.add_argument("--sweep", type=_csv_ints, metavar="LENGTHS",
                    help="comma-separated history lengths, e.g. 96,192,336,720")

    ev = sub.add_parser("evaluate", help="recompute test metrics of a result directory")
    _global_flags(ev, suppress=True)
    ev.add_argument("result_dir")

    rp = sub.add_parser("report", help="tabulate results listed in a manifest")
    _global_flags(rp, suppress=True)
    rp.add_argument("manifest")
    rp.add_argument("--format", choices=["json", "csv", "markdown"], default="markdown")

    gp = sub.add_parser("gap", help="reported vs reproduced gap table")
    _global_flags(gp, suppress=True)
    gp.add_argument("reported", help="metric,value CSV of reported numbers")
    gp.add_argument("reproduced", help="result directory or metric,value CSV")
    return p


def _load_profile_dataset(arg, args):
    path = Path(arg)
    if path.is_file():
        info = CATALOG.get(path.stem)
        freq = args.frequency or (info.frequency if info else None)
        start = args.start_time or (info.start_time if info else None)
        return load_dataset(path, args.format, freq, start, path.stem, args.has_header,
                            skip_columns=args.skip_columns)
    if arg in CATALOG:
        return load_named(arg, args.data_dir)
    raise UsageError(f"{arg}: neither a file nor a catalogued dataset")


def cmd_profile(args) -> int:
    if not args.el < args.eu:
        raise UsageError(f"--el ({args.el}) must be below --eu ({args.eu})")
    thresholds = het.Thresholds(args.theta_r1, args.theta_r2, args.strength_threshold,
                                args.drift_threshold)
    profiles = []
    for arg in args.datasets:
        ds = _load_profile_dataset(arg, args)
        split = chronological_split(ds, args.split or default_split_ratios(ds.name))
        profiles.append(het.profile_dataset(
            ds, split, args.tp, args.tf, args.eu, args.el, args.stride, args.periods,
            args.drift_window, thresholds, args.threads, args.seed or 0))
    table = render_profiles(profiles)
    payload = json.dumps([p.to_json() for p in profiles], indent=2, sort_keys=True) + "\n"
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "profile.json").write_text(payload)
        (out / "profile.txt").write_text(table)
    else:
        sys.stdout.write(payload)
    sys.stdout.write(table)
    return EXIT_OK


def cmd_train(args) -> int:
    overrides = {"seed": args.seed, "output_dir": args.output_dir, "threads": args.threads}
    if args.has_header:
        overrides["has_header"] = True
    cfg = load_config(args.config, overrides)
    if args.sweep:
        sweep = sweep_history_length(cfg, args.sweep)
        best = sweep.best
        print(f"best T_p={best.config['T_p']} -> {best.output_dir}")
    else:
        best = run_experiment(cfg)
        print(best.output_dir)
    print(json.dumps(best.test_metrics.to_json(), sort_keys=True))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    stored = load_result(args.result_dir)["test_metrics"]
    report = evaluate_result_dir(args.result_dir).to_json()
    print(json.dumps(report, sort_keys=True))
    if report != stored:
        print("recomputed metrics differ from result.json", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_report(args) -> int:
    table = build_table(read_manifest(args.manifest))
    text = render_table(table, args.format)
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        ext = {"markdown": "md", "csv": "csv", "json": "json"}[args.format]
        (out / f"report.{ext}").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_gap(args) -> int:
    reported = read_values(args.reported)
    src = Path(args.reproduced)
    if src.is_dir():
        metrics = load_result(src)["test_metrics"]
        reproduced = {k: v for k, v in metrics.items() if v is not None and k != "n_evaluated"}
    else:
        reproduced = read_values(src)
    rows = gap_rows(reported, reproduced)
    sys.stdout.write(render_gap(rows))
    return EXIT_DATA if any(r["error"] for r in rows) else EXIT_OK


COMMANDS = {"profile": cmd_profile, "train": cmd_train, "evaluate": cmd_evaluate,
            "report": cmd_report, "gap": cmd_gap}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except BenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MemoryError as exc:
        print(f"error: out of memory: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

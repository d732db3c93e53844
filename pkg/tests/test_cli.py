import json
import subprocess
import sys

import numpy as np
import pytest

from mtsbench.cli import main


@pytest.fixture
def data_csv(tmp_path):
    rng = np.random.default_rng(0)
    t = np.arange(600)
    X = np.stack([np.sin(2 * np.pi * t / 24 + i) * 5 + 10 + rng.normal(0, 0.3, t.size) for i in range(3)], 1)
    p = tmp_path / "syn.csv"
    np.savetxt(p, X, delimiter=",", fmt="%.6f")
    return p


@pytest.fixture
def config(tmp_path, data_csv):
    p = tmp_path / "run.cfg"
    p.write_text(f"dataset_path = {data_csv}\ndataset_name = syn\nfrequency = 3600\n"
                 "T_p = 24\nT_f = 12\nmodel = nlinear\nmethod = sgd\nepochs = 2\n")
    return p


def test_train_missing_config_is_usage_error(tmp_path, capsys):
    assert main(["train", str(tmp_path / "none.cfg")]) == 2
    assert "not found" in capsys.readouterr().err


def test_train_then_evaluate(tmp_path, config, capsys):
    out = tmp_path / "out"
    assert main(["train", str(config), "--output-dir", str(out), "--seed", "7"]) == 0
    assert (out / "result.json").is_file()
    stored = json.loads((out / "result.json").read_text())
    assert stored["config"]["seed"] == 7
    capsys.readouterr()
    assert main(["evaluate", str(out)]) == 0
    printed = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert printed == stored["test_metrics"]


def test_global_flags_before_subcommand(tmp_path, config):
    out = tmp_path / "g"
    assert main(["--seed", "5", "--output-dir", str(out), "train", str(config)]) == 0
    assert json.loads((out / "result.json").read_text())["config"]["seed"] == 5


def test_train_sweep(tmp_path, config, capsys):
    out = tmp_path / "sw"
    assert main(["train", str(config), "--sweep", "12,24", "--output-dir", str(out)]) == 0
    assert json.loads((out / "sweep.json").read_text())["best_T_p"] in (12, 24)


def test_data_error_exit_code(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3\n")
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"dataset_path = {bad}\nfrequency = 60\n")
    assert main(["train", str(cfg), "--output-dir", str(tmp_path / "o")]) == 3
    assert not (tmp_path / "o").exists()


def test_report_formats(tmp_path, config, capsys):
    for model in ("nlinear", "linear"):
        c = tmp_path / f"{model}.cfg"
        c.write_text(config.read_text().replace("nlinear", model).replace("method = sgd", "method = closed-form"))
        assert main(["train", str(c), "--output-dir", str(tmp_path / model)]) == 0
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"runs": [{"dataset": "syn", "model": m, "result": m}
                                             for m in ("nlinear", "linear")]}))
    capsys.readouterr()
    assert main(["report", str(manifest)]) == 0
    md = capsys.readouterr().out
    assert md.count("\n") == 4 and "syn MAE" in md
    assert main(["report", str(manifest), "--format", "json", "--output-dir", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "report.json").is_file()


@pytest.mark.parametrize("reported,reproduced,expected", [
    (28.15, 18.80, "33.21%"), (24.70, 19.66, "20.40%"), (3.0, 3.0, "0.00%")])
def test_gap_command(tmp_path, capsys, reported, reproduced, expected):
    (tmp_path / "a.csv").write_text(f"mae,{reported}\n")
    (tmp_path / "b.csv").write_text(f"mae,{reproduced}\n")
    assert main(["gap", str(tmp_path / "a.csv"), str(tmp_path / "b.csv")]) == 0
    assert f"| {expected} |" in capsys.readouterr().out


def test_gap_zero_reported_flags_row(tmp_path, capsys):
    (tmp_path / "a.csv").write_text("mae,0\n")
    (tmp_path / "b.csv").write_text("mae,1.5\n")
    assert main(["gap", str(tmp_path / "a.csv"), str(tmp_path / "b.csv")]) != 0
    assert "ERROR" in capsys.readouterr().out


def test_profile_single_channel(tmp_path, capsys):
    p = tmp_path / "one.csv"
    np.savetxt(p, np.sin(np.arange(400) / 4)[:, None] + 3, delimiter=",")
    assert main(["profile", str(p), "--frequency", "3600", "--output-dir", str(tmp_path / "pr")]) == 0
    prof = json.loads((tmp_path / "pr" / "profile.json").read_text())[0]
    assert prof["r1"] == 0 and prof["r2"] == 0
    assert "one" in capsys.readouterr().out


def test_profile_bad_thresholds(tmp_path, capsys):
    assert main(["profile", "whatever.csv", "--eu", "0.5", "--el", "0.5"]) == 2


def test_profile_unknown_dataset():
    assert main(["profile", "NotADataset"]) == 2


def test_console_script_usage_error():
    r = subprocess.run([sys.executable, "-m", "mtsbench.cli", "bogus"], capture_output=True, text=True)
    assert r.returncode == 2

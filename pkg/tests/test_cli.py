import json
import subprocess
import sys

import pytest

from lord.cli import main

SMALL = """\
seed: 5
dataset: {kind: toy, per_class: 40}
models:
  - family: osnn
  - family: evm
    params: {tail_size: 10}
strategies: [baseline, kvr]
mixup: {ratios: [0.5], alphas: [0.0, 1.0], strategies: [kvr]}
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return str(p)


def test_split_train_eval(tmp_path, config, capsys):
    split = tmp_path / "split"
    assert main(["split", "--config", config, "--out-dir", str(split)]) == 0
    assert {p.name for p in split.iterdir()} == {"train.csv", "test.csv", "test_roles.txt",
                                                "manifest.json"}
    for family, fname in (("evm", "model.pkl"), ("linear", "model.txt")):
        mdir = tmp_path / family
        assert main(["train", "--config", config, "--split", str(split), "--family", family,
                     "--strategy", "kvr", "--out-dir", str(mdir)]) == 0
        assert (mdir / fname).exists()
        edir = tmp_path / f"eval-{family}"
        assert main(["eval", "--split", str(split), "--model", str(mdir),
                     "--out-dir", str(edir)]) == 0
        metrics = json.loads((edir / "metrics.json").read_text())
        assert set(metrics) == {"biased", "unbiased"}
    assert "auc=" in capsys.readouterr().out


def test_mixup_command(tmp_path, config):
    out = tmp_path / "mix"
    assert main(["mixup", "--config", config, "--ratio", "0.5", "--alpha", "0.6",
                 "--out-dir", str(out)]) == 0
    summary = json.loads((out / "mixups.json").read_text())
    assert summary["alpha"] == 0.6 and summary["target"] == 30


def test_sweep_and_report(tmp_path, config, capsys):
    run = tmp_path / "run"
    assert main(["sweep", "--config", config, "--out-dir", str(run), "--jobs", "2"]) == 0
    assert (run / "report.json").exists() and (run / "gains.csv").exists()
    assert main(["report", "--run-dir", str(run)]) == 0
    assert "evm" in capsys.readouterr().out


def test_seed_override_changes_digest_seed(tmp_path, config):
    run = tmp_path / "run"
    assert main(["sweep", "--config", config, "--seed", "99", "--out-dir", str(run)]) == 0
    assert json.loads((run / "report.json").read_text())["seed"] == 99


def test_failed_cells_give_nonzero_exit(tmp_path):
    bad = tmp_path / "bad.yaml"
    # two-sample classes break the SVM precondition in every cell
    bad.write_text("dataset: {kind: toy, per_class: 4}\nmodels: [pisvm]\n"
                   "strategies: [baseline]\n")
    assert main(["sweep", "--config", str(bad), "--out-dir", str(tmp_path / "r")]) == 1


def test_bad_input_exit_code(tmp_path, capsys):
    assert main(["train", "--split", str(tmp_path / "missing"), "--family", "evm",
                 "--out-dir", str(tmp_path / "m")]) == 2
    assert "lord train" in capsys.readouterr().err


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "lord.cli", "--help"], capture_output=True,
                         text=True, check=True).stdout
    for cmd in ("split", "train", "eval", "mixup", "sweep", "report"):
        assert cmd in out

import json
import os

import pandas as pd
import pytest
from typer.testing import CliRunner

from src.cli import app
from src.config import get_config

runner = CliRunner()


def _payload(result) -> dict:
    """Last JSON object printed on stdout."""
    for line in reversed(result.stdout.strip().splitlines()):
        line = line.strip()
        if line.startswith("{"):
            return json.loads(line)
    raise AssertionError(f"No JSON in output: {result.stdout!r}")


@pytest.fixture
def fitted_run(tmp_path):
    out = str(tmp_path / "fit")
    result = runner.invoke(app, ["fit", "--data", "drucker", "--epochs", "20", "--hidden", "3",
                                 "--seeds", "2", "--lambda", "1e-3", "--out", out])
    assert result.exit_code == 0, result.stdout
    return out, _payload(result)


def test_fit_writes_artifacts(fitted_run):
    out, payload = fitted_run
    assert payload["run_dir"] == out
    assert payload["selected_seed"] in (0, 1)
    for name in ("model.json", "run-log.csv", "metrics.json", "seeds.csv", "manifest.json",
                 "expression.expr.txt", "expression.expr.tex", "expression.expr.json"):
        assert os.path.isfile(os.path.join(out, name)), name
    log = pd.read_csv(os.path.join(out, "run-log.csv"))
    assert list(log.columns) == ["epoch", "train-loss", "val-loss", "active-params", "penalty-term"]
    assert log["epoch"].tolist() == [1, 20]
    seeds = pd.read_csv(os.path.join(out, "seeds.csv"))
    assert seeds["selected"].sum() == 1


def test_fit_manifest_and_metrics(fitted_run):
    out, payload = fitted_run
    with open(os.path.join(out, "manifest.json"), encoding="utf-8") as f:
        manifest = json.load(f)
    assert manifest["command"] == "fit"
    assert manifest["problem"] == "yield"
    assert manifest["seeds"] == [0, 1]
    assert manifest["selected_seed"] == payload["selected_seed"]
    assert manifest["config"]["lambda"] == 1e-3
    assert manifest["config"]["problem_params"]["law"] == "drucker"
    with open(os.path.join(out, "metrics.json"), encoding="utf-8") as f:
        metrics = json.load(f)
    assert metrics["test_loss"] is None
    assert 0 <= metrics["active_params"] <= metrics["total_params"]
    assert "max_radial_error" in metrics["extra"]


def test_fit_defaults_to_output_root():
    result = runner.invoke(app, ["fit", "--data", "drucker", "--epochs", "5", "--hidden", "2"])
    assert result.exit_code == 0, result.stdout
    run_dir = _payload(result)["run_dir"]
    assert os.path.dirname(run_dir) == get_config().output_dir
    assert os.path.basename(run_dir).startswith("fit-")


def test_fit_unknown_dataset_is_an_error():
    result = runner.invoke(app, ["fit", "--data", "nope", "--problem", "yield", "--epochs", "5"])
    assert result.exit_code == 1
    assert _payload(result)["error"] == "UnknownDataset"


@pytest.mark.parametrize("args", [
    ["fit", "--data", "nope", "--epochs", "5"],
    ["fit", "--data", "drucker", "--problem", "viscoelastic"],
    ["fit", "--data", "drucker", "--lambda", "abc"],
    ["fit", "--data", "drucker", "--seeds", "0"],
    ["fit", "--data", "drucker", "--lr", "-1"],
    ["fit"],
])
def test_usage_errors(args):
    assert runner.invoke(app, args).exit_code == 2


def test_export_at_other_precision(fitted_run):
    out, _ = fitted_run
    result = runner.invoke(app, ["export", "--checkpoint", out, "--decimals", "6"])
    assert result.exit_code == 0, result.stdout
    payload = _payload(result)
    assert payload["symbols"] == ["pi1", "pi2"]
    with open(os.path.join(out, "expression-6d.expr.json"), encoding="utf-8") as f:
        doc = json.load(f)
    assert doc["decimals"] == 6
    assert set(doc["symbols"]) == {"pi1", "pi2"}


def test_export_missing_checkpoint(tmp_path):
    result = runner.invoke(app, ["export", "--checkpoint", str(tmp_path / "missing.json")])
    assert result.exit_code == 1
    assert _payload(result)["error"] == "CorruptCheckpoint"


def test_curves_from_run_directory(fitted_run, tmp_path):
    out, _ = fitted_run
    target = str(tmp_path / "curve.csv")
    result = runner.invoke(app, ["curves", "--checkpoint", os.path.join(out, "model.json"), "--points", "7",
                                 "--out", target])
    if result.exit_code == 1:
        # An undertrained surface may not enclose the origin yet.
        assert _payload(result)["error"] == "SamplingError"
        return
    assert result.exit_code == 0, result.stdout
    frame = pd.read_csv(target)
    assert len(frame) == 7
    assert "radius_pred" in frame.columns


def test_curves_empty_range(fitted_run):
    out, _ = fitted_run
    result = runner.invoke(app, ["curves", "--checkpoint", out, "--start", "2.0", "--stop", "1.0"])
    assert result.exit_code == 1
    assert _payload(result)["error"] == "InvalidRange"


def test_hardening_curves_round_trip(tmp_path):
    out = str(tmp_path / "steel")
    result = runner.invoke(app, ["fit", "--data", "U71Mn", "--epochs", "3", "--hidden", "3", "--out", out])
    assert result.exit_code == 0, result.stdout
    result = runner.invoke(app, ["curves", "--checkpoint", out, "--start", "0", "--stop", "1.5", "--points", "4"])
    assert result.exit_code == 0, result.stdout
    frame = pd.read_csv(os.path.join(out, "curves.csv"))
    assert frame["strain_percent"].tolist() == [0.0, 0.5, 1.0, 1.5]


def test_sweep(tmp_path):
    out = str(tmp_path / "sweep")
    result = runner.invoke(app, ["sweep", "--data", "drucker", "--lambdas", "1e-3,1e-4", "--archs", "1x3",
                                 "--seeds", "1", "--epochs", "5", "--out", out])
    assert result.exit_code == 0, result.stdout
    assert _payload(result)["rows"] == 2
    runs = pd.read_csv(os.path.join(out, "sweep.csv"))
    assert runs["lambda"].tolist() == [1e-4, 1e-3]
    summary = pd.read_csv(os.path.join(out, "sweep-summary.csv"))
    assert summary["runs"].tolist() == [1, 1]


def test_sweep_rejects_bad_architecture(tmp_path):
    result = runner.invoke(app, ["sweep", "--data", "drucker", "--archs", "1xq", "--epochs", "2",
                                 "--out", str(tmp_path / "s")])
    assert result.exit_code == 1
    assert _payload(result)["error"] == "ValueError"


def test_fixed_seeds_give_identical_metrics(tmp_path):
    paths = []
    for k in range(2):
        out = str(tmp_path / f"run{k}")
        result = runner.invoke(app, ["fit", "--data", "drucker", "--epochs", "10", "--hidden", "3",
                                     "--seeds", "3,4", "--out", out])
        assert result.exit_code == 0, result.stdout
        paths.append(os.path.join(out, "metrics.json"))
    with open(paths[0], "rb") as a, open(paths[1], "rb") as b:
        assert a.read() == b.read()

"""Command-line entry point: fit, sweep, export and curves.

Exit codes: 0 success, 1 any library error (one JSON line on stdout), 2 usage.
"""
from __future__ import annotations

import json
import logging
import os
import sys
from contextlib import contextmanager
from typing import Optional

import pandas as pd
import typer
from pydantic import ValidationError
from tqdm import tqdm

from src import __version__
from src.config import get_config, list_presets, load_preset
from src.errors import ConsparseError
from src.export import (load_checkpoint, save_checkpoint, write_expressions, write_frame, write_metrics,
                        write_run_log)
from src.gates import GateMode
from src.models import Checkpoint, Metrics, RunManifest, TrainConfig
from src.problems import PROBLEMS, Problem, make_problem, restore_problem
from src.runs import _now_iso, create_run_dir, dataset_ref, write_manifest
from src.train import ExperimentResult, count_active, eval_mode, run_experiment, run_sweep, summarize_sweep

logger = logging.getLogger(__name__)

app = typer.Typer(add_completion=False, no_args_is_help=True, help="Sparse physics-augmented constitutive models.")

CHECKPOINT_FILE = "model.json"


def _setup_logging(verbose: bool):
    level = logging.DEBUG if verbose else getattr(logging, get_config().log_level, logging.INFO)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level)


def _emit(payload: dict):
    typer.echo(json.dumps(payload, sort_keys=True, default=str))


@contextmanager
def _guard():
    """Library errors become one JSON line and exit code 1."""
    try:
        yield
    except ConsparseError as e:
        logger.error("%s: %s", type(e).__name__, e.message)
        _emit(e.to_dict())
        raise typer.Exit(1)
    except ValueError as e:
        logger.error("%s", e)
        _emit({"error": type(e).__name__, "message": str(e)})
        raise typer.Exit(1)


@contextmanager
def _progress(total_label: str):
    bar = tqdm(total=1000, desc=total_label, disable=None, file=sys.stderr, leave=False)

    def callback(fraction: float, message: str):
        bar.n = int(1000 * min(max(fraction, 0.0), 1.0))
        bar.set_postfix_str(message, refresh=False)
        bar.refresh()

    try:
        yield callback
    finally:
        bar.close()


def _split_list(value: Optional[str]) -> Optional[list[str]]:
    if value is None:
        return None
    return [v.strip() for v in value.split(",") if v.strip()]


def _parse_float(value: str, flag: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise typer.BadParameter(f"'{value}' is not a number", param_hint=flag) from None


def _parse_seeds(value: Optional[str]) -> Optional[list[int]]:
    """'10' means seeds 0..9; '3,7' lists seeds explicitly."""
    if value is None:
        return None
    try:
        if "," in value:
            return [int(v) for v in _split_list(value)]
        count = int(value)
    except ValueError:
        raise typer.BadParameter(f"'{value}' is neither a seed count nor a seed list", param_hint="--seeds") from None
    if count < 1:
        raise typer.BadParameter("At least one seed is required", param_hint="--seeds")
    return list(range(count))


def _resolve(problem: Optional[str], data: str, overrides: dict) -> tuple[str, dict, dict]:
    """Problem name, problem params and train defaults, from the preset for `data` plus flag overrides."""
    preset = load_preset(data) if data in list_presets() else {}
    name = problem or preset.get("problem")
    if name is None:
        raise typer.BadParameter(f"No preset for '{data}'; pass --problem", param_hint="--problem")
    if name not in PROBLEMS:
        raise typer.BadParameter(f"Unknown problem '{name}', expected one of {sorted(PROBLEMS)}",
                                 param_hint="--problem")
    if problem and preset.get("problem") not in (None, problem):
        preset = {}
    params = dict(preset.get("params") or {})
    params.update({k: v for k, v in overrides.items() if v is not None})
    return name, params, dict(preset.get("train") or {})


def _train_config(defaults: dict, **flags) -> TrainConfig:
    values = {"epochs": get_config().epochs, **defaults}
    values.update({k: v for k, v in flags.items() if v is not None})
    try:
        return TrainConfig.model_validate(values)
    except ValidationError as e:
        first = e.errors()[0]
        raise typer.BadParameter(first["msg"], param_hint=".".join(str(p) for p in first["loc"])) from None


def _metrics(problem: Problem, model, split, mode: GateMode) -> Metrics:
    values = problem.metrics(model, split, mode)
    return Metrics(train_loss=values["train_loss"], val_loss=values["val_loss"], test_loss=values["test_loss"],
                   active_params=count_active(model, mode), total_params=len(model.parameters()),
                   r2=values.get("r2", {}), extra=values.get("extra", {}))


@app.command()
def fit(
    data: str = typer.Option(..., "--data", help="Embedded dataset, reference law or CSV path"),
    problem: Optional[str] = typer.Option(None, "--problem", help="hyper-compressible, hyper-incompressible, yield, hardening"),
    train_modes: Optional[str] = typer.Option(None, "--train-modes", help="Comma-separated modes, e.g. UT,ET"),
    test_modes: Optional[str] = typer.Option(None, "--test-modes"),
    lam: Optional[str] = typer.Option(None, "--lambda", help="L0 weight, e.g. 1e-3"),
    hidden: Optional[int] = typer.Option(None, "--hidden", help="Neurons per hidden layer"),
    layers: int = typer.Option(1, "--layers", min=1),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    seeds: Optional[str] = typer.Option(None, "--seeds", help="Seed count or comma-separated seeds"),
    lr: Optional[float] = typer.Option(None, "--lr"),
    mc_samples: Optional[int] = typer.Option(None, "--mc-samples"),
    no_gates: bool = typer.Option(False, "--no-gates", help="Train without L0 gates and penalty"),
    net: Optional[str] = typer.Option(None, "--net", help="icnn, mlp or monotone"),
    out: Optional[str] = typer.Option(None, "--out", help="Output directory"),
    E: Optional[float] = typer.Option(None, "--E", help="Young's modulus in MPa"),
    nu: Optional[float] = typer.Option(None, "--nu"),
    sigma_y: Optional[float] = typer.Option(None, "--sigma-y", help="Initial yield stress in MPa"),
    decimals: int = typer.Option(3, "--decimals", min=0),
    threads: Optional[int] = typer.Option(None, "--threads", min=1),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
):
    """Train one model per seed and keep the median run."""
    _setup_logging(verbose)
    name, params, defaults = _resolve(problem, data, {
        "train_modes": _split_list(train_modes), "test_modes": _split_list(test_modes),
        "E": E, "nu": nu, "sigma_y": sigma_y})
    config = _train_config(defaults, lam=None if lam is None else _parse_float(lam, "--lambda"),
                           hidden=None if hidden is None else [hidden] * layers, epochs=epochs,
                           seeds=_parse_seeds(seeds), lr=lr, mc_samples=mc_samples, net=net,
                           gating=False if no_gates else None)
    with _guard():
        prob = make_problem(name, data, **params)
        with _progress("fit") as callback:
            result = run_experiment(prob, config, callback, threads)
        record, model = result.selected_record, result.selected_model
        mode = eval_mode(config)

        rid, run_dir = create_run_dir("fit", out)
        outputs = {
            "checkpoint": os.path.join(run_dir, CHECKPOINT_FILE),
            "run_log": write_run_log(record.history, os.path.join(run_dir, "run-log.csv")),
            "metrics": write_metrics(_metrics(prob, model, result.split, mode), os.path.join(run_dir, "metrics.json")),
            "seeds": write_frame(_seed_table(result), os.path.join(run_dir, "seeds.csv")),
        }
        outputs.update(write_expressions(prob.expression(model, mode), os.path.join(run_dir, "expression"), decimals))
        checkpoint = Checkpoint(version=__version__, problem=prob.name, problem_params=prob.to_params(),
                                dataset=dataset_ref(prob.dataset), config=config.model_dump(mode="json", by_alias=True),
                                network=model.to_dict(), seed=record.seed)
        save_checkpoint(checkpoint, outputs["checkpoint"])
        write_manifest(run_dir, RunManifest(
            id=rid, command="fit", created_at=_now_iso(), version=__version__, problem=prob.name,
            config={**checkpoint.config, "problem_params": checkpoint.problem_params},
            dataset=checkpoint.dataset, seeds=config.seeds, selected_seed=record.seed, outputs=outputs))
    logger.info("Fit artifacts in %s", run_dir)
    _emit({"run_dir": run_dir, "selected_seed": record.seed, "final_train_loss": record.final_train_loss,
           "active_params": record.final_active_params})


def _seed_table(result: ExperimentResult) -> pd.DataFrame:
    return pd.DataFrame([{"seed": r.seed, "final_train_loss": r.final_train_loss, "final_val_loss": r.final_val_loss,
                          "active_params": r.final_active_params, "selected": k == result.selected}
                         for k, r in enumerate(result.records)])


@app.command()
def sweep(
    data: str = typer.Option(..., "--data"),
    problem: Optional[str] = typer.Option(None, "--problem"),
    lambdas: str = typer.Option("1e-5,1e-4,1e-3", "--lambdas", help="Comma-separated L0 weights"),
    archs: str = typer.Option("1x30", "--archs", help="Comma-separated architectures, e.g. 1x30,2x15"),
    seeds: str = typer.Option("1", "--seeds"),
    train_modes: Optional[str] = typer.Option(None, "--train-modes"),
    test_modes: Optional[str] = typer.Option(None, "--test-modes"),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    lr: Optional[float] = typer.Option(None, "--lr"),
    mc_samples: Optional[int] = typer.Option(None, "--mc-samples"),
    no_gates: bool = typer.Option(False, "--no-gates"),
    net: Optional[str] = typer.Option(None, "--net"),
    E: Optional[float] = typer.Option(None, "--E"),
    nu: Optional[float] = typer.Option(None, "--nu"),
    sigma_y: Optional[float] = typer.Option(None, "--sigma-y"),
    out: Optional[str] = typer.Option(None, "--out"),
    threads: Optional[int] = typer.Option(None, "--threads", min=1),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
):
    """One run per (lambda, architecture, seed); writes per-run and aggregated CSVs."""
    _setup_logging(verbose)
    name, params, defaults = _resolve(problem, data, {
        "train_modes": _split_list(train_modes), "test_modes": _split_list(test_modes),
        "E": E, "nu": nu, "sigma_y": sigma_y})
    lam_values = [_parse_float(v, "--lambdas") for v in _split_list(lambdas)]
    arch_values = _split_list(archs)
    seed_values = _parse_seeds(seeds)
    if not lam_values or not arch_values:
        raise typer.BadParameter("Sweeps need at least one lambda and one architecture")
    base = _train_config(defaults, epochs=epochs, lr=lr, mc_samples=mc_samples, net=net,
                         gating=False if no_gates else None)
    with _guard():
        prob = make_problem(name, data, **params)
        with _progress("sweep") as callback:
            frame = run_sweep(prob, base, lam_values, arch_values, seed_values, threads, callback)
        rid, run_dir = create_run_dir("sweep", out)
        outputs = {"runs": write_frame(frame, os.path.join(run_dir, "sweep.csv")),
                   "summary": write_frame(summarize_sweep(frame), os.path.join(run_dir, "sweep-summary.csv"))}
        write_manifest(run_dir, RunManifest(
            id=rid, command="sweep", created_at=_now_iso(), version=__version__, problem=prob.name,
            config={**base.model_dump(mode="json", by_alias=True), "lambdas": lam_values, "archs": arch_values},
            dataset=dataset_ref(prob.dataset), seeds=seed_values, outputs=outputs))
    _emit({"run_dir": run_dir, "rows": len(frame)})


def _checkpoint_path(path: str) -> str:
    return os.path.join(path, CHECKPOINT_FILE) if os.path.isdir(path) else path


def _load(path: str) -> tuple[Checkpoint, Problem, object, GateMode]:
    checkpoint = load_checkpoint(_checkpoint_path(path))
    prob, model = restore_problem(checkpoint)
    mode = GateMode.TEST if checkpoint.config.get("gating", True) else GateMode.UNGATED
    return checkpoint, prob, model, mode


@app.command()
def export(
    checkpoint: str = typer.Option(..., "--checkpoint", help="Checkpoint file or fit run directory"),
    decimals: int = typer.Option(3, "--decimals", min=0),
    out: Optional[str] = typer.Option(None, "--out", help="Output directory, defaults to the checkpoint's"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
):
    """Re-render the checkpoint's expression at a chosen precision."""
    _setup_logging(verbose)
    with _guard():
        _, prob, model, mode = _load(checkpoint)
        target = out or os.path.dirname(os.path.abspath(_checkpoint_path(checkpoint)))
        expr = prob.expression(model, mode)
        paths = write_expressions(expr, os.path.join(target, f"expression-{decimals}d"), decimals)
    _emit({"outputs": paths, "symbols": sorted(expr.symbols())})


@app.command()
def curves(
    checkpoint: str = typer.Option(..., "--checkpoint", help="Checkpoint file or fit run directory"),
    start: Optional[float] = typer.Option(None, "--start"),
    stop: Optional[float] = typer.Option(None, "--stop"),
    points: int = typer.Option(101, "--points"),
    out: Optional[str] = typer.Option(None, "--out", help="CSV path, defaults to curves.csv next to the checkpoint"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
):
    """Plot-ready CSV of the fitted response over a range, training domain flagged per row."""
    _setup_logging(verbose)
    with _guard():
        _, prob, model, mode = _load(checkpoint)
        frame = prob.curves(model, start, stop, points, mode)
        path = out or os.path.join(os.path.dirname(os.path.abspath(_checkpoint_path(checkpoint))), "curves.csv")
        write_frame(frame, path)
    _emit({"output": path, "rows": len(frame), "columns": list(frame.columns)})


def main():
    app()


if __name__ == "__main__":
    main()

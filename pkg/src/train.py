"""Training harness: regularized loss, Adam with constraint projection, multi-seed runs and sweeps."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from src import autodiff as ad
from src.autodiff import Tape, Var
from src.config import get_config
from src.errors import EmptyDataset, NonFiniteGradient, TooFewPoints
from src.gates import GatedParam, GateMode, active_count, expected_l0_value
from src.models import LogEntry, RunRecord, TrainConfig
from src.nets import BoundNetwork, NetworkModel
from src.problems.base import DataSplit, Problem

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[float, str], None]


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int) -> AdamState:
        return cls(np.zeros(size), np.zeros(size))


def parameter_vector(params: Sequence[GatedParam]) -> np.ndarray:
    """Trainable scalars in tape-leaf order: theta_bar, log_alpha per parameter."""
    out = np.empty(2 * len(params))
    for k, gp in enumerate(params):
        out[2 * k] = gp.theta_bar
        out[2 * k + 1] = gp.log_alpha
    return out


def adam_step(params: Sequence[GatedParam], grads, state: AdamState, lr: float = 1e-3):
    """One bias-corrected Adam update of every theta_bar and log_alpha, then projection."""
    grads = np.asarray(grads, dtype=float)
    if grads.shape != (2 * len(params),):
        raise ValueError(f"Expected {2 * len(params)} gradients, got {grads.shape}")
    bad = np.flatnonzero(~np.isfinite(grads))
    if bad.size:
        raise NonFiniteGradient(int(bad[0]), float(grads[bad[0]]))

    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads ** 2
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    values = parameter_vector(params) - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    for k, gp in enumerate(params):
        gp.theta_bar = float(values[2 * k])
        gp.log_alpha = float(values[2 * k + 1])
        gp.project()


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def total_loss(problem: Problem, model: NetworkModel, indices: np.ndarray, lam: float,
               mode: GateMode = GateMode.TRAIN, rng: np.random.Generator | None = None,
               mc_samples: int = 1, tape: Tape | None = None) -> tuple[Var, list[BoundNetwork]]:
    """Monte-Carlo mean of the data loss over gate samples plus lam * sum of expected-L0 penalties."""
    if len(indices) == 0:
        raise EmptyDataset("The training batch is empty")
    tape = tape if tape is not None else Tape()
    samples = mc_samples if mode is GateMode.TRAIN else 1
    binds: list[BoundNetwork] = []
    data: Var | float = 0.0
    for _ in range(samples):
        bound = model.bind(tape, mode, rng)
        binds.append(bound)
        data = problem.data_loss(bound, indices) + data
    if samples > 1:
        data = data * (1.0 / samples)
    penalty = binds[0].penalty
    if lam != 0.0 and isinstance(penalty, Var):
        return data + penalty * lam, binds
    return data, binds


def loss_gradient(loss: Var, binds: Sequence[BoundNetwork]) -> np.ndarray:
    """Gradient in `parameter_vector` order, summed over every gate sample."""
    leaves = [leaf for b in binds for leaf in b.leaves]
    grads = np.asarray(ad.gradient(loss, leaves), dtype=float)
    return grads.reshape(len(binds), -1).sum(axis=0)


def penalty_value(model: NetworkModel, mode: GateMode) -> float:
    if mode is GateMode.UNGATED:
        return 0.0
    return float(sum(expected_l0_value(gp.log_alpha, model.gates) for gp in model.parameters()))


def count_active(model: NetworkModel, mode: GateMode) -> int:
    if mode is GateMode.UNGATED:
        return sum(1 for gp in model.parameters() if gp.theta_bar != 0.0)
    return active_count(model.parameters(), model.gates)


def objective(problem: Problem, model: NetworkModel, indices: np.ndarray, lam: float, mode: GateMode) -> float:
    """Deterministic training objective: data loss with test gates plus lam * penalty."""
    return problem.evaluate(model, indices, mode) + lam * penalty_value(model, mode)


# ---------------------------------------------------------------------------
# Data split
# ---------------------------------------------------------------------------

def split_dataset(data, ratio: float = 0.8, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic shuffled split of row indices; `data` is a row count or any sized object."""
    n = data if isinstance(data, (int, np.integer)) else len(data)
    if n < 5:
        raise TooFewPoints(f"At least 5 points are needed for a split, got {n}", n=int(n))
    n_train = min(max(int(round(ratio * n)), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def make_split(problem: Problem, ratio: float, seed: int) -> DataSplit:
    train, val = split_dataset(problem.n_points, ratio, seed)
    return DataSplit(problem.order_rows(train), problem.order_rows(val))


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

def eval_mode(config: TrainConfig) -> GateMode:
    return GateMode.TEST if config.gating else GateMode.UNGATED


def fit_model(problem: Problem, model: NetworkModel, split: DataSplit, config: TrainConfig,
              rng: np.random.Generator, mode: GateMode = GateMode.TRAIN,
              progress_callback: ProgressCallback | None = None) -> list[LogEntry]:
    """Full-batch Adam on the training rows; returns the logged history."""
    params = model.parameters()
    state = AdamState.zeros(2 * len(params))
    report_mode = GateMode.UNGATED if mode is GateMode.UNGATED else GateMode.TEST
    history: list[LogEntry] = []
    for epoch in range(1, config.epochs + 1):
        loss, binds = total_loss(problem, model, split.train, config.lam, mode, rng, config.mc_samples)
        grads = loss_gradient(loss, binds)
        adam_step(params, grads, state, config.lr)
        if epoch % config.log_every == 0 or epoch == config.epochs or epoch == 1:
            val = problem.evaluate(model, split.val, report_mode) if len(split.val) else float("nan")
            entry = LogEntry(epoch=epoch, train_loss=loss.value, val_loss=val,
                             active_params=count_active(model, report_mode),
                             penalty_term=config.lam * penalty_value(model, report_mode))
            history.append(entry)
            logger.debug("epoch %d loss %.6e val %.6e active %d", epoch, entry.train_loss, val,
                         entry.active_params)
            if progress_callback:
                progress_callback(epoch / config.epochs, f"epoch {epoch}/{config.epochs}")
    return history


def train_single(problem: Problem, config: TrainConfig, seed: int,
                 progress_callback: ProgressCallback | None = None) -> tuple[RunRecord, NetworkModel]:
    start = time.time()
    rng = np.random.default_rng(seed)
    split = make_split(problem, config.split, seed)
    model = problem.build_model(config.hidden, rng, config.net)
    mode = GateMode.TRAIN if config.gating else GateMode.UNGATED
    history = fit_model(problem, model, split, config, rng, mode, progress_callback)
    final_mode = eval_mode(config)
    record = RunRecord(
        seed=seed,
        final_train_loss=objective(problem, model, split.train, config.lam, final_mode),
        final_val_loss=problem.evaluate(model, split.val, final_mode) if len(split.val) else float("nan"),
        final_active_params=count_active(model, final_mode),
        history=history,
        elapsed_seconds=round(time.time() - start, 3),
    )
    logger.info("seed %d: final loss %.6e, %d active parameters", seed, record.final_train_loss,
                record.final_active_params)
    return record, model


def median_index(records: Sequence[RunRecord]) -> int:
    """Run with the median final training loss; the lower middle one for an even count."""
    if not records:
        raise ValueError("No runs to select from")
    order = sorted(range(len(records)), key=lambda k: (records[k].final_train_loss, k))
    return order[(len(records) - 1) // 2]


@dataclass
class ExperimentResult:
    records: list[RunRecord]
    models: list[NetworkModel]
    selected: int
    split: DataSplit = field(default=None)

    @property
    def selected_record(self) -> RunRecord:
        return self.records[self.selected]

    @property
    def selected_model(self) -> NetworkModel:
        return self.models[self.selected]


def _train_worker(problem: Problem, config: TrainConfig, seed: int) -> tuple[RunRecord, NetworkModel]:
    return train_single(problem, config, seed)


def _worker_count(threads: int | None, jobs: int) -> int:
    threads = threads if threads is not None else get_config().threads
    return max(1, min(threads, jobs))


def run_experiment(problem: Problem, config: TrainConfig, progress_callback: ProgressCallback | None = None,
                   threads: int | None = None) -> ExperimentResult:
    """Train one model per seed and select the median-loss run."""
    valid, errors = problem.validate_input()
    if not valid:
        raise EmptyDataset("; ".join(errors))
    seeds = list(config.seeds)
    workers = _worker_count(threads, len(seeds))
    results: list[tuple[RunRecord, NetworkModel]] = []
    if workers == 1:
        for i, seed in enumerate(seeds):
            cb = None
            if progress_callback:
                def cb(p, msg, run_idx=i, total=len(seeds), s=seed):
                    progress_callback((run_idx + p) / total, f"[seed {s}] {msg}")
            results.append(train_single(problem, config, seed, cb))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_train_worker, problem, config, seed) for seed in seeds]
            for i, fut in enumerate(futures):
                results.append(fut.result())
                if progress_callback:
                    progress_callback((i + 1) / len(seeds), f"[seed {seeds[i]}] done")
    records = [r for r, _ in results]
    models = [m for _, m in results]
    selected = median_index(records)
    logger.info("Selected seed %d (median of %d runs, loss %.6e)", records[selected].seed, len(records),
                records[selected].final_train_loss)
    return ExperimentResult(records, models, selected, make_split(problem, config.split, records[selected].seed))


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def parse_architecture(label: str) -> list[int]:
    """'1x30' -> [30], '2x15' -> [15, 15], '30-20' -> [30, 20], '30' -> [30]."""
    label = label.strip().lower()
    try:
        if "x" in label:
            layers, width = label.split("x", 1)
            widths = [int(width)] * int(layers)
        else:
            widths = [int(w) for w in label.split("-")]
    except ValueError:
        raise ValueError(f"Invalid architecture '{label}'") from None
    if not widths or any(w < 1 for w in widths):
        raise ValueError(f"Invalid architecture '{label}'")
    return widths


def _sweep_worker(problem: Problem, config: TrainConfig, seed: int) -> dict:
    record, model = train_single(problem, config, seed)
    test = problem.test_loss(model, eval_mode(config))
    return {
        "lambda": config.lam,
        "architecture": config.architecture,
        "seed": seed,
        "final_train_loss": record.final_train_loss,
        "final_val_loss": record.final_val_loss,
        "test_loss": float("nan") if test is None else test,
        "active_params": record.final_active_params,
        "total_params": len(model.parameters()),
    }


def run_sweep(problem: Problem, base: TrainConfig, lambdas: Sequence[float], architectures: Sequence[str],
              seeds: Sequence[int], threads: int | None = None,
              progress_callback: ProgressCallback | None = None) -> pd.DataFrame:
    """One training run per (lambda, architecture, seed), rows ordered by that tuple."""
    if not lambdas or not architectures or not seeds:
        raise ValueError("Sweeps need at least one lambda, architecture and seed")
    jobs = []
    for lam in sorted(lambdas):
        for arch in sorted(architectures):
            for seed in sorted(seeds):
                cfg = base.model_copy(update={"lam": float(lam), "hidden": parse_architecture(arch), "seeds": [seed]})
                jobs.append((lam, arch, seed, cfg))
    workers = _worker_count(threads, len(jobs))
    rows: list[dict] = []
    if workers == 1:
        for i, (_, _, seed, cfg) in enumerate(jobs):
            rows.append(_sweep_worker(problem, cfg, seed))
            if progress_callback:
                progress_callback((i + 1) / len(jobs), f"run {i + 1}/{len(jobs)}")
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_sweep_worker, problem, cfg, seed) for _, _, seed, cfg in jobs]
            for i, fut in enumerate(futures):
                rows.append(fut.result())
                if progress_callback:
                    progress_callback((i + 1) / len(jobs), f"run {i + 1}/{len(jobs)}")
    return pd.DataFrame(rows)


def summarize_sweep(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean and median of losses and active parameters per (lambda, architecture)."""
    columns = ["final_train_loss", "final_val_loss", "test_loss", "active_params"]
    grouped = frame.groupby(["lambda", "architecture"], sort=True)[columns]
    summary = grouped.agg(["mean", "median"])
    summary.columns = [f"{col}_{stat}" for col, stat in summary.columns]
    summary["runs"] = grouped.size()
    return summary.reset_index()

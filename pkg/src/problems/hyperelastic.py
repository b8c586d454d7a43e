"""Compressible (F, S) fits and incompressible mode-curve fits."""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
import pandas as pd

from src import symbolic as sym
from src.autodiff import Var
from src.data import S_INDEX, Dataset, deformations_from_frame
from src.errors import EmptyDataset
from src.gates import GateMode
from src.hyper import (BoundCompressible, BoundIncompressible, CompressiblePotential, DeformationState,
                       IncompressiblePotential, Mode, STRETCH_MODES, get_law, mode_invariants)
from src.metrics import r2_score, relative_l2
from src.models import NetKind
from src.nets import BoundNetwork, NetworkModel
from src.problems.base import DataSplit, Problem, value_range

logger = logging.getLogger(__name__)


def _mean_square(tape, total, count: int) -> Var:
    if count == 0:
        raise EmptyDataset("No rows selected for the data loss")
    if not isinstance(total, Var):
        total = tape.constant(total)
    return total * (1.0 / count)


def uniaxial_strain(F11) -> np.ndarray:
    F11 = np.atleast_1d(np.asarray(F11, dtype=float))
    Fs = np.repeat(np.eye(3)[None], len(F11), axis=0)
    Fs[:, 0, 0] = F11
    return Fs


class CompressibleProblem(Problem):
    name = "hyper-compressible"
    allowed_nets = (NetKind.ICNN, NetKind.MLP)
    input_names = ("I1", "I2", "J")

    def __init__(self, dataset: Dataset, test: Dataset | None = None, law: str | None = None,
                 delta_train: float = 0.2, **params):
        super().__init__(dataset, law=law, delta_train=delta_train, **params)
        self.law = get_law(law) if law else None
        self.delta_train = float(delta_train)
        self.test = test.frame if test is not None else None
        self._Fs, S = deformations_from_frame(self.pool)
        self._targets = np.stack([S[:, i, j] for i, j in S_INDEX], axis=1)
        self._states = [DeformationState.from_F(F) for F in self._Fs]
        logger.debug("Compressible problem: %d pool rows, %s test rows", len(self.pool),
                     "no" if self.test is None else len(self.test))

    def validate_input(self) -> tuple[bool, list]:
        errors = []
        if len(self.pool) == 0:
            errors.append("No deformation/stress rows")
        if not np.all(np.isfinite(self._targets)):
            errors.append("Stress targets contain non-finite values")
        return len(errors) == 0, errors

    def data_loss(self, bound: BoundNetwork, indices: np.ndarray) -> Var:
        pot = BoundCompressible(bound)
        total = 0.0
        for k in indices:
            S = pot.stress(self._states[k])
            for c, (i, j) in enumerate(S_INDEX):
                r = S[i][j] - float(self._targets[k, c])
                total = r * r + total
        return _mean_square(bound.tape, total, 6 * len(indices))

    @staticmethod
    def _components(S: np.ndarray) -> np.ndarray:
        return np.stack([S[:, i, j] for i, j in S_INDEX], axis=1)

    def _predict(self, model: NetworkModel, Fs: np.ndarray, mode: GateMode) -> np.ndarray:
        return self._components(CompressiblePotential(model).stresses(Fs, mode))

    def evaluate(self, model: NetworkModel, indices: np.ndarray | None = None,
                 mode: GateMode = GateMode.TEST) -> float:
        idx = np.arange(self.n_points) if indices is None else np.asarray(indices)
        if idx.size == 0:
            raise EmptyDataset("No rows selected for evaluation")
        pred = self._predict(model, self._Fs[idx], mode)
        return float(np.mean((pred - self._targets[idx]) ** 2))

    def _test_arrays(self) -> tuple[np.ndarray, np.ndarray] | None:
        if self.test is None or len(self.test) == 0:
            return None
        Fs, S = deformations_from_frame(self.test)
        return Fs, self._components(S)

    def test_loss(self, model: NetworkModel, mode: GateMode = GateMode.TEST) -> float | None:
        arrays = self._test_arrays()
        if arrays is None:
            return None
        pred = self._predict(model, arrays[0], mode)
        return float(np.mean((pred - arrays[1]) ** 2))

    def metrics(self, model: NetworkModel, split: DataSplit, mode: GateMode = GateMode.TEST) -> dict:
        out = {"train_loss": self.evaluate(model, split.train, mode),
               "val_loss": self.evaluate(model, split.val, mode) if len(split.val) else float("nan"),
               "test_loss": self.test_loss(model, mode), "r2": {}, "extra": {}}
        out["r2"]["train"] = r2_score(self._predict(model, self._Fs[split.train], mode), self._targets[split.train])
        arrays = self._test_arrays()
        if arrays is not None:
            out["r2"]["test"] = r2_score(self._predict(model, arrays[0], mode), arrays[1])
        if self.law is not None:
            curve = self.curves(model, 0.8, 1.2, 41, mode)
            out["extra"]["ut_relative_l2"] = relative_l2(curve["S11_pred"], curve["S11_ref"])
        return out

    def expression_inputs(self) -> list[sym.ExprNode]:
        return [sym.symbol(n) for n in self.input_names]

    def wrap_expression(self, model: NetworkModel, nn: sym.ExprNode,
                        mode: GateMode = GateMode.TEST) -> sym.ExprNode:
        ref, n = CompressiblePotential(model).normalization(mode)
        J = sym.symbol("J")
        return sym.add(nn, sym.const(-ref), sym.mul(sym.const(-n), sym.add(J, sym.const(-1.0))))

    def sample_inputs(self, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        delta = self.delta_train if self.delta_train > 0.0 else float(np.max(np.abs(self._Fs - np.eye(3))))
        states = []
        while len(states) < n:
            F = np.eye(3) + rng.uniform(-delta, delta, size=(3, 3))
            if np.linalg.det(F) > 0.0:
                states.append(DeformationState.from_F(F))
        return {"I1": np.array([s.I1 for s in states]), "I2": np.array([s.I2 for s in states]),
                "J": np.array([s.J for s in states])}

    def model_output(self, model: NetworkModel, env: dict[str, np.ndarray],
                     mode: GateMode = GateMode.TEST) -> np.ndarray:
        X = np.column_stack([env["I1"], env["I2"], env["J"]])
        return CompressiblePotential(model).energy(X, mode)

    def curves(self, model: NetworkModel, start: float | None = None, stop: float | None = None,
               points: int = 101, mode: GateMode = GateMode.TEST) -> pd.DataFrame:
        """S11 under uniaxial strain F = diag(F11, 1, 1), with the reference law when known."""
        F11 = value_range(start, stop, points, (0.6, 1.4))
        Fs = uniaxial_strain(F11)
        pred = CompressiblePotential(model).stresses(Fs, mode)[:, 0, 0]
        ref = (np.array([self.law.stress(F, normalized=True)[0, 0] for F in Fs])
               if self.law is not None else np.full(len(F11), np.nan))
        return pd.DataFrame({"F11": F11, "S11_pred": pred, "S11_ref": ref,
                             "in_training_domain": np.abs(F11 - 1.0) <= self.delta_train + 1e-12})


class IncompressibleProblem(Problem):
    name = "hyper-incompressible"
    allowed_nets = (NetKind.ICNN, NetKind.MLP)
    input_names = ("I1", "I2")

    def __init__(self, dataset: Dataset, train_modes: Sequence[str] | None = None,
                 test_modes: Sequence[str] | None = None, target_scale: float = 1.0, n_quad: int = 32,
                 **params):
        frame = dataset.frame
        present = list(dict.fromkeys(frame["mode"]))
        train_modes = [Mode(m).value for m in (train_modes or present)]
        test_modes = [Mode(m).value for m in (test_modes or []) if Mode(m).value not in train_modes]
        super().__init__(dataset, train_modes=train_modes, test_modes=test_modes,
                         target_scale=target_scale, n_quad=n_quad, **params)
        self.train_modes = train_modes
        self.test_modes = test_modes
        self.target_scale = float(target_scale)
        self.n_quad = int(n_quad)
        self.pool = frame[frame["mode"].isin(train_modes)].reset_index(drop=True)
        test = frame[frame["mode"].isin(test_modes)].reset_index(drop=True)
        self.test = test if len(test) else None

    def validate_input(self) -> tuple[bool, list]:
        errors = []
        if len(self.pool) == 0:
            errors.append(f"No rows for training modes {self.train_modes}")
        for m, v in zip(self.pool["mode"], self.pool["lambda_or_gamma"]):
            if Mode(m) in STRETCH_MODES and not v > 0.0:
                errors.append(f"{m} stretch must be positive, got {v}")
                break
        return len(errors) == 0, errors

    def data_loss(self, bound: BoundNetwork, indices: np.ndarray) -> Var:
        pot = BoundIncompressible(bound, self.n_quad)
        modes = self.pool["mode"].to_numpy()
        values = self.pool["lambda_or_gamma"].to_numpy(dtype=float)
        targets = self.pool["P"].to_numpy(dtype=float) * self.target_scale
        total = 0.0
        for k in indices:
            pred = pot.mode_stress(Mode(modes[k]), float(values[k]))
            if isinstance(pred, tuple):
                pred = pred[0]
            r = pred - float(targets[k])
            total = r * r + total
        return _mean_square(bound.tape, total, len(indices))

    def predict(self, model: NetworkModel, frame: pd.DataFrame, mode: GateMode = GateMode.TEST) -> np.ndarray:
        """Model stresses for every row of `frame`, in the scaled target units."""
        pot = IncompressiblePotential(model)
        values = frame["lambda_or_gamma"].to_numpy(dtype=float)
        out = np.empty(len(frame))
        for m, idx in frame.groupby("mode", sort=False).indices.items():
            mode_ = Mode(m)
            if mode_ is Mode.ST:
                out[idx] = [pot.torsion(v, self.n_quad, mode) for v in values[idx]]
                continue
            res = pot.mode_stress(mode_, values[idx], mode)
            out[idx] = res[0] if isinstance(res, tuple) else res
        return out

    def _loss(self, model, frame, mode) -> float:
        pred = self.predict(model, frame, mode)
        return float(np.mean((pred - frame["P"].to_numpy(dtype=float) * self.target_scale) ** 2))

    def evaluate(self, model: NetworkModel, indices: np.ndarray | None = None,
                 mode: GateMode = GateMode.TEST) -> float:
        frame = self.pool if indices is None else self.pool.iloc[np.asarray(indices)]
        if len(frame) == 0:
            raise EmptyDataset("No rows selected for evaluation")
        return self._loss(model, frame, mode)

    def test_loss(self, model: NetworkModel, mode: GateMode = GateMode.TEST) -> float | None:
        return None if self.test is None else self._loss(model, self.test, mode)

    def metrics(self, model: NetworkModel, split: DataSplit, mode: GateMode = GateMode.TEST) -> dict:
        out = {"train_loss": self.evaluate(model, split.train, mode),
               "val_loss": self.evaluate(model, split.val, mode) if len(split.val) else float("nan"),
               "test_loss": self.test_loss(model, mode), "r2": {}, "extra": {}}
        frame = self.dataset.frame
        frame = frame[frame["mode"].isin(self.train_modes + self.test_modes)]
        for m, group in frame.groupby("mode", sort=False):
            pred = self.predict(model, group, mode) / self.target_scale
            out["r2"][m] = r2_score(pred, group["P"].to_numpy(dtype=float))
        return out

    def expression_inputs(self) -> list[sym.ExprNode]:
        return [sym.symbol("I1"), sym.symbol("I2")]

    def wrap_expression(self, model: NetworkModel, nn: sym.ExprNode,
                        mode: GateMode = GateMode.TEST) -> sym.ExprNode:
        """NN - NN(3, 3) - n (J - 1) - p (J - 1), with p left as a free symbol."""
        ref, n = IncompressiblePotential(model).normalization(mode)
        j_minus_1 = sym.add(sym.symbol("J"), sym.const(-1.0))
        return sym.add(nn, sym.const(-ref), sym.mul(sym.const(-n), j_minus_1),
                       sym.mul(sym.const(-1.0), sym.symbol("p"), j_minus_1))

    def invariant_bounds(self) -> tuple[tuple[float, float], tuple[float, float]]:
        i1, i2 = [], []
        for m, v in zip(self.dataset.frame["mode"], self.dataset.frame["lambda_or_gamma"]):
            mode = Mode(m)
            if mode is Mode.ST:
                a, b = mode_invariants(Mode.SS, float(v))
            else:
                a, b = mode_invariants(mode, float(v))
            i1.append(a)
            i2.append(b)
        return (min(i1), max(i1)), (min(i2), max(i2))

    def sample_inputs(self, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        (a1, b1), (a2, b2) = self.invariant_bounds()
        return {"I1": rng.uniform(a1, max(b1, a1 + 1e-6), n), "I2": rng.uniform(a2, max(b2, a2 + 1e-6), n),
                "J": rng.uniform(0.9, 1.1, n), "p": rng.uniform(-1.0, 1.0, n)}

    def model_output(self, model: NetworkModel, env: dict[str, np.ndarray],
                     mode: GateMode = GateMode.TEST) -> np.ndarray:
        return IncompressiblePotential(model).energy(env["I1"], env["I2"], env["J"], env["p"], mode)

    def curves(self, model: NetworkModel, start: float | None = None, stop: float | None = None,
               points: int = 101, mode: GateMode = GateMode.TEST) -> pd.DataFrame:
        """Per-mode stress over the data range (or [start, stop]), in data units."""
        frames = []
        for m, group in self.dataset.frame.groupby("mode", sort=False):
            v = group["lambda_or_gamma"].to_numpy(dtype=float)
            values = value_range(start, stop, points, (float(v.min()), float(v.max())))
            rows = pd.DataFrame({"mode": m, "lambda_or_gamma": values, "P": np.nan})
            pred = self.predict(model, rows, mode) / self.target_scale
            in_pool = self.pool[self.pool["mode"] == m]["lambda_or_gamma"]
            inside = (values >= in_pool.min()) & (values <= in_pool.max()) if len(in_pool) else np.zeros(len(values), bool)
            frames.append(pd.DataFrame({"mode": m, "lambda_or_gamma": values, "P_pred": pred,
                                        "in_training_domain": inside}))
        return pd.concat(frames, ignore_index=True)

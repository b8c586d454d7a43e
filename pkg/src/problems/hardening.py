"""Isotropic hardening R(r) fitted to uniaxial stress-strain data."""
from __future__ import annotations

import numpy as np
import pandas as pd

from src import symbolic as sym
from src.autodiff import Var
from src.data import Dataset
from src.errors import EmptyDataset
from src.gates import GateMode
from src.metrics import r2_score
from src.models import NetKind
from src.nets import BoundNetwork, NetworkModel
from src.plast import ElasticConstants, HardeningModel, fit_hardening_loss, uniaxial_response
from src.problems.base import DataSplit, Problem, value_range


class HardeningProblem(Problem):
    name = "hardening"
    default_net = NetKind.MONOTONE
    allowed_nets = (NetKind.MONOTONE,)
    input_names = ("r",)

    def __init__(self, dataset: Dataset, E: float, sigma_y: float, nu: float = 0.3, w0: float = 1e3,
                 strain_scale: float = 100.0, **params):
        super().__init__(dataset, E=E, sigma_y=sigma_y, nu=nu, w0=w0, strain_scale=strain_scale, **params)
        self.elastic = ElasticConstants(E=E, nu=nu, sigma_y=sigma_y)
        self.w0 = float(w0)
        self.strain_scale = float(strain_scale)
        self._strain = self.pool["strain_percent"].to_numpy(dtype=float) / 100.0
        self._stress = self.pool["stress_mpa"].to_numpy(dtype=float)

    def hardening_model(self, model: NetworkModel) -> HardeningModel:
        return HardeningModel(model, self.w0, self.strain_scale)

    def validate_input(self) -> tuple[bool, list]:
        errors = []
        if len(self._strain) == 0:
            errors.append("No stress-strain rows")
        if np.any(self._strain < 0.0):
            errors.append("Strains must be nonnegative")
        if not np.any(self.elastic.E * self._strain > self.elastic.sigma_y):
            errors.append("No data point lies beyond first yield")
        return len(errors) == 0, errors

    def order_rows(self, indices: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices)
        return indices[np.argsort(self._strain[indices], kind="stable")]

    def data_loss(self, bound: BoundNetwork, indices: np.ndarray) -> Var:
        data = [(float(self._strain[k]), float(self._stress[k])) for k in indices]
        return fit_hardening_loss(self.hardening_model(bound.model), bound, self.elastic, data)

    def predict(self, model: NetworkModel, strain: np.ndarray, mode: GateMode = GateMode.TEST) -> np.ndarray:
        """Stress along a nondecreasing grid of fractional strains."""
        hm = self.hardening_model(model)
        return np.array([p.stress for p in uniaxial_response(hm, self.elastic, strain, model.arrays(mode))])

    def evaluate(self, model: NetworkModel, indices: np.ndarray | None = None,
                 mode: GateMode = GateMode.TEST) -> float:
        idx = self.order_rows(np.arange(len(self._strain)) if indices is None else indices)
        if idx.size == 0:
            raise EmptyDataset("Hardening fit needs at least one point")
        eps, sig = self._strain[idx], self._stress[idx]
        sy = self.elastic.sigma_y
        pred = self.predict(model, eps, mode)
        plastic = self.elastic.E * eps > sy
        r0 = float(self.hardening_model(model).R(0.0, model.arrays(mode))[0])
        misfit = float(np.mean((pred[plastic] / sy - sig[plastic] / sy) ** 2)) if plastic.any() else 0.0
        return misfit + self.w0 * (r0 - 1.0) ** 2

    def metrics(self, model: NetworkModel, split: DataSplit, mode: GateMode = GateMode.TEST) -> dict:
        idx = self.order_rows(np.arange(len(self._strain)))
        pred = self.predict(model, self._strain[idx], mode)
        hm = self.hardening_model(model)
        arrays = model.arrays(mode)
        r_grid = np.linspace(0.0, 1.3 * float(self._strain.max()), 201)
        extrapolated = self.predict(model, r_grid, mode)
        return {"train_loss": self.evaluate(model, split.train, mode),
                "val_loss": self.evaluate(model, split.val, mode) if len(split.val) else float("nan"),
                "test_loss": None,
                "r2": {"stress": r2_score(pred, self._stress[idx])},
                "extra": {"R0": float(hm.R(0.0, arrays)[0]),
                          "monotone_extrapolation": float(np.all(np.diff(extrapolated) >= -1e-9))}}

    def expression_inputs(self) -> list[sym.ExprNode]:
        return [sym.mul(sym.const(self.strain_scale), sym.symbol("r"))]

    def sample_inputs(self, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        return {"r": rng.uniform(0.0, 1.3 * float(self._strain.max()), n)}

    def model_output(self, model: NetworkModel, env: dict[str, np.ndarray],
                     mode: GateMode = GateMode.TEST) -> np.ndarray:
        return self.hardening_model(model).R(env["r"], model.arrays(mode))

    def curves(self, model: NetworkModel, start: float | None = None, stop: float | None = None,
               points: int = 101, mode: GateMode = GateMode.TEST) -> pd.DataFrame:
        """Uniaxial stress over strain in percent, by default to 1.3x the largest data strain."""
        top = float(self._strain.max()) * 100.0
        strain_percent = value_range(start, stop, points, (0.0, 1.3 * top))
        stress = self.predict(model, strain_percent / 100.0, mode)
        return pd.DataFrame({"strain_percent": strain_percent, "stress_pred": stress,
                             "in_training_domain": strain_percent <= top + 1e-12})

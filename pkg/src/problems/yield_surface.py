"""Convex yield functions fitted to pi-plane points."""
from __future__ import annotations

import logging
import math

import numpy as np
import pandas as pd

from src import symbolic as sym
from src.autodiff import Var
from src.data import Dataset
from src.errors import EmptyDataset, SamplingError
from src.gates import GateMode
from src.models import NetKind
from src.nets import BoundNetwork, NetworkModel, evaluate_arrays
from src.plast import fit_yield_loss, get_yield_law, ray_radius, yield_radial_errors
from src.problems.base import DataSplit, Problem, value_range

logger = logging.getLogger(__name__)


class YieldSurfaceProblem(Problem):
    """f(pi1, pi2) = 0 on the data, f(0, 0) = -1 at the origin."""

    name = "yield"
    allowed_nets = (NetKind.ICNN, NetKind.MLP)
    input_names = ("pi1", "pi2")

    def __init__(self, dataset: Dataset, law: str | None = None, w_anchor: float = 1.0, **params):
        super().__init__(dataset, law=law, w_anchor=w_anchor, **params)
        self.law = get_yield_law(law) if law else None
        self.w_anchor = float(w_anchor)
        self._points = self.pool[["pi1", "pi2"]].to_numpy(dtype=float)

    def validate_input(self) -> tuple[bool, list]:
        errors = []
        if len(self._points) < 3:
            errors.append("A yield surface needs at least three points")
        if np.any(np.hypot(self._points[:, 0], self._points[:, 1]) == 0.0):
            errors.append("Yield points must not sit at the origin")
        return len(errors) == 0, errors

    def data_loss(self, bound: BoundNetwork, indices: np.ndarray) -> Var:
        return fit_yield_loss(bound, [tuple(self._points[k]) for k in indices], self.w_anchor)

    @staticmethod
    def level_function(model: NetworkModel, mode: GateMode = GateMode.TEST):
        arrays = model.arrays(mode)

        def f(p1: float, p2: float) -> float:
            return float(evaluate_arrays(arrays, model.activation, np.array([[p1, p2]]), model.output_activation)[0, 0])

        return f

    def evaluate(self, model: NetworkModel, indices: np.ndarray | None = None,
                 mode: GateMode = GateMode.TEST) -> float:
        pts = self._points if indices is None else self._points[np.asarray(indices)]
        if len(pts) == 0:
            raise EmptyDataset("Yield fit needs at least one point")
        f = model.predict(pts, mode)[:, 0]
        origin = float(model.predict([[0.0, 0.0]], mode)[0, 0]) + 1.0
        return float(np.mean(f ** 2) + self.w_anchor * origin ** 2)

    def radial_errors(self, model: NetworkModel, mode: GateMode = GateMode.TEST) -> np.ndarray:
        try:
            return yield_radial_errors(self.level_function(model, mode), self._points[:, 0], self._points[:, 1])
        except SamplingError as e:
            logger.warning("Radial error unavailable: %s", e.message)
            return np.full(len(self._points), np.inf)

    def metrics(self, model: NetworkModel, split: DataSplit, mode: GateMode = GateMode.TEST) -> dict:
        errors = self.radial_errors(model, mode)
        return {"train_loss": self.evaluate(model, split.train, mode),
                "val_loss": self.evaluate(model, split.val, mode) if len(split.val) else float("nan"),
                "test_loss": None, "r2": {},
                "extra": {"max_radial_error": float(np.max(errors)),
                          "mean_radial_error": float(np.mean(errors))}}

    def expression_inputs(self) -> list[sym.ExprNode]:
        return [sym.symbol("pi1"), sym.symbol("pi2")]

    def sample_inputs(self, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        r_max = 1.2 * float(np.max(np.hypot(self._points[:, 0], self._points[:, 1])))
        r = r_max * np.sqrt(rng.uniform(0.0, 1.0, n))
        t = rng.uniform(0.0, 2.0 * math.pi, n)
        return {"pi1": r * np.cos(t), "pi2": r * np.sin(t)}

    def model_output(self, model: NetworkModel, env: dict[str, np.ndarray],
                     mode: GateMode = GateMode.TEST) -> np.ndarray:
        return model.predict(np.column_stack([env["pi1"], env["pi2"]]), mode)[:, 0]

    def curves(self, model: NetworkModel, start: float | None = None, stop: float | None = None,
               points: int = 101, mode: GateMode = GateMode.TEST) -> pd.DataFrame:
        """Zero-level radius of the fitted surface along rays, angle in radians."""
        angles = value_range(start, stop, points, (0.0, 2.0 * math.pi))
        f = self.level_function(model, mode)
        pred = np.array([ray_radius(f, a) for a in angles])
        if self.law is not None:
            law = self.law
            ref = np.array([ray_radius(lambda p1, p2: float(law.value_pi(p1, p2)[0]), a) for a in angles])
        else:
            ref = np.full(len(angles), np.nan)
        return pd.DataFrame({"angle": angles, "pi1_pred": pred * np.cos(angles), "pi2_pred": pred * np.sin(angles),
                             "radius_pred": pred, "radius_ref": ref, "in_training_domain": True})

"""Problem ABC: one physics wrapper around a gated network, plus its data."""
from __future__ import annotations

import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from src.autodiff import Tape, Var
from src.data import Dataset
from src.errors import InvalidRange
from src.gates import GateMode
from src.models import NetKind
from src.nets import NETWORK_KINDS, BoundNetwork, NetworkModel
from src.symbolic import ExprNode, extract_expression


@dataclass
class ProblemResult:
    success: bool
    data: pd.DataFrame
    metadata: dict
    errors: list
    problem_name: str
    elapsed_seconds: float = 0.0


@dataclass
class DataSplit:
    train: np.ndarray
    val: np.ndarray
    extra: dict = field(default_factory=dict)


def value_range(start: float | None, stop: float | None, points: int,
                default: tuple[float, float]) -> np.ndarray:
    lo = default[0] if start is None else start
    hi = default[1] if stop is None else stop
    if points < 1 or not hi > lo:
        raise InvalidRange(f"Empty range [{lo}, {hi}] with {points} points", start=lo, stop=hi, points=points)
    return np.linspace(lo, hi, points)


class Problem(ABC):
    """Builds the model, the tape loss on a subset of rows, metrics, curves and the expression.

    Rows are addressed by integer indices into `self.pool`, the frame that is
    split into training and validation points. Held-out test data, when the
    problem has any, lives in `self.test`.
    """

    name: str = "base"
    default_net: NetKind = NetKind.ICNN
    allowed_nets: tuple[NetKind, ...] = (NetKind.ICNN,)
    input_names: tuple[str, ...] = ()

    def __init__(self, dataset: Dataset, **params):
        self.dataset = dataset
        self.params = params
        self.pool: pd.DataFrame = dataset.frame
        self.test: pd.DataFrame | None = None

    @property
    def n_points(self) -> int:
        return len(self.pool)

    @abstractmethod
    def validate_input(self) -> tuple[bool, list]:
        ...

    def widths(self, hidden: Sequence[int]) -> list[int]:
        return [len(self.input_names), *hidden, 1]

    def build_model(self, hidden: Sequence[int], rng: np.random.Generator,
                    net: NetKind | None = None) -> NetworkModel:
        net = NetKind(net) if net is not None else self.default_net
        if net not in self.allowed_nets:
            raise ValueError(f"Problem '{self.name}' does not support '{net.value}' networks")
        return NETWORK_KINDS[net.value].initialize(self.widths(hidden), rng)

    @abstractmethod
    def data_loss(self, bound: BoundNetwork, indices: np.ndarray) -> Var:
        """Data misfit of the rows `indices`, recorded on `bound.tape`."""

    @abstractmethod
    def evaluate(self, model: NetworkModel, indices: np.ndarray | None = None,
                 mode: GateMode = GateMode.TEST) -> float:
        """The same misfit as `data_loss`, in numpy with deterministic gates."""

    def test_loss(self, model: NetworkModel, mode: GateMode = GateMode.TEST) -> float | None:
        return None

    @abstractmethod
    def metrics(self, model: NetworkModel, split: DataSplit, mode: GateMode = GateMode.TEST) -> dict:
        ...

    def wrap_expression(self, model: NetworkModel, nn: ExprNode, mode: GateMode = GateMode.TEST) -> ExprNode:
        """Physics wrapper around the raw network expression; identity by default."""
        return nn

    @abstractmethod
    def expression_inputs(self) -> list[ExprNode]:
        ...

    def expression(self, model: NetworkModel, mode: GateMode = GateMode.TEST) -> ExprNode:
        return extract_expression(model, self.expression_inputs(),
                                  lambda nn: self.wrap_expression(model, nn, mode), mode)

    @abstractmethod
    def sample_inputs(self, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        """Random admissible symbol values inside the data range, for fidelity checks."""

    @abstractmethod
    def model_output(self, model: NetworkModel, env: dict[str, np.ndarray],
                     mode: GateMode = GateMode.TEST) -> np.ndarray:
        """What the expression should equal at `env`, computed from the network itself."""

    @abstractmethod
    def curves(self, model: NetworkModel, start: float | None = None, stop: float | None = None,
               points: int = 101, mode: GateMode = GateMode.TEST) -> pd.DataFrame:
        ...

    def order_rows(self, indices: np.ndarray) -> np.ndarray:
        """Order in which a subset must be fed to `data_loss`; identity unless overridden."""
        return indices

    def to_params(self) -> dict:
        return dict(self.params)

    def run(self, model: NetworkModel, split: DataSplit, mode: GateMode = GateMode.TEST) -> ProblemResult:
        start = time.time()
        valid, errors = self.validate_input()
        if not valid:
            return ProblemResult(success=False, data=self.pool, metadata={}, errors=errors,
                                 problem_name=self.name)
        metadata = self.metrics(model, split, mode)
        return ProblemResult(success=True, data=self.pool, metadata=metadata, errors=[],
                             problem_name=self.name, elapsed_seconds=time.time() - start)


def tape_data_loss(problem: Problem, model: NetworkModel, indices: np.ndarray,
                   mode: GateMode = GateMode.TEST) -> float:
    """Tape evaluation of the data loss; used to cross-check the numpy path."""
    bound = model.bind(Tape(), mode)
    return problem.data_loss(bound, problem.order_rows(indices)).value

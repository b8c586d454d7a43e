"""Gated feed-forward networks: input-convex, positive-monotone and plain MLP.

All three share one layer layout. A network is a list of `Layer`s; hidden layers
apply the activation. The last layer is linear except in the monotone family,
where a softplus keeps the output strictly positive. Input-convex networks also carry
passthrough weights from the raw input into every layer after the first.

Two evaluation paths exist: `BoundNetwork.forward` records on an autodiff tape
(training, order-2 gradients), `NetworkModel.predict*` uses numpy in test-gate
mode (metrics, curves, fidelity checks).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.special import expit

from src import autodiff as ad
from src.autodiff import Tape, Var
from src.errors import CorruptCheckpoint, ShapeError
from src.gates import (DEFAULT_GATES, BoundParam, GateConstants, GatedParam, GateMode,
                       draw_noise, effective_value, sample_gate, test_gate)


class Activation(str, Enum):
    SOFTPLUS = "softplus"
    SIGMOID = "sigmoid"


def _activate(z, activation: Activation):
    if isinstance(z, Var):
        return ad.softplus(z) if activation is Activation.SOFTPLUS else ad.sigmoid(z)
    if activation is Activation.SOFTPLUS:
        return ad.stable_softplus(z)
    return ad.stable_sigmoid(z)


def _activate_np(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.SOFTPLUS:
        return np.logaddexp(0.0, z)
    return expit(z)


def _activate_slope_np(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.SOFTPLUS:
        return expit(z)
    s = expit(z)
    return s * (1.0 - s)


LayerArrays = tuple[np.ndarray, "np.ndarray | None", np.ndarray]


def evaluate_arrays(arrays: list[LayerArrays], activation: Activation, X: np.ndarray,
                    output: Activation | None = None) -> np.ndarray:
    a = X
    last = len(arrays) - 1
    for l, (W, P, b) in enumerate(arrays):
        z = a @ W.T + b
        if P is not None:
            z = z + X @ P.T
        if l < last:
            a = _activate_np(z, activation)
        else:
            a = z if output is None else _activate_np(z, output)
    return a


def evaluate_arrays_with_input_grad(arrays: list[LayerArrays], activation: Activation,
                                    X: np.ndarray, output: Activation | None = None) -> tuple[np.ndarray, np.ndarray]:
    last = len(arrays) - 1
    pre, a = [], X
    for l, (W, P, b) in enumerate(arrays):
        z = a @ W.T + b
        if P is not None:
            z = z + X @ P.T
        pre.append(z)
        if l < last:
            a = _activate_np(z, activation)
        else:
            a = z if output is None else _activate_np(z, output)

    grad_x = np.zeros_like(X)
    g = np.ones((X.shape[0], 1)) if output is None else _activate_slope_np(pre[last], output)
    for l in range(last, -1, -1):
        W, P, _ = arrays[l]
        if l < last:
            g = g * _activate_slope_np(pre[l], activation)
        if P is not None:
            grad_x += g @ P
        if l == 0:
            grad_x += g @ W
        else:
            g = g @ W
    return a[:, 0], grad_x


@dataclass
class Layer:
    weights: list[list[GatedParam]]
    biases: list[GatedParam]
    passthrough: list[list[GatedParam]] | None = None

    @property
    def n_out(self) -> int:
        return len(self.biases)

    def parameters(self) -> list[GatedParam]:
        params = [gp for row in self.weights for gp in row]
        if self.passthrough is not None:
            params.extend(gp for row in self.passthrough for gp in row)
        params.extend(self.biases)
        return params

    def to_dict(self) -> dict:
        return {
            "weights": [[gp.to_dict() for gp in row] for row in self.weights],
            "passthrough": None if self.passthrough is None
            else [[gp.to_dict() for gp in row] for row in self.passthrough],
            "biases": [gp.to_dict() for gp in self.biases],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> Layer:
        pt = payload.get("passthrough")
        return cls(
            weights=[[GatedParam.from_dict(p) for p in row] for row in payload["weights"]],
            biases=[GatedParam.from_dict(p) for p in payload["biases"]],
            passthrough=None if pt is None else [[GatedParam.from_dict(p) for p in row] for row in pt],
        )


def _matrix(rng: np.random.Generator, n_out: int, n_in: int, constrained: bool) -> list[list[GatedParam]]:
    scale = 1.0 / math.sqrt(n_in)
    return [[GatedParam.initialize(rng, scale, constrained) for _ in range(n_in)] for _ in range(n_out)]


def _vector(rng: np.random.Generator, n_out: int, fan_in: int, constrained: bool) -> list[GatedParam]:
    scale = 1.0 / math.sqrt(fan_in)
    return [GatedParam.initialize(rng, scale, constrained) for _ in range(n_out)]


@dataclass
class BoundNetwork:
    """Effective parameters of a network recorded on one tape.

    Pruned effective parameters are `None` and skipped in the forward sums.
    """
    model: NetworkModel
    tape: Tape
    mode: GateMode
    bound: list[BoundParam]
    layers: list[tuple[list[list], list[list] | None, list]]
    penalty: Var | float

    @property
    def leaves(self) -> list[Var]:
        out = []
        for bp in self.bound:
            out.append(bp.theta_bar)
            out.append(bp.log_alpha)
        return out

    def value_arrays(self) -> list[LayerArrays]:
        """Current effective values (sampled gates included) as numpy arrays."""
        def val(v):
            return 0.0 if v is None else v.value

        out = []
        for weights, passthrough, biases in self.layers:
            W = np.array([[val(v) for v in row] for row in weights], dtype=float)
            P = None if passthrough is None else np.array([[val(v) for v in row] for row in passthrough], dtype=float)
            out.append((W, P, np.array([val(v) for v in biases], dtype=float)))
        return out

    def forward(self, x0: Sequence[Var | float]) -> list[Var]:
        n_in = self.model.widths[0]
        if len(x0) != n_in:
            raise ShapeError(f"Expected {n_in} inputs, got {len(x0)}", expected=n_in, got=len(x0))
        activation = self.model.activation
        output = self.model.output_activation
        a = list(x0)
        last = len(self.layers) - 1
        for l, (weights, passthrough, biases) in enumerate(self.layers):
            out = []
            for j, b in enumerate(biases):
                z = b if b is not None else 0.0
                for w, x in zip(weights[j], a):
                    if w is not None:
                        z = z + w * x
                if passthrough is not None:
                    for w, x in zip(passthrough[j], x0):
                        if w is not None:
                            z = z + w * x
                if l < last:
                    z = _activate(z, activation)
                elif output is not None:
                    z = _activate(z, output)
                out.append(z)
            a = out
        return [v if isinstance(v, Var) else self.tape.constant(v) for v in a]


class NetworkModel:
    """Shared layout, parameter bookkeeping and evaluation for the three families."""

    kind = "network"
    activation = Activation.SOFTPLUS
    output_activation: Activation | None = None

    def __init__(self, widths: Sequence[int], layers: list[Layer], gates: GateConstants = DEFAULT_GATES):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ShapeError(f"Invalid layer widths {widths}", widths=widths)
        if len(layers) != len(widths) - 1:
            raise ShapeError("Layer count does not match widths", widths=widths)
        for l, layer in enumerate(layers):
            if layer.n_out != widths[l + 1] or any(len(row) != widths[l] for row in layer.weights):
                raise ShapeError(f"Layer {l} does not match widths {widths}", layer=l)
        self.widths = widths
        self.layers = layers
        self.gates = gates

    @property
    def n_inputs(self) -> int:
        return self.widths[0]

    @property
    def n_outputs(self) -> int:
        return self.widths[-1]

    def parameters(self) -> list[GatedParam]:
        return [gp for layer in self.layers for gp in layer.parameters()]

    def project_constraints(self):
        for gp in self.parameters():
            gp.project()

    def bind(self, tape: Tape, mode: GateMode = GateMode.TEST,
             rng: np.random.Generator | None = None) -> BoundNetwork:
        params = self.parameters()
        bound = [gp.bind(tape) for gp in params]
        if mode is GateMode.TRAIN:
            if rng is None:
                raise ValueError("Training-mode gates need a random generator")
            noise = draw_noise(rng, len(params))

        effective: dict[int, Var | None] = {}
        penalty: Var | float = 0.0
        shift = self.gates.penalty_shift
        for k, (gp, bp) in enumerate(zip(params, bound)):
            if mode is GateMode.UNGATED:
                effective[id(gp)] = bp.theta_bar
                continue
            penalty = penalty + ad.sigmoid(bp.log_alpha - shift)
            if mode is GateMode.TRAIN:
                z = sample_gate(bp, float(noise[k]), self.gates)
                effective[id(gp)] = None if z.value == 0.0 else bp.theta_bar * z
            else:
                z = test_gate(gp, self.gates)
                effective[id(gp)] = None if z == 0.0 else bp.theta_bar * z

        layers = []
        for layer in self.layers:
            w = [[effective[id(gp)] for gp in row] for row in layer.weights]
            p = None if layer.passthrough is None else [[effective[id(gp)] for gp in row] for row in layer.passthrough]
            b = [effective[id(gp)] for gp in layer.biases]
            layers.append((w, p, b))
        return BoundNetwork(self, tape, mode, bound, layers, penalty)

    def arrays(self, mode: GateMode = GateMode.TEST) -> list[tuple[np.ndarray, np.ndarray | None, np.ndarray]]:
        if mode is GateMode.TRAIN:
            raise ValueError("Numpy evaluation only supports deterministic gates")

        def value(gp):
            return effective_value(gp, mode, self.gates)

        out = []
        for layer in self.layers:
            W = np.array([[value(gp) for gp in row] for row in layer.weights], dtype=float)
            P = None if layer.passthrough is None else np.array(
                [[value(gp) for gp in row] for row in layer.passthrough], dtype=float)
            b = np.array([value(gp) for gp in layer.biases], dtype=float)
            out.append((W, P, b))
        return out

    def _check_inputs(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_inputs:
            raise ShapeError(f"Expected {self.n_inputs} input columns, got {X.shape[1]}",
                             expected=self.n_inputs, got=int(X.shape[1]))
        return X

    def predict(self, X, mode: GateMode = GateMode.TEST) -> np.ndarray:
        return evaluate_arrays(self.arrays(mode), self.activation, self._check_inputs(X), self.output_activation)

    def predict_with_input_grad(self, X, mode: GateMode = GateMode.TEST) -> tuple[np.ndarray, np.ndarray]:
        """Scalar output and its gradient with respect to every input column."""
        if self.n_outputs != 1:
            raise ShapeError("Input gradients need a scalar-output network")
        return evaluate_arrays_with_input_grad(self.arrays(mode), self.activation, self._check_inputs(X),
                                               self.output_activation)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "widths": self.widths,
            "activation": self.activation.value,
            "gates": {"gamma": self.gates.gamma, "zeta": self.gates.zeta, "beta": self.gates.beta},
            "layers": [layer.to_dict() for layer in self.layers],
        }


class IcnnModel(NetworkModel):
    """Input-convex network: nonnegative hidden-to-hidden weights, free passthrough weights."""

    kind = "icnn"
    activation = Activation.SOFTPLUS

    @classmethod
    def initialize(cls, widths: Sequence[int], rng: np.random.Generator,
                   gates: GateConstants = DEFAULT_GATES) -> IcnnModel:
        widths = list(widths)
        n0 = widths[0]
        layers = []
        for l in range(len(widths) - 1):
            n_in, n_out = widths[l], widths[l + 1]
            if l == 0:
                layers.append(Layer(_matrix(rng, n_out, n_in, False), _vector(rng, n_out, n_in, False)))
            else:
                layers.append(Layer(_matrix(rng, n_out, n_in, True), _vector(rng, n_out, n_in + n0, False),
                                    passthrough=_matrix(rng, n_out, n0, False)))
        return cls(widths, layers, gates)


class MonotoneModel(NetworkModel):
    """Positive, coordinate-wise nondecreasing network.

    Every parameter is nonnegative and the head is a softplus, so the output is
    strictly positive even when every parameter is zero.
    """

    kind = "monotone"
    activation = Activation.SIGMOID
    output_activation = Activation.SOFTPLUS

    @classmethod
    def initialize(cls, widths: Sequence[int], rng: np.random.Generator,
                   gates: GateConstants = DEFAULT_GATES) -> MonotoneModel:
        widths = list(widths)
        layers = [Layer(_matrix(rng, widths[l + 1], widths[l], True), _vector(rng, widths[l + 1], widths[l], True))
                  for l in range(len(widths) - 1)]
        return cls(widths, layers, gates)


class MlpModel(NetworkModel):
    """Unconstrained baseline."""

    kind = "mlp"
    activation = Activation.SOFTPLUS

    @classmethod
    def initialize(cls, widths: Sequence[int], rng: np.random.Generator,
                   gates: GateConstants = DEFAULT_GATES) -> MlpModel:
        widths = list(widths)
        layers = [Layer(_matrix(rng, widths[l + 1], widths[l], False), _vector(rng, widths[l + 1], widths[l], False))
                  for l in range(len(widths) - 1)]
        return cls(widths, layers, gates)


NETWORK_KINDS: dict[str, type[NetworkModel]] = {
    IcnnModel.kind: IcnnModel,
    MonotoneModel.kind: MonotoneModel,
    MlpModel.kind: MlpModel,
}


def network_from_dict(payload: dict) -> NetworkModel:
    try:
        cls = NETWORK_KINDS[payload["kind"]]
        g = payload.get("gates", {})
        gates = GateConstants(**g) if g else DEFAULT_GATES
        layers = [Layer.from_dict(p) for p in payload["layers"]]
        return cls(payload["widths"], layers, gates)
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptCheckpoint(f"Invalid network checkpoint: {e}") from None


def _forward_single(model: NetworkModel, x0: Sequence[float | Var], mode: GateMode,
                    rng: np.random.Generator | None, tape: Tape | None) -> list[Var]:
    if tape is None:
        tape = next((x.tape for x in x0 if isinstance(x, Var)), None) or Tape()
    return model.bind(tape, mode, rng).forward(x0)


def icnn_forward(model: IcnnModel, x0: Sequence[float | Var], mode: GateMode = GateMode.TEST,
                 rng: np.random.Generator | None = None, tape: Tape | None = None) -> Var:
    return _forward_single(model, x0, mode, rng, tape)[0]


def monotone_forward(model: MonotoneModel, x0: Sequence[float | Var], mode: GateMode = GateMode.TEST,
                     rng: np.random.Generator | None = None, tape: Tape | None = None) -> list[Var]:
    return _forward_single(model, x0, mode, rng, tape)


def mlp_forward(model: MlpModel, x0: Sequence[float | Var], mode: GateMode = GateMode.TEST,
                rng: np.random.Generator | None = None, tape: Tape | None = None) -> Var:
    return _forward_single(model, x0, mode, rng, tape)[0]


def project_constraints(model: NetworkModel):
    model.project_constraints()

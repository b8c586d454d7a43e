"""Hyperelastic kernels: invariants, normalized network potentials, stresses,
incompressible deformation modes and the analytic reference laws."""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from src import autodiff as ad
from src.autodiff import Tape, Var
from src.errors import InvalidDeformation, ShapeError, UnknownDataset
from src.gates import GateMode
from src.nets import BoundNetwork, NetworkModel


class Mode(str, Enum):
    UT = "UT"
    UC = "UC"
    ET = "ET"
    PS = "PS"
    SS = "SS"
    ST = "ST"


# Traction-free uniaxial compression uses the uniaxial closed form below unit stretch.
STRETCH_MODES = (Mode.UT, Mode.UC, Mode.ET, Mode.PS)


def adjugate(A: np.ndarray) -> np.ndarray:
    a = A
    return np.array([
        [a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1], a[0, 2] * a[2, 1] - a[0, 1] * a[2, 2], a[0, 1] * a[1, 2] - a[0, 2] * a[1, 1]],
        [a[1, 2] * a[2, 0] - a[1, 0] * a[2, 2], a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0], a[0, 2] * a[1, 0] - a[0, 0] * a[1, 2]],
        [a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0], a[0, 1] * a[2, 0] - a[0, 0] * a[2, 1], a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]],
    ])


def det3(A: np.ndarray) -> float:
    return float(A[0, 0] * (A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
                 - A[0, 1] * (A[1, 0] * A[2, 2] - A[1, 2] * A[2, 0])
                 + A[0, 2] * (A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0]))


@dataclass(frozen=True)
class DeformationState:
    F: np.ndarray
    C: np.ndarray
    C_inv: np.ndarray
    I1: float
    I2: float
    J: float

    @classmethod
    def from_F(cls, F) -> DeformationState:
        F = np.asarray(F, dtype=float)
        if F.shape != (3, 3):
            raise ShapeError(f"Deformation gradient must be 3x3, got {F.shape}")
        det_F = det3(F)
        if not det_F > 0.0:
            raise InvalidDeformation(f"det F must be positive, got {det_F:.6g}", det_F=det_F)
        C = F.T @ F
        cof = adjugate(C).T
        det_C = det3(C)
        return cls(F=F, C=C, C_inv=cof.T / det_C, I1=float(np.trace(C)), I2=float(np.trace(cof)),
                   J=math.sqrt(det_C))


def invariants(F) -> tuple[float, float, float]:
    s = DeformationState.from_F(F)
    return s.I1, s.I2, s.J


def stress_from_derivatives(d1, d2, dJ, state: DeformationState) -> list[list]:
    """S = 2(dPsi/dI1 + I1 dPsi/dI2) I - 2 dPsi/dI2 C + J dPsi/dJ C^-1 (floats or Vars)."""
    iso = (d1 + d2 * state.I1) * 2.0
    vol = dJ * state.J
    S = []
    for i in range(3):
        row = []
        for j in range(3):
            s = d2 * (-2.0 * state.C[i, j]) + vol * state.C_inv[i, j]
            if i == j:
                s = s + iso
            row.append(s)
        S.append(row)
    return S


# ---------------------------------------------------------------------------
# Compressible potential
# ---------------------------------------------------------------------------

REFERENCE_COMPRESSIBLE = (3.0, 3.0, 1.0)


class BoundCompressible:
    """A compressible potential recorded on a tape.

    The reference value and the normalization slope n are recomputed from the
    current effective parameters, so training sees their parameter gradients.
    """

    def __init__(self, network: BoundNetwork):
        self.network = network
        self.tape = network.tape
        x = [self.tape.variable(v) for v in REFERENCE_COMPRESSIBLE]
        out = network.forward(x)[0]
        g = ad.gradient(out, x, create_graph=True)
        self.reference_value = out
        self.slope = g[0] * 2.0 + g[1] * 4.0 + g[2]

    def energy(self, I1, I2, J) -> Var:
        x = [v if isinstance(v, Var) else self.tape.variable(v) for v in (I1, I2, J)]
        nn = self.network.forward(x)[0]
        return nn - self.reference_value - self.slope * (x[2] - 1.0)

    def energy_gradient(self, I1: float, I2: float, J: float) -> list[Var]:
        x = [self.tape.variable(v) for v in (I1, I2, J)]
        nn = self.network.forward(x)[0]
        d1, d2, dJ = ad.gradient(nn, x, create_graph=True)
        return [d1, d2, dJ - self.slope]

    def stress(self, state: DeformationState) -> list[list[Var]]:
        d1, d2, dJ = self.energy_gradient(state.I1, state.I2, state.J)
        return stress_from_derivatives(d1, d2, dJ, state)


class CompressiblePotential:
    """Psi = NN(I1, I2, J) - NN(3, 3, 1) - n (J - 1)."""

    def __init__(self, net: NetworkModel):
        if net.n_inputs != 3 or net.n_outputs != 1:
            raise ShapeError("Compressible potentials need a 3-input scalar network")
        self.net = net

    def bind(self, tape: Tape, mode: GateMode = GateMode.TEST,
             rng: np.random.Generator | None = None) -> BoundCompressible:
        return BoundCompressible(self.net.bind(tape, mode, rng))

    def normalization(self, mode: GateMode = GateMode.TEST) -> tuple[float, float]:
        value, grad = self.net.predict_with_input_grad(np.array([REFERENCE_COMPRESSIBLE]), mode)
        n = 2.0 * grad[0, 0] + 4.0 * grad[0, 1] + grad[0, 2]
        return float(value[0]), float(n)

    def energy(self, X, mode: GateMode = GateMode.TEST) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        ref, n = self.normalization(mode)
        return self.net.predict(X, mode)[:, 0] - ref - n * (X[:, 2] - 1.0)

    def energy_gradient(self, X, mode: GateMode = GateMode.TEST) -> np.ndarray:
        _, n = self.normalization(mode)
        _, grad = self.net.predict_with_input_grad(X, mode)
        grad[:, 2] -= n
        return grad

    def stress(self, F, mode: GateMode = GateMode.TEST) -> np.ndarray:
        state = DeformationState.from_F(F)
        d = self.energy_gradient(np.array([[state.I1, state.I2, state.J]]), mode)[0]
        return np.array(stress_from_derivatives(d[0], d[1], d[2], state), dtype=float)

    def stresses(self, Fs: Sequence, mode: GateMode = GateMode.TEST) -> np.ndarray:
        states = [DeformationState.from_F(F) for F in Fs]
        X = np.array([[s.I1, s.I2, s.J] for s in states])
        d = self.energy_gradient(X, mode)
        return np.array([stress_from_derivatives(di[0], di[1], di[2], s) for di, s in zip(d, states)], dtype=float)


def compressible_energy(pot: CompressiblePotential | BoundCompressible, I1, I2, J) -> Var:
    if J <= 0:
        raise InvalidDeformation("J must be positive", J=float(J))
    bound = pot if isinstance(pot, BoundCompressible) else pot.bind(Tape())
    return bound.energy(I1, I2, J)


def second_pk_stress(pot: CompressiblePotential, F) -> np.ndarray:
    return pot.stress(F)


# ---------------------------------------------------------------------------
# Incompressible potential and deformation modes
# ---------------------------------------------------------------------------

def mode_invariants(mode: Mode, value):
    if mode in (Mode.UT, Mode.UC):
        lam = value
        return lam ** 2 + 2.0 / lam, 2.0 * lam + 1.0 / lam ** 2
    if mode is Mode.ET:
        lam = value
        return 2.0 * lam ** 2 + 1.0 / lam ** 4, lam ** 4 + 2.0 / lam ** 2
    if mode is Mode.PS:
        lam = value
        i = lam ** 2 + 1.0 + 1.0 / lam ** 2
        return i, i
    if mode is Mode.SS:
        i = 3.0 + value ** 2
        return i, i
    raise ValueError(f"Mode {mode} has no closed-form invariants")


def mode_stress_from_derivatives(mode: Mode, value, d1, d2):
    """First Piola-Kirchhoff response with the pressure eliminated by traction-free sides."""
    if mode in (Mode.UT, Mode.UC):
        lam = value
        return (d1 + d2 * (1.0 / lam)) * (2.0 * (lam - 1.0 / lam ** 2))
    if mode is Mode.ET:
        lam = value
        return (d1 + d2 * lam ** 2) * (2.0 * (lam - 1.0 / lam ** 5))
    if mode is Mode.PS:
        lam = value
        p1 = (d1 + d2) * (2.0 * (lam - 1.0 / lam ** 3))
        p2 = (d1 + d2 * lam ** 2) * (2.0 * (1.0 - 1.0 / lam ** 2))
        return p1, p2
    if mode is Mode.SS:
        return (d1 + d2) * (2.0 * value)
    raise ValueError(f"Mode {mode} is not a closed-form stretch or shear mode")


def _check_stretch(mode: Mode, value: float):
    if mode in STRETCH_MODES and not value > 0.0:
        raise InvalidDeformation(f"{mode.value} stretch must be positive, got {value}", stretch=value)


def trapezoid_nodes(n_quad: int) -> tuple[np.ndarray, np.ndarray]:
    if n_quad < 2:
        raise ValueError("Trapezoid rule needs at least two nodes")
    rho = np.linspace(0.0, 1.0, n_quad)
    w = np.full(n_quad, 1.0 / (n_quad - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return rho, w


class BoundIncompressible:
    def __init__(self, network: BoundNetwork, n_quad: int = 32):
        self.network = network
        self.tape = network.tape
        self.n_quad = n_quad

    def derivatives(self, I1: float, I2: float) -> tuple[Var, Var]:
        x = [self.tape.variable(I1), self.tape.variable(I2)]
        nn = self.network.forward(x)[0]
        d1, d2 = ad.gradient(nn, x, create_graph=True)
        return d1, d2

    def mode_stress(self, mode: Mode, value: float):
        if mode is Mode.ST:
            return self.torsion(value, self.n_quad)
        _check_stretch(mode, value)
        d1, d2 = self.derivatives(*mode_invariants(mode, value))
        return mode_stress_from_derivatives(mode, value, d1, d2)

    def torsion(self, phi: float, n_quad: int = 32) -> Var | float:
        rho, w = trapezoid_nodes(n_quad)
        total: Var | float = 0.0
        for r, wk in zip(rho, w):
            if r == 0.0 or phi == 0.0:
                continue
            i = 3.0 + (r * phi) ** 2
            d1, d2 = self.derivatives(i, i)
            total = total + (d1 + d2) * (wk * 4.0 * math.pi * r ** 3 * phi)
        return total


class IncompressiblePotential:
    """Psi = NN(I1, I2) - NN(3, 3) - (p + n)(J - 1) with n = 2(dNN/dI1 + 2 dNN/dI2) at C = I.

    The n term cancels in every mode stress once the pressure is eliminated, so it
    only matters for the printed energy.
    """

    def __init__(self, net: NetworkModel):
        if net.n_inputs != 2 or net.n_outputs != 1:
            raise ShapeError("Incompressible potentials need a 2-input scalar network")
        self.net = net

    def bind(self, tape: Tape, mode: GateMode = GateMode.TEST,
             rng: np.random.Generator | None = None) -> BoundIncompressible:
        return BoundIncompressible(self.net.bind(tape, mode, rng))

    def normalization(self, mode: GateMode = GateMode.TEST) -> tuple[float, float]:
        value, grad = self.net.predict_with_input_grad(np.array([[3.0, 3.0]]), mode)
        return float(value[0]), float(2.0 * (grad[0, 0] + 2.0 * grad[0, 1]))

    def energy(self, I1, I2, J=1.0, p=0.0, mode: GateMode = GateMode.TEST) -> np.ndarray:
        X = np.column_stack([np.atleast_1d(I1), np.atleast_1d(I2)]).astype(float)
        ref, n = self.normalization(mode)
        return self.net.predict(X, mode)[:, 0] - ref - (p + n) * (np.asarray(J, dtype=float) - 1.0)

    def derivatives(self, I1, I2, mode: GateMode = GateMode.TEST) -> tuple[np.ndarray, np.ndarray]:
        X = np.column_stack([np.atleast_1d(I1), np.atleast_1d(I2)]).astype(float)
        _, grad = self.net.predict_with_input_grad(X, mode)
        return grad[:, 0], grad[:, 1]

    def mode_stress(self, mode: Mode, values, gate_mode: GateMode = GateMode.TEST):
        values = np.atleast_1d(np.asarray(values, dtype=float))
        if mode is Mode.ST:
            return np.array([self.torsion(v, gate_mode=gate_mode) for v in values])
        for v in values:
            _check_stretch(mode, float(v))
        d1, d2 = self.derivatives(*mode_invariants(mode, values), mode=gate_mode)
        return mode_stress_from_derivatives(mode, values, d1, d2)

    def torsion(self, phi: float, n_quad: int = 32, gate_mode: GateMode = GateMode.TEST) -> float:
        rho, w = trapezoid_nodes(n_quad)
        i = 3.0 + (rho * phi) ** 2
        d1, d2 = self.derivatives(i, i, mode=gate_mode)
        return float(np.sum(w * 4.0 * np.pi * rho ** 3 * phi * (d1 + d2)))


def incompressible_mode_stress(pot: IncompressiblePotential, mode: Mode | str, value: float):
    """P1 for UT/UC, P1 = P2 for ET, (P1, P2) for PS, P12 for SS."""
    mode = Mode(mode)
    result = pot.mode_stress(mode, [value])
    if isinstance(result, tuple):
        return float(result[0][0]), float(result[1][0])
    return float(result[0])


def torsion_torque(pot: IncompressiblePotential, phi: float, n_quad: int) -> float:
    return pot.torsion(phi, n_quad)


# ---------------------------------------------------------------------------
# Reference laws
# ---------------------------------------------------------------------------

class HyperelasticLaw(ABC):
    name: str = "law"

    @abstractmethod
    def energy(self, I1, I2, J):
        ...

    @abstractmethod
    def gradient(self, I1, I2, J) -> tuple:
        ...

    def check_domain(self, I1, I2, J):
        if np.any(np.asarray(J) <= 0.0):
            raise InvalidDeformation(f"{self.name}: J must be positive")

    def slope(self) -> float:
        d1, d2, dJ = self.gradient(*REFERENCE_COMPRESSIBLE)
        return float(2.0 * d1 + 4.0 * d2 + dJ)

    def normalized_energy(self, I1, I2, J):
        """Energy with the same reference and volumetric corrections the network potential gets."""
        return (self.energy(I1, I2, J) - self.energy(*REFERENCE_COMPRESSIBLE)
                - self.slope() * (np.asarray(J, dtype=float) - 1.0))

    def normalized_gradient(self, I1, I2, J) -> tuple:
        d1, d2, dJ = self.gradient(I1, I2, J)
        return d1, d2, dJ - self.slope()

    def stress(self, F, normalized: bool = True) -> np.ndarray:
        state = DeformationState.from_F(F)
        grad = self.normalized_gradient if normalized else self.gradient
        d1, d2, dJ = grad(state.I1, state.I2, state.J)
        return np.array(stress_from_derivatives(float(d1), float(d2), float(dJ), state), dtype=float)


@dataclass(frozen=True)
class GentGent(HyperelasticLaw):
    theta1: float = 2.4195
    jm: float = 77.931
    theta2: float = -0.75
    theta3: float = 1.20975
    name: str = "gent-gent"

    def check_domain(self, I1, I2, J):
        super().check_domain(I1, I2, J)
        if np.any(np.asarray(I1) - 3.0 >= self.jm):
            raise InvalidDeformation("gent-gent: I1 - 3 must stay below Jm")

    def energy(self, I1, I2, J):
        self.check_domain(I1, I2, J)
        I1, I2, J = (np.asarray(v, dtype=float) for v in (I1, I2, J))
        return (-0.5 * self.theta1 * self.jm * np.log(1.0 - (I1 - 3.0) / self.jm)
                - self.theta2 * np.log(I2 / J)
                + self.theta3 * (0.5 * (J ** 2 - 1.0) - np.log(J)))

    def gradient(self, I1, I2, J):
        self.check_domain(I1, I2, J)
        I1, I2, J = (np.asarray(v, dtype=float) for v in (I1, I2, J))
        d1 = 0.5 * self.theta1 / (1.0 - (I1 - 3.0) / self.jm)
        d2 = -self.theta2 / I2
        dJ = self.theta2 / J + self.theta3 * (J - 1.0 / J)
        return d1, d2, dJ


@dataclass(frozen=True)
class MooneyRivlin(HyperelasticLaw):
    theta1: float = 9.2e-4
    theta2: float = 2.37e-3
    theta3: float = 10.0010
    name: str = "mooney-rivlin"

    def energy(self, I1, I2, J):
        self.check_domain(I1, I2, J)
        I1, I2, J = (np.asarray(v, dtype=float) for v in (I1, I2, J))
        return (self.theta1 * (I1 * J ** (-2.0 / 3.0) - 3.0) + self.theta2 * (I2 * J ** (-4.0 / 3.0) - 3.0)
                + self.theta3 * (J - 1.0) ** 2)

    def gradient(self, I1, I2, J):
        self.check_domain(I1, I2, J)
        I1, I2, J = (np.asarray(v, dtype=float) for v in (I1, I2, J))
        d1 = self.theta1 * J ** (-2.0 / 3.0)
        d2 = self.theta2 * J ** (-4.0 / 3.0)
        dJ = (-2.0 / 3.0 * self.theta1 * I1 * J ** (-5.0 / 3.0)
              - 4.0 / 3.0 * self.theta2 * I2 * J ** (-7.0 / 3.0)
              + 2.0 * self.theta3 * (J - 1.0))
        return d1, d2, dJ


@dataclass(frozen=True)
class Polynomial(HyperelasticLaw):
    """Polynomial law in (I1, I2, I3 = J^2)."""
    theta1: float = 0.1
    theta2: float = 0.15
    theta3: float = 2e-4
    theta4: float = 1e-4
    theta5: float = 0.125
    name: str = "polynomial"

    def energy(self, I1, I2, J):
        self.check_domain(I1, I2, J)
        I1, I2, J = (np.asarray(v, dtype=float) for v in (I1, I2, J))
        a, b, i3 = I1 - 3.0, I2 - 3.0, J ** 2
        return (self.theta1 * a ** 2 + self.theta2 * a ** 4 + self.theta3 * b ** 2 + self.theta4 * b ** 4
                + self.theta5 * (i3 - 1.0) ** 2)

    def gradient(self, I1, I2, J):
        self.check_domain(I1, I2, J)
        I1, I2, J = (np.asarray(v, dtype=float) for v in (I1, I2, J))
        a, b = I1 - 3.0, I2 - 3.0
        d1 = 2.0 * self.theta1 * a + 4.0 * self.theta2 * a ** 3
        d2 = 2.0 * self.theta3 * b + 4.0 * self.theta4 * b ** 3
        dJ = 4.0 * self.theta5 * (J ** 2 - 1.0) * J
        return d1, d2, dJ


LAWS: dict[str, HyperelasticLaw] = {law.name: law for law in (GentGent(), MooneyRivlin(), Polynomial())}


def get_law(name: str) -> HyperelasticLaw:
    try:
        return LAWS[name]
    except KeyError:
        raise UnknownDataset(f"Unknown hyperelastic law '{name}'", name=name) from None


def ground_truth_energy(law: HyperelasticLaw | str, I1, I2, J) -> tuple[float, tuple[float, float, float]]:
    if isinstance(law, str):
        law = get_law(law)
    value = float(law.energy(I1, I2, J))
    d1, d2, dJ = law.gradient(I1, I2, J)
    return value, (float(d1), float(d2), float(dJ))

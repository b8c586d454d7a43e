"""Elastoplastic kernels: pi-plane transform, reference yield laws, isotropic
elasticity and the uniaxial response of a von Mises surface scaled by a neural
hardening function R(r)."""
from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import brentq

from src.autodiff import Var
from src.errors import ConvergenceError, EmptyDataset, NonMonotoneStrain, SamplingError, UnknownDataset
from src.nets import BoundNetwork, MonotoneModel, NetworkModel, evaluate_arrays, evaluate_arrays_with_input_grad

logger = logging.getLogger(__name__)

_S23, _S16, _S12, _S13 = math.sqrt(2.0 / 3.0), math.sqrt(1.0 / 6.0), math.sqrt(0.5), math.sqrt(1.0 / 3.0)

PI_TRANSFORM = np.array([
    [_S23, -_S16, -_S16],
    [0.0, _S12, -_S12],
    [_S13, _S13, _S13],
])


def principal_to_pi(s1, s2, s3) -> tuple:
    pi = PI_TRANSFORM @ np.array([s1, s2, s3], dtype=float)
    return tuple(float(v) for v in pi) if pi.ndim == 1 else tuple(pi)


def pi_to_principal(pi1, pi2, pi3=0.0) -> np.ndarray:
    """Principal stresses for pi-plane coordinates; rows are points when given arrays."""
    pi = np.array(np.broadcast_arrays(np.asarray(pi1, dtype=float), np.asarray(pi2, dtype=float),
                                      np.asarray(pi3, dtype=float)))
    return (PI_TRANSFORM.T @ pi.reshape(3, -1)).T.reshape(pi.shape[1:] + (3,))


# ---------------------------------------------------------------------------
# Reference yield laws, written on principal stresses
# ---------------------------------------------------------------------------

def _deviator(sigma: np.ndarray) -> np.ndarray:
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    return sigma - sigma.mean(axis=1, keepdims=True)


class YieldLaw(ABC):
    name: str = "yield"

    @abstractmethod
    def value(self, sigma) -> np.ndarray:
        """Signed yield value for principal stresses (n, 3); zero on the surface."""

    def value_pi(self, pi1, pi2) -> np.ndarray:
        return self.value(np.atleast_2d(pi_to_principal(pi1, pi2)))


@dataclass(frozen=True)
class Drucker(YieldLaw):
    """J2^3 + 1.5 J3^2 - c."""
    c: float = 0.24
    name: str = "drucker"

    def value(self, sigma):
        s = _deviator(sigma)
        j2 = 0.5 * np.sum(s ** 2, axis=1)
        j3 = np.prod(s, axis=1)
        return j2 ** 3 + 1.5 * j3 ** 2 - self.c


@dataclass(frozen=True)
class Cazacu(YieldLaw):
    """Sum_i (|s_i| - k s_i)^2 - c, tension-compression asymmetric."""
    k: float = -0.5
    c: float = 0.24
    name: str = "cazacu"

    def value(self, sigma):
        s = _deviator(sigma)
        return np.sum((np.abs(s) - self.k * s) ** 2, axis=1) - self.c


@dataclass(frozen=True)
class Tresca(YieldLaw):
    c: float = 0.24
    name: str = "tresca"

    def value(self, sigma):
        s = np.atleast_2d(np.asarray(sigma, dtype=float))
        diffs = np.abs(np.stack([s[:, 0] - s[:, 1], s[:, 1] - s[:, 2], s[:, 2] - s[:, 0]], axis=1))
        return diffs.max(axis=1) - self.c


@dataclass(frozen=True)
class VonMises(YieldLaw):
    """Circle of the given radius in the pi-plane."""
    radius: float = 1.0
    name: str = "von-mises"

    def value(self, sigma):
        s = _deviator(sigma)
        return np.sqrt(np.sum(s ** 2, axis=1)) - self.radius


YIELD_LAWS: dict[str, YieldLaw] = {law.name: law for law in (Drucker(), Cazacu(), Tresca(), VonMises())}


def get_yield_law(name: str) -> YieldLaw:
    try:
        return YIELD_LAWS[name]
    except KeyError:
        raise UnknownDataset(f"Unknown yield law '{name}'", name=name) from None


def yield_ground_truth(law: YieldLaw | str, sigma) -> np.ndarray | float:
    if isinstance(law, str):
        law = get_yield_law(law)
    values = law.value(sigma)
    return float(values[0]) if np.ndim(sigma) == 1 else values


def ray_radius(fn: Callable[[float, float], float], angle: float, r_start: float = 1.0,
               max_doublings: int = 60, xtol: float = 1e-14) -> float:
    """Radius along the pi-plane ray at `angle` where fn changes sign from inside to outside."""
    c, s = math.cos(angle), math.sin(angle)
    f0 = fn(0.0, 0.0)
    if not f0 < 0.0:
        raise SamplingError("The origin is not inside the yield surface", value=float(f0))
    lo, hi = 0.0, r_start
    for _ in range(max_doublings):
        if fn(hi * c, hi * s) > 0.0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise SamplingError(f"Ray at angle {angle:.4f} never leaves the yield surface", angle=angle)
    return brentq(lambda r: fn(r * c, r * s), lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)


def yield_radial_errors(fn: Callable[[float, float], float], pi1, pi2) -> np.ndarray:
    """Relative radial distance between the zero level of `fn` and each data point."""
    pi1, pi2 = np.asarray(pi1, dtype=float), np.asarray(pi2, dtype=float)
    radii = np.hypot(pi1, pi2)
    angles = np.arctan2(pi2, pi1)
    fitted = np.array([ray_radius(fn, a) for a in angles])
    return np.abs(fitted - radii) / radii


def fit_yield_loss(net: BoundNetwork, points: Sequence[tuple[float, float]], w_anchor: float = 1.0) -> Var:
    """Mean squared yield value on the data plus an anchor pinning f(0, 0) = -1."""
    if len(points) == 0:
        raise EmptyDataset("Yield fit needs at least one point")
    total = 0.0
    for p1, p2 in points:
        f = net.forward([float(p1), float(p2)])[0]
        total = f * f + total
    origin = net.forward([0.0, 0.0])[0] + 1.0
    return total * (1.0 / len(points)) + origin * origin * w_anchor


# ---------------------------------------------------------------------------
# Elasticity and hardening
# ---------------------------------------------------------------------------

class ElasticConstants(BaseModel):
    model_config = ConfigDict(frozen=True)

    E: float = Field(gt=0)
    nu: float = Field(gt=-1.0, lt=0.5)
    sigma_y: float = Field(gt=0)

    @property
    def lame(self) -> float:
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    @property
    def shear(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    def stiffness(self) -> np.ndarray:
        """Isotropic stiffness in Voigt notation (engineering shear strains)."""
        lam, mu = self.lame, self.shear
        C = np.zeros((6, 6))
        C[:3, :3] = lam
        C[np.arange(3), np.arange(3)] += 2.0 * mu
        C[np.arange(3, 6), np.arange(3, 6)] = mu
        return C

    @property
    def yield_strain(self) -> float:
        return self.sigma_y / self.E


class HardeningModel:
    """sigma_y R(r) with R a positive monotone network of the plastic strain r.

    The network sees `strain_scale * r` so typical plastic strains are O(1) inputs.
    """

    def __init__(self, net: MonotoneModel | NetworkModel, w0: float = 1e3, strain_scale: float = 100.0):
        if net.n_inputs != 1 or net.n_outputs != 1:
            raise ValueError("Hardening networks map one input to one output")
        self.net = net
        self.w0 = w0
        self.strain_scale = strain_scale

    def R(self, r, arrays=None) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        arrays = arrays if arrays is not None else self.net.arrays()
        return evaluate_arrays(arrays, self.net.activation, (self.strain_scale * r)[:, None],
                               self.net.output_activation)[:, 0]

    def R_with_slope(self, r, arrays=None) -> tuple[np.ndarray, np.ndarray]:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        arrays = arrays if arrays is not None else self.net.arrays()
        value, grad = evaluate_arrays_with_input_grad(arrays, self.net.activation, (self.strain_scale * r)[:, None],
                                                     self.net.output_activation)
        return value, grad[:, 0] * self.strain_scale


@dataclass
class CurvePoint:
    strain: float
    stress: float
    r: float
    plastic: bool


def _check_grid(eps: Sequence[float]) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    if eps.size == 0:
        raise EmptyDataset("Strain grid is empty")
    if eps[0] < 0.0 or np.any(np.diff(eps) < 0.0):
        raise NonMonotoneStrain("Strain grid must start at or above zero and be nondecreasing")
    return eps


def _solve_plastic(R: Callable, E: float, sigma_y: float, eps: float, r_prev: float) -> float:
    """Root of sigma_y R(r) - E (eps - r) on [r_prev, eps]; the residual is increasing in r."""
    def residual(r):
        return sigma_y * float(R(r)[0]) - E * (eps - r)

    lo, hi = r_prev, eps
    f_hi = residual(hi)
    if not f_hi > 0.0:
        raise ConvergenceError(f"Hardening root not bracketed at strain {eps:.6g}", strain=eps)
    r, info = brentq(residual, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500, full_output=True)
    logger.debug("plastic strain %.6g at total strain %.6g (%d iterations)", r, eps, info.iterations)
    return r


def uniaxial_response(hm: HardeningModel, ec: ElasticConstants, eps_grid: Sequence[float],
                      arrays=None) -> list[CurvePoint]:
    """Monotonic uniaxial loading; r carries forward along the (fractional) strain grid."""
    eps_grid = _check_grid(eps_grid)
    arrays = arrays if arrays is not None else hm.net.arrays()

    def R(r):
        return hm.R(r, arrays)

    def R_slope(r):
        return hm.R_with_slope(r, arrays)

    out, r = [], 0.0
    for eps in eps_grid:
        trial = ec.E * (eps - r)
        limit = ec.sigma_y * float(R(r)[0])
        if trial <= limit:
            out.append(CurvePoint(float(eps), float(trial), r, False))
            continue
        r_new = _solve_plastic(R, ec.E, ec.sigma_y, float(eps), r)
        # Newton polish; kept only if it stays inside the bracket.
        for _ in range(2):
            value, slope = R_slope(r_new)
            res = ec.sigma_y * value[0] - ec.E * (eps - r_new)
            step = res / (ec.sigma_y * slope[0] + ec.E)
            if r <= r_new - step <= eps:
                r_new -= step
        r = max(r, float(r_new))
        out.append(CurvePoint(float(eps), float(ec.E * (eps - r)), r, True))
    return out


def uniaxial_elastoplastic_curve(hm: HardeningModel, ec: ElasticConstants, eps_grid: Sequence[float]) -> list[float]:
    return [p.stress for p in uniaxial_response(hm, ec, eps_grid)]


def fit_hardening_loss(hm: HardeningModel, bound: BoundNetwork, ec: ElasticConstants,
                       data: Sequence[tuple[float, float]]) -> Var:
    """MSE of sigma / sigma_y on plastic-branch data plus w0 (R(0) - 1)^2.

    Strains are fractions. On the plastic branch sigma = sigma_y R(r*) where r*
    solves sigma_y R(r) = E (eps - r); its parameter sensitivity is
    sigma_y dR/dtheta * E / (E + sigma_y R'(r*)), recorded as a linearized node.
    """
    if len(data) == 0:
        raise EmptyDataset("Hardening fit needs at least one point")
    eps = np.array([d[0] for d in data], dtype=float)
    sig = np.array([d[1] for d in data], dtype=float)
    arrays = bound.value_arrays()
    curve = uniaxial_response(hm, ec, eps, arrays)

    total, count = 0.0, 0
    for point, target in zip(curve, sig):
        if ec.E * point.strain <= ec.sigma_y:
            continue
        count += 1
        if point.plastic:
            R_var = bound.forward([hm.strain_scale * point.r])[0]
            _, slope = hm.R_with_slope(point.r, arrays)
            c = ec.E / (ec.E + ec.sigma_y * slope[0])
            pred = (R_var - R_var.value) * c + point.stress / ec.sigma_y
        else:
            pred = bound.tape.constant(point.stress / ec.sigma_y)
        resid = pred - target / ec.sigma_y
        total = resid * resid + total
    R0 = bound.forward([0.0])[0] - 1.0
    anchor = R0 * R0 * hm.w0
    if count == 0:
        return anchor
    return total * (1.0 / count) + anchor

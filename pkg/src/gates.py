"""Hard-concrete L0 gates.

Every trainable scalar is stored as a magnitude `theta_bar` plus a gate location
`log_alpha`. During training the effective parameter is theta_bar * z with z a
stretched, clamped concrete sample; at test time z is deterministic and can be
exactly zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

from src import autodiff as ad
from src.autodiff import Tape, Var
from src.errors import InvalidNoise

NOISE_CLIP = 1e-6


@dataclass(frozen=True)
class GateConstants:
    gamma: float = -0.1
    zeta: float = 1.1
    beta: float = 2.0 / 3.0

    def __post_init__(self):
        if not (self.gamma < 0.0 < 1.0 < self.zeta):
            raise ValueError("Gate constants require gamma < 0 < 1 < zeta")
        if not (0.0 < self.beta < 1.0):
            raise ValueError("Gate temperature beta must lie in (0, 1)")

    @property
    def penalty_shift(self) -> float:
        return self.beta * math.log(-self.gamma / self.zeta)


DEFAULT_GATES = GateConstants()


class GateMode(str, Enum):
    TRAIN = "train"
    TEST = "test"
    UNGATED = "ungated"


@dataclass
class GatedParam:
    theta_bar: float
    log_alpha: float = 0.0
    constrained: bool = False

    @classmethod
    def initialize(cls, rng: np.random.Generator, scale: float, constrained: bool = False) -> GatedParam:
        theta = float(rng.normal(0.0, scale))
        if constrained:
            theta = abs(theta)
        return cls(theta_bar=theta, log_alpha=float(rng.normal(0.0, 0.01)), constrained=constrained)

    def bind(self, tape: Tape) -> BoundParam:
        return BoundParam(self, tape.variable(self.theta_bar), tape.variable(self.log_alpha))

    def project(self):
        if self.constrained and self.theta_bar < 0.0:
            self.theta_bar = 0.0

    def to_dict(self) -> dict:
        return {"theta_bar": self.theta_bar, "log_alpha": self.log_alpha, "constrained": self.constrained}

    @classmethod
    def from_dict(cls, payload: dict) -> GatedParam:
        return cls(float(payload["theta_bar"]), float(payload["log_alpha"]), bool(payload.get("constrained", False)))


@dataclass
class BoundParam:
    """A GatedParam whose two trainable scalars live on a tape."""
    source: GatedParam
    theta_bar: Var
    log_alpha: Var


def _as_bound(gp: GatedParam | BoundParam, tape: Tape | None) -> BoundParam:
    if isinstance(gp, BoundParam):
        return gp
    return gp.bind(tape if tape is not None else Tape())


def sample_gate(gp: GatedParam | BoundParam, u: float, c: GateConstants = DEFAULT_GATES,
                tape: Tape | None = None) -> Var:
    if not (0.0 < u < 1.0):
        raise InvalidNoise(f"Gate noise must lie strictly inside (0, 1), got {u!r}", u=u)
    u = min(max(u, NOISE_CLIP), 1.0 - NOISE_CLIP)
    bound = _as_bound(gp, tape)
    logit = math.log(u) - math.log(1.0 - u)
    s = ad.sigmoid((bound.log_alpha + logit) * (1.0 / c.beta))
    s_bar = s * (c.zeta - c.gamma) + c.gamma
    return ad.minimum(ad.maximum(s_bar, 0.0), 1.0)


def expected_l0_penalty(gp: GatedParam | BoundParam, c: GateConstants = DEFAULT_GATES,
                        tape: Tape | None = None) -> Var:
    bound = _as_bound(gp, tape)
    return ad.sigmoid(bound.log_alpha - c.penalty_shift)


def expected_l0_value(log_alpha: float, c: GateConstants = DEFAULT_GATES) -> float:
    return ad.stable_sigmoid(log_alpha - c.penalty_shift)


def test_gate(gp: GatedParam, c: GateConstants = DEFAULT_GATES) -> float:
    s = ad.stable_sigmoid(gp.log_alpha)
    # Exact clamps so a pruned gate is a hard zero rather than a rounding residue.
    if s <= c.gamma / (c.gamma - c.zeta):
        return 0.0
    if s >= (1.0 - c.gamma) / (c.zeta - c.gamma):
        return 1.0
    return min(1.0, max(0.0, s * (c.zeta - c.gamma) + c.gamma))


test_gate.__test__ = False


def effective_value(gp: GatedParam, mode: GateMode, c: GateConstants = DEFAULT_GATES) -> float:
    if mode is GateMode.UNGATED:
        return gp.theta_bar
    return gp.theta_bar * test_gate(gp, c)


def active_count(params: Iterable[GatedParam], c: GateConstants = DEFAULT_GATES) -> int:
    count = 0
    for gp in params:
        z = test_gate(gp, c)
        if z > 0.0 and gp.theta_bar * z != 0.0:
            count += 1
    return count


def draw_noise(rng: np.random.Generator, size: int) -> np.ndarray:
    return np.clip(rng.uniform(0.0, 1.0, size=size), NOISE_CLIP, 1.0 - NOISE_CLIP)

"""Dataset registry, embedded tables and synthetic data generators."""
from __future__ import annotations

import hashlib
import io
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd
from scipy.stats import qmc

from src import tables
from src.errors import SamplingError, UnknownDataset
from src.hyper import DeformationState, HyperelasticLaw, get_law
from src.plast import YieldLaw, get_yield_law, pi_to_principal, ray_radius

logger = logging.getLogger(__name__)

F_COLUMNS = ["F11", "F12", "F13", "F21", "F22", "F23", "F31", "F32", "F33"]
S_COLUMNS = ["S11", "S12", "S13", "S22", "S23", "S33"]
S_INDEX = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


class DatasetKind(str, Enum):
    COMPRESSIBLE = "compressible-FS"
    INVARIANTS = "compressible-invariants"
    MODE_CURVE = "mode-curve"
    YIELD_POINTS = "yield-points"
    HARDENING = "uniaxial-hardening"


SCHEMAS: dict[DatasetKind, list[str]] = {
    DatasetKind.COMPRESSIBLE: F_COLUMNS + S_COLUMNS,
    DatasetKind.INVARIANTS: ["I1", "I2", "J"],
    DatasetKind.MODE_CURVE: ["mode", "lambda_or_gamma", "P"],
    DatasetKind.YIELD_POINTS: ["pi1", "pi2"],
    DatasetKind.HARDENING: ["strain_percent", "stress_mpa"],
}


@dataclass
class Dataset:
    name: str
    kind: DatasetKind
    frame: pd.DataFrame
    units: dict[str, str] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frame)

    def to_csv(self) -> str:
        return self.frame.to_csv(index=False, float_format="%.17g")

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_csv().encode("utf-8")).hexdigest()


def _parse(text: str) -> pd.DataFrame:
    return pd.read_csv(io.StringIO(text))


_MODE_UNITS = {"lambda_or_gamma": "-", "P": "MPa"}

EMBEDDED: dict[str, tuple[str, DatasetKind, dict]] = {
    "compressible-invariants-50": (tables.COMPRESSIBLE_INVARIANTS_50, DatasetKind.INVARIANTS,
                                   {"I1": "-", "I2": "-", "J": "-"}),
    "treloar-20C": (tables.TRELOAR_20C, DatasetKind.MODE_CURVE, _MODE_UNITS),
    "treloar-50C": (tables.TRELOAR_50C, DatasetKind.MODE_CURVE, _MODE_UNITS),
    "cortex": (tables.CORTEX, DatasetKind.MODE_CURVE, _MODE_UNITS),
    "corona-radiata": (tables.CORONA_RADIATA, DatasetKind.MODE_CURVE, _MODE_UNITS),
    # Midbrain stresses are tabulated on a scale a thousand times larger than the other sets.
    "midbrain-1": (tables.MIDBRAIN_1, DatasetKind.MODE_CURVE, {"lambda_or_gamma": "-", "P": "MPa (as tabulated)"}),
    "midbrain-2": (tables.MIDBRAIN_2, DatasetKind.MODE_CURVE, {"lambda_or_gamma": "-", "P": "MPa (as tabulated)"}),
    "drucker": (tables.DRUCKER, DatasetKind.YIELD_POINTS, {"pi1": "MPa", "pi2": "MPa"}),
    "cazacu": (tables.CAZACU, DatasetKind.YIELD_POINTS, {"pi1": "MPa", "pi2": "MPa"}),
    "tresca": (tables.TRESCA, DatasetKind.YIELD_POINTS, {"pi1": "MPa", "pi2": "MPa"}),
    "40Cr3MoV": (tables.STEEL_40CR3MOV, DatasetKind.HARDENING, {"strain_percent": "%", "stress_mpa": "MPa"}),
    "SS316L": (tables.STEEL_SS316L, DatasetKind.HARDENING, {"strain_percent": "%", "stress_mpa": "MPa"}),
    "U71Mn": (tables.STEEL_U71MN, DatasetKind.HARDENING, {"strain_percent": "%", "stress_mpa": "MPa"}),
}


def embedded_names() -> list[str]:
    return list(EMBEDDED)


def load_embedded(name: str) -> Dataset:
    try:
        text, kind, units = EMBEDDED[name]
    except KeyError:
        raise UnknownDataset(f"Unknown dataset '{name}'", name=name) from None
    return Dataset(name=name, kind=kind, frame=_parse(text), units=dict(units), metadata={"source": "embedded"})


def frame_from_deformations(Fs, stresses) -> pd.DataFrame:
    rows = []
    for F, S in zip(Fs, stresses):
        F = np.asarray(F, dtype=float)
        S = np.asarray(S, dtype=float)
        rows.append(list(F.reshape(9)) + [S[i, j] for i, j in S_INDEX])
    return pd.DataFrame(rows, columns=F_COLUMNS + S_COLUMNS)


def deformations_from_frame(frame: pd.DataFrame) -> tuple[np.ndarray, np.ndarray]:
    Fs = frame[F_COLUMNS].to_numpy(dtype=float).reshape(-1, 3, 3)
    S = np.zeros((len(frame), 3, 3))
    for col, (i, j) in zip(S_COLUMNS, S_INDEX):
        S[:, i, j] = frame[col].to_numpy(dtype=float)
        S[:, j, i] = S[:, i, j]
    return Fs, S


def sample_deformation_box(delta: float, n: int, seed: int, max_rejection: float = 0.99) -> np.ndarray:
    """Quasi-random deformation gradients in the box F_ii in [1-d, 1+d], F_ij in [-d, d], det F > 0."""
    if not 0.0 <= delta < 0.5:
        raise ValueError(f"Box size must lie in [0, 0.5), got {delta}")
    if delta == 0.0:
        return np.repeat(np.eye(3)[None], n, axis=0)
    identity = np.eye(3).reshape(9)
    lower, upper = identity - delta, identity + delta
    sampler = qmc.Sobol(d=9, scramble=True, seed=seed)
    accepted, drawn = [], 0
    while len(accepted) < n:
        m = max(int(2 ** math.ceil(math.log2(max(n - len(accepted), 2)))), 16)
        batch = qmc.scale(sampler.random(m), lower, upper).reshape(-1, 3, 3)
        drawn += m
        accepted.extend(F for F in batch if np.linalg.det(F) > 0.0)
        rejected = 1.0 - len(accepted) / drawn
        if rejected > max_rejection:
            raise SamplingError(f"Rejection rate {rejected:.3f} exceeds {max_rejection}", rejection=rejected)
    logger.info("Sampled %d deformation gradients (delta=%.3f, rejection %.1f%%)", n, delta,
                100.0 * (1.0 - len(accepted) / drawn))
    return np.array(accepted[:n])


def generate_compressible(law: HyperelasticLaw | str, delta: float, n: int, seed: int) -> Dataset:
    """Deformation/stress pairs from a reference law, normalized to be stress-free at F = I."""
    if isinstance(law, str):
        law = get_law(law)
    Fs = sample_deformation_box(delta, n, seed)
    stresses = [law.stress(F, normalized=True) for F in Fs]
    frame = frame_from_deformations(Fs, stresses)
    units = {c: "-" for c in F_COLUMNS} | {c: "MPa" for c in S_COLUMNS}
    return Dataset(name=f"{law.name}-delta{delta:g}-n{n}-seed{seed}", kind=DatasetKind.COMPRESSIBLE,
                   frame=frame, units=units,
                   metadata={"source": "generated", "law": law.name, "delta": delta, "seed": seed})


def invariant_ranges(dataset: Dataset) -> dict[str, tuple[float, float]]:
    if dataset.kind is DatasetKind.INVARIANTS:
        inv = dataset.frame[["I1", "I2", "J"]].to_numpy(dtype=float)
    else:
        Fs, _ = deformations_from_frame(dataset.frame)
        inv = np.array([[s.I1, s.I2, s.J] for s in map(DeformationState.from_F, Fs)])
    return {name: (float(inv[:, k].min()), float(inv[:, k].max())) for k, name in enumerate(["I1", "I2", "J"])}


def yield_angles(n: int) -> np.ndarray:
    """Uniform ray angles starting on the negative pi1 axis; the last ray closes the loop."""
    return math.pi + 2.0 * math.pi * np.arange(n) / (n - 1)


def yield_points_from_law(law: YieldLaw | str, n: int) -> Dataset:
    if n < 3:
        raise ValueError("At least three rays are needed")
    if isinstance(law, str):
        law = get_yield_law(law)

    def f(p1, p2):
        return float(law.value_pi(p1, p2)[0])

    rows = []
    for angle in yield_angles(n):
        r = ray_radius(f, angle)
        rows.append((r * math.cos(angle), r * math.sin(angle)))
    frame = pd.DataFrame(rows, columns=["pi1", "pi2"])
    principal = pi_to_principal(frame["pi1"].to_numpy(), frame["pi2"].to_numpy())
    return Dataset(name=f"{law.name}-rays-{n}", kind=DatasetKind.YIELD_POINTS, frame=frame,
                   units={"pi1": "MPa", "pi2": "MPa"},
                   metadata={"source": "generated", "law": law.name,
                             "principal": principal.tolist()})

from __future__ import annotations

from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator


class NetKind(str, Enum):
    ICNN = "icnn"
    MLP = "mlp"
    MONOTONE = "monotone"


class TrainConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    lam: float = Field(default=1e-3, alias="lambda", ge=0.0)
    epochs: int = Field(default=20000, ge=1)
    lr: float = Field(default=1e-3, gt=0.0)
    seeds: list[int] = Field(default_factory=lambda: [0])
    mc_samples: int = Field(default=1, ge=1)
    split: float = Field(default=0.8, gt=0.0, lt=1.0)
    hidden: list[int] = Field(default_factory=lambda: [30])
    net: Optional[NetKind] = None
    gating: bool = True
    log_every: int = Field(default=100, ge=1)

    @field_validator("seeds")
    @classmethod
    def _seeds_nonempty(cls, v: list[int]) -> list[int]:
        if not v:
            raise ValueError("At least one seed is required")
        return v

    @field_validator("hidden")
    @classmethod
    def _hidden_positive(cls, v: list[int]) -> list[int]:
        if not v or any(w < 1 for w in v):
            raise ValueError("Hidden widths must be positive")
        return v

    @property
    def architecture(self) -> str:
        """Layers x width label, e.g. '1x30'; mixed widths are joined with '-'."""
        if len(set(self.hidden)) == 1:
            return f"{len(self.hidden)}x{self.hidden[0]}"
        return "-".join(str(w) for w in self.hidden)


class LogEntry(BaseModel):
    epoch: int
    train_loss: float
    val_loss: float
    active_params: int
    penalty_term: float


class RunRecord(BaseModel):
    seed: int
    final_train_loss: float
    final_val_loss: float
    final_active_params: int
    history: list[LogEntry] = []
    elapsed_seconds: float = 0.0

    @computed_field
    @property
    def epochs_logged(self) -> int:
        return len(self.history)


class Metrics(BaseModel):
    train_loss: float
    val_loss: float
    test_loss: Optional[float] = None
    active_params: int
    total_params: int
    r2: dict[str, float] = {}
    extra: dict[str, float] = {}

    @computed_field
    @property
    def sparsity(self) -> float:
        return 1.0 - self.active_params / max(self.total_params, 1)


class DatasetRef(BaseModel):
    name: str
    kind: str
    source: str
    fingerprint: str
    rows: int


class Checkpoint(BaseModel):
    version: str
    problem: str
    problem_params: dict
    dataset: DatasetRef
    config: dict
    network: dict
    seed: int


class RunManifest(BaseModel):
    id: str
    command: str
    created_at: str
    version: str
    problem: str
    config: dict
    dataset: DatasetRef
    seeds: list[int]
    selected_seed: Optional[int] = None
    outputs: dict[str, str] = {}

from enum import Enum
from typing import Any, Dict, List, Optional, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.models.network import BaseKind


class RegularizationWeights(BaseModel):
    """Inner weights of the four edge penalties"""
    model_config = ConfigDict(frozen=True)

    l1: float = Field(default=1.0, ge=0.0)
    entropy: float = Field(default=2.0, ge=0.0)
    coefficient: float = Field(default=0.1, ge=0.0)
    smoothness: float = Field(default=0.1, ge=0.0)


class TrainConfig(BaseModel):
    model_config = ConfigDict(use_enum_values=False, extra="forbid", validate_assignment=True)

    hidden_width: int = Field(default=0, ge=0, le=3)
    grid_intervals: int = Field(default=5, ge=1)
    base_kind: BaseKind = BaseKind.SILU
    lambda_reg: float = Field(default=0.01, ge=0.0)
    regularization: RegularizationWeights = Field(default_factory=RegularizationWeights)
    learning_rate: float = Field(default=0.01, gt=0.0)
    weight_decay: float = Field(default=1e-5, ge=0.0, lt=1.0)
    epochs: int = Field(default=500, ge=0)
    batch_size: Optional[int] = Field(default=None, ge=1)
    early_stop_fraction: float = Field(default=0.15, gt=0.0, lt=1.0)
    patience: int = Field(default=20, ge=1)
    integration_k: int = Field(default=50, ge=2)
    seed: int = 0

    @property
    def full_batch(self) -> bool:
        return self.batch_size is None


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    train_nll: float
    val_nll: float


class RegularizationBreakdown(BaseModel):
    """Weighted per-term penalty values and their sum"""
    l1: float = 0.0
    entropy: float = 0.0
    coefficient: float = 0.0
    smoothness: float = 0.0

    @property
    def total(self) -> float:
        return self.l1 + self.entropy + self.coefficient + self.smoothness

    def as_tuple(self):
        return (self.l1, self.entropy, self.coefficient, self.smoothness)


class TrainReport(BaseModel):
    history: List[EpochRecord] = Field(default_factory=list)
    stopping_epoch: int = 0
    best_epoch: int = 0
    final_regularization: RegularizationBreakdown = Field(default_factory=RegularizationBreakdown)
    duration_seconds: float = 0.0
    training_rows: int = 0
    validation_rows: int = 0
    split_digest: str = ""

    @model_validator(mode="after")
    def check_history(self):
        for record in self.history:
            values = (record.train_loss, record.train_nll, record.val_nll)
            if any(v != v or v in (float("inf"), float("-inf")) for v in values):
                raise ValueError(f"non-finite loss recorded at epoch {record.epoch}")
        return self

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.epoch, r.train_loss, r.val_nll) for r in self.history],
            columns=["epoch", "train_loss", "val_nll"],
        )


class SearchObjective(str, Enum):
    NLL = "nll"
    C_INDEX = "c_index"
    IBS = "ibs"


class ParameterRange(BaseModel):
    """
    One searchable dimension: either an explicit list of choices or a
    numeric interval sampled uniformly (optionally on a log scale).
    """
    choices: Optional[List[Any]] = None
    low: Optional[float] = None
    high: Optional[float] = None
    log: bool = False
    integer: bool = False

    @model_validator(mode="after")
    def check_range(self):
        if self.choices is not None:
            if len(self.choices) == 0:
                raise ValueError("choices must not be empty")
            if self.low is not None or self.high is not None:
                raise ValueError("use either choices or low/high, not both")
            return self
        if self.low is None or self.high is None:
            raise ValueError("a range needs both low and high")
        if self.low > self.high:
            raise ValueError(f"low {self.low} exceeds high {self.high}")
        if self.log and self.low <= 0:
            raise ValueError("log-scaled ranges need a positive lower bound")
        if self.integer and (int(self.low) != self.low or int(self.high) != self.high):
            raise ValueError("integer ranges need integral bounds")
        return self


class SearchSpace(BaseModel):
    """Searchable TrainConfig fields mapped to their ranges"""
    parameters: Dict[str, ParameterRange]
    objective: SearchObjective = SearchObjective.NLL

    @field_validator("parameters")
    @classmethod
    def validate_names(cls, v):
        if not v:
            raise ValueError("the search space declares no parameters")
        known = set(TrainConfig.model_fields) | {f"regularization.{k}" for k in RegularizationWeights.model_fields}
        unknown = sorted(set(v) - known)
        if unknown:
            raise ValueError(f"unknown search parameters: {', '.join(unknown)}")
        return v


def apply_overrides(config: TrainConfig, overrides: Dict[str, Union[int, float, str, None]]) -> TrainConfig:
    """Return a validated copy of config with (possibly dotted) field overrides applied"""
    data = config.model_dump()
    for name, value in overrides.items():
        if name.startswith("regularization."):
            data["regularization"][name.split(".", 1)[1]] = value
        else:
            data[name] = value
    return TrainConfig.model_validate(data)

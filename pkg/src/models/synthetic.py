from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class DistributionKind(str, Enum):
    NORMAL = "normal"
    UNIFORM = "uniform"


class FeatureDistribution(BaseModel):
    """Sampling law of one synthetic covariate"""
    kind: DistributionKind = DistributionKind.NORMAL
    mean: float = 0.0
    std: float = Field(default=1.0, gt=0.0)
    low: float = 0.0
    high: float = 1.0

    @model_validator(mode="after")
    def check_bounds(self):
        if self.kind == DistributionKind.UNIFORM and not self.low < self.high:
            raise ValueError(f"uniform feature needs low < high, got [{self.low}, {self.high}]")
        return self


class SqrtTerm(BaseModel):
    """weight * sqrt(scale * x[feature] + shift)"""
    feature: int = Field(ge=0)
    weight: float
    scale: float = 1.0
    shift: float = 0.0


class SinTerm(BaseModel):
    """weight * sin(frequency * x[feature] + phase)"""
    feature: int = Field(ge=0)
    weight: float
    frequency: float = 1.0
    phase: float = 0.0


class SyntheticSpec(BaseModel):
    """
    Recipe for a synthetic right-censored dataset with a known hazard

        log h(t | x) = intercept + linear . x + sqrt terms + sin terms
                       + time_coefficient * t / time_scale + log_time_coefficient * log t

    At most one of the two time terms may be nonzero, which keeps the
    cumulative hazard in closed form (Gompertz-type or Weibull-type).
    """
    model_config = ConfigDict(extra="forbid")

    n: int = Field(ge=1)
    features: List[FeatureDistribution] = Field(default_factory=list)
    feature_names: Optional[List[str]] = None
    intercept: float = 0.0
    linear: List[float] = Field(default_factory=list)
    sqrt_terms: List[SqrtTerm] = Field(default_factory=list)
    sin_terms: List[SinTerm] = Field(default_factory=list)
    time_coefficient: float = 0.0
    log_time_coefficient: float = Field(default=0.0, gt=-1.0)
    time_scale: float = Field(default=1.0, gt=0.0)
    censoring_target: float = Field(default=0.0, ge=0.0, lt=1.0)
    seed: int = 0

    @field_validator("feature_names")
    @classmethod
    def validate_names(cls, v):
        if v is not None and len(set(v)) != len(v):
            raise ValueError("feature names must be unique")
        return v

    @model_validator(mode="after")
    def check_terms(self):
        d = len(self.features)
        if self.linear and len(self.linear) != d:
            raise ValueError(f"linear coefficients ({len(self.linear)}) must match feature count ({d})")
        if self.feature_names is not None and len(self.feature_names) != d:
            raise ValueError("feature_names must match feature count")
        for term in list(self.sqrt_terms) + list(self.sin_terms):
            if term.feature >= d:
                raise ValueError(f"term references feature {term.feature} but only {d} features exist")
        if self.time_coefficient != 0.0 and self.log_time_coefficient != 0.0:
            raise ValueError("time_coefficient and log_time_coefficient cannot both be nonzero")
        return self

    @property
    def names(self) -> List[str]:
        if self.feature_names is not None:
            return list(self.feature_names)
        return [f"x{i + 1}" for i in range(len(self.features))]

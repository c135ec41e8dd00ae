from typing import Dict, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.models.arrays import FloatArray
from src.utils.errors import InvalidInputError

LOG_HAZARD_BOUND = 20.0


class SurvivalCurve(BaseModel):
    """Survival probabilities of one subject on a strictly increasing time grid"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    times: FloatArray
    survival: FloatArray
    extrapolated: bool = False

    @model_validator(mode="after")
    def check_curve(self):
        if self.times.ndim != 1 or self.times.shape != self.survival.shape or self.times.size == 0:
            raise ValueError("times and survival must be non-empty 1-D arrays of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("curve times must be strictly increasing")
        if np.any(self.survival < 0.0) or np.any(self.survival > 1.0):
            raise ValueError("survival values must lie in [0, 1]")
        if np.any(np.diff(self.survival) > 1e-12):
            raise ValueError("survival must be non-increasing")
        return self

    def at(self, time: float) -> float:
        if time < self.times[0] or time > self.times[-1]:
            raise InvalidInputError(
                f"time {time} outside the curve grid [{self.times[0]}, {self.times[-1]}]", module="hazard_model"
            )
        return float(np.interp(time, self.times, self.survival))


class HazardEvaluation(BaseModel):
    model_config = ConfigDict(frozen=True)

    log_hazard: float = Field(ge=-LOG_HAZARD_BOUND, le=LOG_HAZARD_BOUND)
    hazard: float = Field(gt=0.0)
    cumulative_hazard: float = Field(ge=0.0)


class StepFunction(BaseModel):
    """
    Right-continuous step function: initial_value before the first jump,
    values[k] on [jump_times[k], jump_times[k+1]).
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    jump_times: FloatArray
    values: FloatArray
    initial_value: float = 1.0

    @model_validator(mode="after")
    def check_steps(self):
        if self.jump_times.ndim != 1 or self.jump_times.shape != self.values.shape:
            raise ValueError("jump_times and values must be 1-D arrays of equal length")
        if np.any(np.diff(self.jump_times) <= 0):
            raise ValueError("jump times must be strictly increasing")
        return self

    def __call__(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        t_arr = np.asarray(t, dtype=float)
        positions = np.searchsorted(self.jump_times, t_arr, side="right")
        padded = np.concatenate([[self.initial_value], self.values])
        result = padded[positions]
        return float(result) if np.ndim(t) == 0 else result

    def left_limit(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        t_arr = np.asarray(t, dtype=float)
        positions = np.searchsorted(self.jump_times, t_arr, side="left")
        padded = np.concatenate([[self.initial_value], self.values])
        result = padded[positions]
        return float(result) if np.ndim(t) == 0 else result


class EvaluationReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    c_index: float = Field(ge=0.0, le=1.0)
    ibs: float = Field(ge=0.0)
    ibs_grid: FloatArray
    comparable_pairs: int = Field(ge=0)

    @field_validator("ibs_grid")
    @classmethod
    def validate_grid(cls, v):
        if v.ndim != 1:
            raise ValueError("ibs_grid must be 1-D")
        return v

    def display_values(self) -> Dict[str, Union[float, int]]:
        """Metrics scaled by 100, the convention used for published result tables"""
        return {
            "c_index_x100": 100.0 * self.c_index,
            "ibs_x100": 100.0 * self.ibs,
            "comparable_pairs": self.comparable_pairs,
            "ibs_grid_start": float(self.ibs_grid[0]),
            "ibs_grid_end": float(self.ibs_grid[-1]),
            "ibs_grid_points": int(self.ibs_grid.size),
        }

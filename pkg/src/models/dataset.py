from enum import Enum
from typing import List, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, model_validator

from src.models.arrays import FloatArray, IntArray


class ColumnKind(str, Enum):
    NUMERIC = "numeric"
    ONE_HOT_LEVEL = "one_hot_level"


class SurvivalDataset(BaseModel):
    """
    Right-censored survival data: one row per subject with covariates,
    observed time and event indicator (1 = event, 0 = censored).
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    features: FloatArray
    times: FloatArray
    events: IntArray
    column_names: List[str]
    column_kinds: List[ColumnKind]

    @model_validator(mode="after")
    def check_consistency(self):
        features = self.features
        if features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        n, d = features.shape
        if self.times.shape != (n,) or self.events.shape != (n,):
            raise ValueError(f"times/events must have {n} entries to match the feature rows")
        if len(self.column_names) != d or len(self.column_kinds) != d:
            raise ValueError(f"expected {d} column names and kinds")
        if len(set(self.column_names)) != d:
            raise ValueError("column names must be unique")
        if not np.all(np.isfinite(features)):
            raise ValueError("features must be finite")
        if not np.all(np.isfinite(self.times)) or np.any(self.times < 0):
            raise ValueError("times must be finite and non-negative")
        if np.any((self.events != 0) & (self.events != 1)):
            raise ValueError("event indicators must be 0 or 1")
        return self

    @property
    def n_rows(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def n_events(self) -> int:
        return int(self.events.sum())

    @property
    def event_rate(self) -> float:
        return float(self.events.mean()) if self.n_rows else 0.0

    def subset(self, indices: Sequence[int]) -> "SurvivalDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return SurvivalDataset(
            features=self.features[indices],
            times=self.times[indices],
            events=self.events[indices],
            column_names=list(self.column_names),
            column_kinds=list(self.column_kinds),
        )

    def select_columns(self, names: Sequence[str]) -> "SurvivalDataset":
        """Same subjects with feature columns reordered/restricted to `names`"""
        positions = {name: i for i, name in enumerate(self.column_names)}
        absent = [name for name in names if name not in positions]
        if absent:
            raise KeyError(f"dataset lacks feature column(s): {', '.join(absent)}")
        order = [positions[name] for name in names]
        return SurvivalDataset(
            features=self.features[:, order].reshape(self.n_rows, len(order)),
            times=self.times,
            events=self.events,
            column_names=list(names),
            column_kinds=[self.column_kinds[i] for i in order],
        )

    def to_frame(self, time_column: str = "time", event_column: str = "event") -> pd.DataFrame:
        frame = pd.DataFrame(self.features, columns=self.column_names)
        frame[time_column] = self.times
        frame[event_column] = self.events
        return frame

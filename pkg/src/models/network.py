from enum import Enum
from typing import List

from pydantic import BaseModel, ConfigDict, Field, model_validator

NETWORK_FORMAT_VERSION = 1


class BaseKind(str, Enum):
    IDENTITY = "identity"
    SILU = "silu"


class GridDocument(BaseModel):
    lower: float
    upper: float
    intervals: int = Field(ge=1)
    degree: int = 2


class LayerDocument(BaseModel):
    grids: List[GridDocument]
    coefficients: List[List[List[float]]]
    base_weight: List[List[float]]
    spline_weight: List[List[float]]
    mask: List[List[bool]]


class NormalizerDocument(BaseModel):
    feature_names: List[str]
    means: List[float]
    stds: List[float]
    time_scale: float = Field(gt=0.0)


class NetworkDocument(BaseModel):
    """Text document holding every parameter of a trained log-hazard network"""
    model_config = ConfigDict(use_enum_values=True)

    format_version: int = NETWORK_FORMAT_VERSION
    metadata: str = ""
    widths: List[int]
    base_kind: BaseKind
    normalizer: NormalizerDocument
    layers: List[LayerDocument]

    @model_validator(mode="after")
    def check_widths(self):
        if self.format_version != NETWORK_FORMAT_VERSION:
            raise ValueError(f"unsupported format version {self.format_version}")
        if len(self.widths) != len(self.layers) + 1:
            raise ValueError("widths must have one more entry than layers")
        if self.widths[0] != len(self.normalizer.feature_names) + 1:
            raise ValueError("input width must equal feature count + 1")
        return self

from enum import Enum
from typing import Callable, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

SQRT_FLOOR = 0.0
LOG_FLOOR = 1e-300


class FunctionKind(str, Enum):
    """Closed-form templates a learned edge can be replaced with"""
    LINEAR = "linear"
    QUADRATIC = "quadratic"
    SQRT = "sqrt"
    EXP = "exp"
    LOG = "log"
    SIN = "sin"
    TANH = "tanh"
    ABS = "abs"
    RECIPROCAL = "reciprocal"

    @property
    def requires_positive_argument(self) -> bool:
        return self in (FunctionKind.SQRT, FunctionKind.LOG)


def _reciprocal(u: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 1.0 / u


FUNCTION_LIBRARY: Dict[FunctionKind, Callable[[np.ndarray], np.ndarray]] = {
    FunctionKind.LINEAR: lambda u: u,
    FunctionKind.QUADRATIC: np.square,
    FunctionKind.SQRT: lambda u: np.sqrt(np.maximum(u, SQRT_FLOOR)),
    FunctionKind.EXP: np.exp,
    FunctionKind.LOG: lambda u: np.log(np.maximum(u, LOG_FLOOR)),
    FunctionKind.SIN: np.sin,
    FunctionKind.TANH: np.tanh,
    FunctionKind.ABS: np.abs,
    FunctionKind.RECIPROCAL: _reciprocal,
}

_RENDER_NAMES = {
    FunctionKind.SQRT: "sqrt",
    FunctionKind.EXP: "exp",
    FunctionKind.LOG: "log",
    FunctionKind.SIN: "sin",
    FunctionKind.TANH: "tanh",
    FunctionKind.ABS: "abs",
}


def _fmt(value: float) -> str:
    return f"{value:.2f}"


class SymbolicTerm(BaseModel):
    """One fitted template c * f(a * x + b) + d over a single input"""
    model_config = ConfigDict(frozen=True)

    function_kind: FunctionKind
    inner_scale: float
    inner_shift: float
    outer_scale: float
    outer_shift: float
    input_name: str
    input_index: Optional[int] = None
    r_squared: float = Field(le=1.0 + 1e-12)

    @field_validator("inner_scale", "inner_shift", "outer_scale", "outer_shift")
    @classmethod
    def validate_finite(cls, v):
        if not np.isfinite(v):
            raise ValueError("symbolic term parameters must be finite")
        return v

    def evaluate(self, x) -> np.ndarray:
        u = self.inner_scale * np.asarray(x, dtype=float) + self.inner_shift
        return self.outer_scale * FUNCTION_LIBRARY[self.function_kind](u) + self.outer_shift

    def render(self) -> str:
        """Render c * f(a * x + b) without the outer shift"""
        name = f"({self.input_name})"
        if self.function_kind == FunctionKind.LINEAR:
            return f"{_fmt(self.outer_scale * self.inner_scale)} {name}"
        inner = f"{_fmt(self.inner_scale)}*{name} {'-' if self.inner_shift < 0 else '+'} {_fmt(abs(self.inner_shift))}"
        if self.function_kind == FunctionKind.QUADRATIC:
            return f"{_fmt(self.outer_scale)} ({inner})^2"
        if self.function_kind == FunctionKind.RECIPROCAL:
            return f"{_fmt(self.outer_scale)} / ({inner})"
        return f"{_fmt(self.outer_scale)} {_RENDER_NAMES[self.function_kind]}({inner})"


class EdgeAttribution(BaseModel):
    model_config = ConfigDict(frozen=True)

    layer: int = Field(ge=0)
    output_index: int = Field(ge=0)
    input_index: int = Field(ge=0)
    score: float = Field(ge=0.0)

    @field_validator("score")
    @classmethod
    def validate_score(cls, v):
        if not np.isfinite(v):
            raise ValueError("attribution score must be finite")
        return v


class SymbolicModel(BaseModel):
    """
    Additive closed-form log-hazard: constant plus one term per surviving
    input edge, stated in raw feature and time units.
    """
    terms: List[SymbolicTerm]
    constant: float
    fidelity: float
    feature_names: List[str]
    time_name: str = "Time"

    def evaluate(self, features, times) -> np.ndarray:
        """Log-hazard of the formula for raw feature rows and raw times"""
        features = np.atleast_2d(np.asarray(features, dtype=float))
        times = np.asarray(times, dtype=float).reshape(-1)
        if features.shape[0] != times.shape[0]:
            raise ValueError("features and times must have the same number of rows")
        columns = np.column_stack([features, times])
        total = np.full(times.shape[0], self.constant, dtype=float)
        for term in self.terms:
            total = total + term.evaluate(columns[:, term.input_index])
        return total

    def render(self) -> str:
        parts = [term.render() for term in self.terms]
        expression = "log(h(x | t)) = "
        if not parts:
            return expression + _fmt(self.constant)
        text = parts[0]
        for part in parts[1:]:
            text += f" - {part[1:]}" if part.startswith("-") else f" + {part}"
        sign = "-" if self.constant < 0 else "+"
        return expression + f"{text} {sign} {_fmt(abs(self.constant))}"

    def kinds(self) -> List[FunctionKind]:
        return [term.function_kind for term in self.terms]

from .dataset import ColumnKind, SurvivalDataset
from .evaluation import EvaluationReport, HazardEvaluation, StepFunction, SurvivalCurve
from .network import BaseKind, NetworkDocument
from .symbolic import EdgeAttribution, FunctionKind, SymbolicModel, SymbolicTerm
from .synthetic import FeatureDistribution, SyntheticSpec
from .training import (
    RegularizationWeights,
    SearchObjective,
    SearchSpace,
    TrainConfig,
    TrainReport,
)

__all__ = [
    "BaseKind",
    "ColumnKind",
    "EdgeAttribution",
    "EvaluationReport",
    "FeatureDistribution",
    "FunctionKind",
    "HazardEvaluation",
    "NetworkDocument",
    "RegularizationWeights",
    "SearchObjective",
    "SearchSpace",
    "StepFunction",
    "SurvivalCurve",
    "SurvivalDataset",
    "SymbolicModel",
    "SymbolicTerm",
    "SyntheticSpec",
    "TrainConfig",
    "TrainReport",
]

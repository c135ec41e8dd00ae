"""
Survival model evaluation: Kaplan-Meier, Harrell's C-index and the
inverse-probability-of-censoring weighted (integrated) Brier score.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.models.dataset import SurvivalDataset
from src.models.evaluation import EvaluationReport, StepFunction, SurvivalCurve
from src.models.training import TrainConfig
from src.services.hazard_model import cumulative_hazard_batch, survival_curves
from src.services.kan_core import KanNetwork
from src.utils.errors import DegenerateWeightsError, DimensionError, InvalidInputError, UndefinedMetricError

logger = logging.getLogger(__name__)

IBS_GRID_POINTS = 100
IBS_PERCENTILES = (1.0, 99.0)


def kaplan_meier(times, events) -> StepFunction:
    """
    Product-limit estimate of the survival function.

    Tied times are handled together: at each distinct time t the estimate is
    multiplied by 1 - d(t) / n(t) with d the events at t and n the subjects
    still at risk just before t.
    """
    times = np.asarray(times, dtype=float).reshape(-1)
    events = np.asarray(events).reshape(-1)
    if times.size == 0:
        raise InvalidInputError("Kaplan-Meier needs at least one subject", module="metrics")
    if times.shape != events.shape:
        raise DimensionError("times and events differ in length", module="metrics")
    if np.any(times < 0):
        raise InvalidInputError("times must be non-negative", module="metrics")
    unique_times, inverse = np.unique(times, return_inverse=True)
    deaths = np.bincount(inverse, weights=(events == 1).astype(float), minlength=unique_times.size)
    leaving = np.bincount(inverse, minlength=unique_times.size).astype(float)
    at_risk = times.size - np.concatenate([[0.0], np.cumsum(leaving)[:-1]])
    jumps = deaths > 0
    factors = (at_risk[jumps] - deaths[jumps]) / at_risk[jumps]
    return StepFunction(jump_times=unique_times[jumps], values=np.cumprod(factors), initial_value=1.0)


def censoring_distribution(times, events) -> StepFunction:
    """Kaplan-Meier of the censoring times (event indicator inverted)"""
    events = np.asarray(events)
    return kaplan_meier(times, 1 - events)


def concordance_index(risk_scores, times, events) -> Tuple[float, int]:
    """
    Harrell's C over pairs (i, j) with t_i < t_j and subject i an event.

    Higher risk should go with the earlier event; tied risks count one half.

    Returns:
        (concordance, number of comparable pairs)
    """
    risk = np.asarray(risk_scores, dtype=float).reshape(-1)
    times = np.asarray(times, dtype=float).reshape(-1)
    events = np.asarray(events).reshape(-1)
    if not (risk.shape == times.shape == events.shape):
        raise DimensionError("risk scores, times and events differ in length", module="metrics")
    if risk.size < 2:
        raise UndefinedMetricError("C-index needs at least two subjects", module="metrics")
    comparable = (times[:, None] < times[None, :]) & (events[:, None] == 1)
    pairs = int(comparable.sum())
    if pairs == 0:
        raise UndefinedMetricError("no comparable pairs", module="metrics")
    concordant = np.sum(comparable & (risk[:, None] > risk[None, :]))
    tied = np.sum(comparable & (risk[:, None] == risk[None, :]))
    return float((concordant + 0.5 * tied) / pairs), pairs


def _survival_at(curves: Sequence[SurvivalCurve], eval_time: float) -> np.ndarray:
    return np.array([curve.at(eval_time) for curve in curves])


def brier_score(curves: Sequence[SurvivalCurve], times, events, eval_time: float, censor_G: StepFunction) -> float:
    """IPCW Brier score at one evaluation time"""
    times = np.asarray(times, dtype=float).reshape(-1)
    events = np.asarray(events).reshape(-1)
    if len(curves) != times.size or times.size != events.size:
        raise DimensionError("curves, times and events differ in length", module="metrics")
    if times.size == 0:
        raise InvalidInputError("Brier score needs at least one subject", module="metrics")
    survival = _survival_at(curves, eval_time)
    had_event = (times <= eval_time) & (events == 1)
    survived = times > eval_time

    total = np.zeros(times.size)
    if had_event.any():
        weights = np.asarray(censor_G.left_limit(times[had_event]), dtype=float)
        if np.any(weights <= 0):
            raise DegenerateWeightsError(
                f"censoring survival is 0 before an event at or before t={eval_time}", module="metrics"
            )
        total[had_event] = survival[had_event] ** 2 / weights
    if survived.any():
        weight = float(censor_G(eval_time))
        if weight <= 0:
            raise DegenerateWeightsError(f"censoring survival is 0 at t={eval_time}", module="metrics")
        total[survived] = (1.0 - survival[survived]) ** 2 / weight
    return float(np.mean(total))


def integrated_brier_score(curves: Sequence[SurvivalCurve], times, events, grid, censor_G: StepFunction) -> float:
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size < 2:
        raise InvalidInputError("IBS grid needs at least two points", module="metrics")
    if np.any(np.diff(grid) <= 0):
        raise InvalidInputError("IBS grid must be strictly increasing", module="metrics")
    scores = np.array([brier_score(curves, times, events, t, censor_G) for t in grid])
    return float(np.trapezoid(scores, grid) / (grid[-1] - grid[0]))


def ibs_grid(test_times, n_points: int = IBS_GRID_POINTS) -> np.ndarray:
    low, high = np.percentile(np.asarray(test_times, dtype=float), IBS_PERCENTILES)
    if not high > low:
        raise UndefinedMetricError("test follow-up times do not span an interval", module="metrics")
    return np.linspace(low, high, n_points)


def risk_scores(net: KanNetwork, features, k: int) -> np.ndarray:
    """H(t_max | x) with t_max the network's training time scale"""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    horizon = np.full(features.shape[0], net.normalizer.time_scale)
    return cumulative_hazard_batch(net, features, horizon, k)


def evaluate(net: KanNetwork, test: SurvivalDataset, train_for_censoring: SurvivalDataset,
             config: Optional[TrainConfig] = None) -> EvaluationReport:
    """
    C-index and IBS of a network on a test set.

    Args:
        net: Trained network
        test: Held-out data
        train_for_censoring: Data whose censoring distribution supplies the IPCW weights
        config: Training configuration (integration points)

    Returns:
        EvaluationReport
    """
    if test.n_rows == 0 or train_for_censoring.n_rows == 0:
        raise InvalidInputError("evaluation needs non-empty test and training data", module="metrics")
    config = config or TrainConfig()
    scores = risk_scores(net, test.features, config.integration_k)
    c_index, pairs = concordance_index(scores, test.times, test.events)
    grid = ibs_grid(test.times)
    curves = survival_curves(net, test.features, grid, config.integration_k)
    censoring = censoring_distribution(train_for_censoring.times, train_for_censoring.events)
    ibs = integrated_brier_score(curves, test.times, test.events, grid, censoring)
    logger.info(f"Evaluated {test.n_rows} subjects: C-index {c_index:.4f} over {pairs} pairs, IBS {ibs:.4f}")
    return EvaluationReport(c_index=c_index, ibs=ibs, ibs_grid=grid, comparable_pairs=pairs)


def kaplan_meier_curves(train: SurvivalDataset, n_subjects: int, grid) -> List[SurvivalCurve]:
    """The population Kaplan-Meier curve repeated per subject, as a covariate-blind baseline"""
    estimate = kaplan_meier(train.times, train.events)
    grid = np.asarray(grid, dtype=float)
    curve = SurvivalCurve(times=grid, survival=np.asarray(estimate(grid), dtype=float))
    return [curve] * n_subjects

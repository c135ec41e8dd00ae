"""
Hazard quantities derived from the network's log-hazard output.

h(t | x) = exp(clamp(KAN([x, t]))), H(t | x) is the trapezoidal integral of
h over [0, t] and S(t | x) = exp(-H(t | x)).
"""

import logging
from typing import Callable, List, Optional, Tuple

import numpy as np

from src.config.settings import settings
from src.models.dataset import SurvivalDataset
from src.models.evaluation import LOG_HAZARD_BOUND, HazardEvaluation, SurvivalCurve
from src.services.kan_core import (
    KanNetwork,
    LossGraph,
    encode_inputs,
    forward_batch,
    forward_encoded,
    record_forward,
)
from src.utils.errors import DimensionError, InvalidInputError

logger = logging.getLogger(__name__)

DEFAULT_INTEGRATION_POINTS = 50


def clamp_log_hazard(values: np.ndarray) -> np.ndarray:
    return np.clip(values, -LOG_HAZARD_BOUND, LOG_HAZARD_BOUND)


def clamp_gradient_mask(values: np.ndarray) -> np.ndarray:
    """1 where the clamp passes the output through, 0 where it saturates"""
    return ((values > -LOG_HAZARD_BOUND) & (values < LOG_HAZARD_BOUND)).astype(float)


def _check_k(k: int):
    if k < 2:
        raise InvalidInputError(f"integration needs at least 2 points, got {k}", module="hazard_model")


def integration_nodes(times: np.ndarray, k: int) -> np.ndarray:
    """Uniform nodes on [0, t] per row, shape (N, k); the last node equals t exactly"""
    _check_k(k)
    return np.asarray(times, dtype=float)[:, None] * np.linspace(0.0, 1.0, k)[None, :]


def trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    widths = np.diff(nodes, axis=1)
    weights = np.zeros_like(nodes)
    weights[:, :-1] += 0.5 * widths
    weights[:, 1:] += 0.5 * widths
    return weights


def integrate_hazard(hazard: Callable[[np.ndarray], np.ndarray], time: float, k: int) -> float:
    """Trapezoidal integral of an arbitrary hazard function over k uniform points on [0, time]"""
    _check_k(k)
    if time < 0:
        raise InvalidInputError("time must be non-negative", module="hazard_model")
    if time == 0:
        return 0.0
    nodes = time * np.linspace(0.0, 1.0, k)
    return float(np.trapezoid(hazard(nodes), nodes))


def log_hazard(net: KanNetwork, features, time: float) -> float:
    if time < 0:
        raise InvalidInputError("time must be non-negative", module="hazard_model")
    return float(clamp_log_hazard(forward_batch(net, np.atleast_2d(features), [time]))[0])


def log_hazard_batch(net: KanNetwork, feature_rows, times) -> np.ndarray:
    return clamp_log_hazard(forward_batch(net, feature_rows, times))


def cumulative_hazard_batch(net: KanNetwork, feature_rows, times, k: int = DEFAULT_INTEGRATION_POINTS) -> np.ndarray:
    """H(t_i | x_i) for every row, evaluated in row chunks"""
    _check_k(k)
    times = np.asarray(times, dtype=float).reshape(-1)
    feature_rows = np.asarray(feature_rows, dtype=float)
    if feature_rows.shape[0] != times.shape[0]:
        raise DimensionError("feature rows and times differ in length", module="hazard_model")
    if np.any(times < 0):
        raise InvalidInputError("times must be non-negative", module="hazard_model")
    result = np.zeros(times.shape[0])
    chunk = max(1, settings.evaluation_chunk_rows // k)
    for start in range(0, times.shape[0], chunk):
        stop = min(start + chunk, times.shape[0])
        nodes = integration_nodes(times[start:stop], k)
        rows = np.repeat(feature_rows[start:stop], k, axis=0)
        hazard = np.exp(log_hazard_batch(net, rows, nodes.reshape(-1))).reshape(nodes.shape)
        result[start:stop] = np.trapezoid(hazard, nodes, axis=1)
    return result


def cumulative_hazard(net: KanNetwork, features, time: float, k: int = DEFAULT_INTEGRATION_POINTS) -> float:
    _check_k(k)
    if time < 0:
        raise InvalidInputError("time must be non-negative", module="hazard_model")
    if time == 0:
        return 0.0
    return float(cumulative_hazard_batch(net, np.atleast_2d(features), [time], k)[0])


def hazard_evaluation(net: KanNetwork, features, time: float, k: int = DEFAULT_INTEGRATION_POINTS) -> HazardEvaluation:
    value = log_hazard(net, features, time)
    return HazardEvaluation(
        log_hazard=value,
        hazard=float(np.exp(value)),
        cumulative_hazard=cumulative_hazard(net, features, time, k),
    )


def _validate_grid(grid_times) -> np.ndarray:
    grid = np.asarray(grid_times, dtype=float).reshape(-1)
    if grid.size == 0:
        raise InvalidInputError("time grid must not be empty", module="hazard_model")
    if not np.all(np.isfinite(grid)) or np.any(grid < 0):
        raise InvalidInputError("time grid must be finite and non-negative", module="hazard_model")
    if np.any(np.diff(grid) <= 0):
        raise InvalidInputError("time grid must be strictly increasing", module="hazard_model")
    return grid


def _segment_nodes(grid: np.ndarray, k_per_point: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nodes covering [0, grid[-1]] with k_per_point nodes per segment between
    consecutive anchors (shared endpoints), plus each grid point's node index.
    """
    anchors = grid if grid[0] == 0 else np.concatenate([[0.0], grid])
    pieces = [anchors[:1]]
    for left, right in zip(anchors[:-1], anchors[1:]):
        pieces.append(left + (right - left) * np.linspace(0.0, 1.0, k_per_point)[1:])
    nodes = np.concatenate(pieces)
    anchor_index = np.arange(anchors.size) * (k_per_point - 1)
    # keep anchors exact
    nodes[anchor_index] = anchors
    offset = 0 if grid[0] == 0 else 1
    return nodes, anchor_index[offset:]


def survival_curves(net: KanNetwork, feature_rows, grid_times, k_per_point: int = DEFAULT_INTEGRATION_POINTS) -> List[SurvivalCurve]:
    """
    Survival curves for many subjects on a shared grid.

    H is accumulated segment by segment along the grid, reusing every hazard
    evaluation, so each curve is non-increasing by construction.
    """
    _check_k(k_per_point)
    grid = _validate_grid(grid_times)
    feature_rows = np.atleast_2d(np.asarray(feature_rows, dtype=float))
    extrapolated = bool(grid[-1] > net.normalizer.time_scale)
    if extrapolated:
        logger.warning(
            f"Survival grid reaches {grid[-1]:.6g}, beyond the training time scale {net.normalizer.time_scale:.6g}"
        )
    nodes, grid_index = _segment_nodes(grid, k_per_point)
    cumulative = np.zeros((feature_rows.shape[0], grid.size))
    chunk = max(1, settings.evaluation_chunk_rows // nodes.size)
    for start in range(0, feature_rows.shape[0], chunk):
        block = feature_rows[start:start + chunk]
        rows = np.repeat(block, nodes.size, axis=0)
        log_h = log_hazard_batch(net, rows, np.tile(nodes, block.shape[0]))
        hazard = np.exp(log_h).reshape(block.shape[0], nodes.size)
        pieces = 0.5 * (hazard[:, 1:] + hazard[:, :-1]) * np.diff(nodes)[None, :]
        running = np.concatenate([np.zeros((block.shape[0], 1)), np.cumsum(pieces, axis=1)], axis=1)
        cumulative[start:start + block.shape[0]] = running[:, grid_index]
    survival = np.exp(-cumulative)
    return [SurvivalCurve(times=grid, survival=row, extrapolated=extrapolated) for row in survival]


def survival_curve(net: KanNetwork, features, grid_times, k_per_point: int = DEFAULT_INTEGRATION_POINTS) -> SurvivalCurve:
    features = np.asarray(features, dtype=float).reshape(1, -1)
    return survival_curves(net, features, grid_times, k_per_point)[0]


def hazard_curve(net: KanNetwork, features, grid_times) -> np.ndarray:
    """h(t | x) at each grid time"""
    grid = _validate_grid(grid_times)
    features = np.asarray(features, dtype=float).reshape(1, -1)
    return np.exp(log_hazard_batch(net, np.repeat(features, grid.size, axis=0), grid))


class CensoredLikelihood:
    """
    Negative log-likelihood of right-censored data under the network.

    The integration nodes of every subject are encoded once; the object can
    then be evaluated repeatedly while the parameters change.
    """

    def __init__(self, net: KanNetwork, data: SurvivalDataset, k: int = DEFAULT_INTEGRATION_POINTS):
        _check_k(k)
        if data.n_rows == 0:
            raise InvalidInputError("likelihood needs a non-empty dataset", module="hazard_model")
        self.k = k
        self.events = data.events.astype(float)
        self.nodes = integration_nodes(data.times, k)
        self.weights = trapezoid_weights(self.nodes)
        rows = np.repeat(data.features, k, axis=0)
        self.encoded = encode_inputs(net, rows, self.nodes.reshape(-1))

    @property
    def n_subjects(self) -> int:
        return self.events.shape[0]

    def _node_rows(self, subjects: np.ndarray) -> np.ndarray:
        return (subjects[:, None] * self.k + np.arange(self.k)[None, :]).reshape(-1)

    def evaluate(self, net: KanNetwork, subjects: Optional[np.ndarray] = None,
                 graph: Optional[LossGraph] = None, scale: float = 1.0) -> float:
        """
        NLL averaged over the chosen subjects (all by default).

        When a graph is given the gradient of scale * NLL with respect to
        the network outputs is recorded on it.
        """
        if subjects is None:
            subjects = np.arange(self.n_subjects)
        subjects = np.asarray(subjects, dtype=np.int64)
        encoded = self.encoded if subjects.size == self.n_subjects and np.array_equal(
            subjects, np.arange(self.n_subjects)) else self.encoded.take(self._node_rows(subjects))
        n = subjects.size
        if graph is None:
            raw = forward_encoded(net, encoded)
        else:
            record = record_forward(net, encoded)
            raw = record.output
        log_h = clamp_log_hazard(raw).reshape(n, self.k)
        hazard = np.exp(log_h)
        nodes = self.nodes[subjects]
        integral = np.trapezoid(hazard, nodes, axis=1)
        events = self.events[subjects]
        nll = -float(np.mean(events * log_h[:, -1] - integral))
        if graph is not None:
            grad = self.weights[subjects] * hazard / n
            grad[:, -1] -= events / n
            grad = grad.reshape(-1) * clamp_gradient_mask(raw) * scale
            graph.add_output_term(record, grad)
        return nll


def negative_log_likelihood(net: KanNetwork, data: SurvivalDataset, k: int = DEFAULT_INTEGRATION_POINTS) -> float:
    return CensoredLikelihood(net, data, k).evaluate(net)

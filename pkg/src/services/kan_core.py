"""
Kolmogorov-Arnold network for the log-hazard.

Every edge carries phi(x) = w_b * b(x) + w_s * spline(x); nodes sum their
incoming edges. Parameters live in per-layer arrays indexed
(output j, input i[, basis k]); `EdgeFunction` is a detached view of one
edge. Gradients are computed by an explicit reverse pass over recorded
forward traces.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config.settings import settings
from src.models.network import BaseKind
from src.models.training import RegularizationWeights
from src.services.splines import SplineGrid, basis_matrix, derivative_matrix, eval_spline
from src.utils.errors import DimensionError, InvalidInputError, NotFoundError, StateError

logger = logging.getLogger(__name__)

TIME_SLOT_NAME = "Time"


# Base functions


def _sigmoid(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def base_function(kind: BaseKind, x):
    x = np.asarray(x, dtype=float)
    if kind == BaseKind.IDENTITY:
        return x.copy()
    return x * _sigmoid(x)


def base_derivative(kind: BaseKind, x):
    x = np.asarray(x, dtype=float)
    if kind == BaseKind.IDENTITY:
        return np.ones_like(x)
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


# Parameter containers


@dataclass
class EdgeFunction:
    """One learnable univariate map: w_b * b(x) + w_s * spline(x)"""
    grid: SplineGrid
    coefficients: np.ndarray
    base_weight: float = 0.0
    spline_weight: float = 1.0
    base_kind: BaseKind = BaseKind.SILU

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.grid.n_basis,):
            raise DimensionError(
                f"edge needs {self.grid.n_basis} coefficients, got {self.coefficients.size}", module="kan_core"
            )
        if not (np.all(np.isfinite(self.coefficients))
                and np.isfinite(self.base_weight) and np.isfinite(self.spline_weight)):
            raise InvalidInputError("edge parameters must be finite", module="kan_core")


def edge_eval(edge: EdgeFunction, x: float) -> float:
    if not np.isfinite(x):
        raise InvalidInputError(f"edge input must be finite, got {x}", module="kan_core")
    base = float(base_function(edge.base_kind, x))
    return edge.base_weight * base + edge.spline_weight * eval_spline(edge.grid, edge.coefficients, x)


def edge_eval_many(edge: EdgeFunction, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    values = basis_matrix(edge.grid, xs)
    spline = np.zeros(xs.shape[0])
    for k in range(edge.grid.n_basis):
        spline = spline + edge.coefficients[k] * values[:, k]
    return edge.base_weight * base_function(edge.base_kind, xs) + edge.spline_weight * spline


@dataclass
class KanLayer:
    """Edge parameters of one layer, indexed (output j, input i)"""
    grids: List[SplineGrid]
    coefficients: np.ndarray
    base_weight: np.ndarray
    spline_weight: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        out_w, in_w = self.base_weight.shape
        if len(self.grids) != in_w:
            raise DimensionError(f"layer has {in_w} inputs but {len(self.grids)} grids", module="kan_core")
        n_basis = {g.n_basis for g in self.grids}
        if len(n_basis) != 1:
            raise DimensionError("all grids of a layer must share the interval count", module="kan_core")
        if self.coefficients.shape != (out_w, in_w, n_basis.pop()):
            raise DimensionError("coefficient array does not match the layer shape", module="kan_core")
        if self.spline_weight.shape != (out_w, in_w) or self.mask.shape != (out_w, in_w):
            raise DimensionError("weight arrays do not match the layer shape", module="kan_core")
        self.mask = self.mask.astype(bool)

    @property
    def in_width(self) -> int:
        return self.base_weight.shape[1]

    @property
    def out_width(self) -> int:
        return self.base_weight.shape[0]

    @property
    def n_basis(self) -> int:
        return self.coefficients.shape[2]

    def copy(self) -> "KanLayer":
        return KanLayer(
            grids=list(self.grids),
            coefficients=self.coefficients.copy(),
            base_weight=self.base_weight.copy(),
            spline_weight=self.spline_weight.copy(),
            mask=self.mask.copy(),
        )


@dataclass
class FeatureNormalizer:
    """z-score statistics per feature plus the time scale t_max"""
    feature_names: List[str]
    means: np.ndarray
    stds: np.ndarray
    time_scale: float

    @classmethod
    def fit(cls, features: np.ndarray, times: np.ndarray, feature_names: Sequence[str]) -> "FeatureNormalizer":
        features = np.asarray(features, dtype=float)
        means = features.mean(axis=0) if features.shape[0] else np.zeros(features.shape[1])
        stds = features.std(axis=0) if features.shape[0] else np.ones(features.shape[1])
        stds = np.where(stds > 0, stds, 1.0)
        t_max = float(np.max(times)) if len(times) else 0.0
        return cls(list(feature_names), means, stds, t_max if t_max > 0 else 1.0)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def input_names(self) -> List[str]:
        return list(self.feature_names) + [TIME_SLOT_NAME]

    def transform(self, features, times) -> np.ndarray:
        """Normalized network inputs [z, t / t_max], shape (N, d + 1)"""
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features[None, :] if features.size else features.reshape(1, 0)
        times = np.asarray(times, dtype=float).reshape(-1)
        if features.shape[1] != self.n_features:
            raise DimensionError(
                f"expected {self.n_features} features, got {features.shape[1]}", module="kan_core"
            )
        if features.shape[0] != times.shape[0]:
            raise DimensionError(
                f"{features.shape[0]} feature rows but {times.shape[0]} times", module="kan_core"
            )
        if not np.all(np.isfinite(features)):
            raise InvalidInputError("features must be finite", module="kan_core")
        z = (features - self.means) / self.stds
        return np.column_stack([z, times / self.time_scale])

    def raw_from_normalized(self, input_index: int, values: np.ndarray) -> np.ndarray:
        if input_index == self.n_features:
            return values * self.time_scale
        return values * self.stds[input_index] + self.means[input_index]


@dataclass
class KanNetwork:
    """Layered log-hazard network with the normalization it was trained under"""
    layers: List[KanLayer]
    normalizer: FeatureNormalizer
    base_kind: BaseKind = BaseKind.SILU

    def __post_init__(self):
        if not self.layers:
            raise DimensionError("network needs at least one layer", module="kan_core")
        for previous, current in zip(self.layers, self.layers[1:]):
            if previous.out_width != current.in_width:
                raise DimensionError("consecutive layer widths do not chain", module="kan_core")
        if self.layers[-1].out_width != 1:
            raise DimensionError("final layer must have a single output", module="kan_core")
        if self.layers[0].in_width != self.normalizer.n_features + 1:
            raise DimensionError("input width must equal feature count + 1", module="kan_core")

    @property
    def widths(self) -> List[int]:
        return [self.layers[0].in_width] + [layer.out_width for layer in self.layers]

    @property
    def n_parameters(self) -> int:
        return int(sum(layer.coefficients.size + 2 * layer.base_weight.size for layer in self.layers))

    def copy(self) -> "KanNetwork":
        normalizer = FeatureNormalizer(
            list(self.normalizer.feature_names),
            self.normalizer.means.copy(),
            self.normalizer.stds.copy(),
            self.normalizer.time_scale,
        )
        return KanNetwork([layer.copy() for layer in self.layers], normalizer, self.base_kind)

    def edge(self, layer: int, output_index: int, input_index: int) -> EdgeFunction:
        if not (0 <= layer < len(self.layers)):
            raise NotFoundError(f"layer {layer} does not exist", module="kan_core")
        target = self.layers[layer]
        if not (0 <= output_index < target.out_width and 0 <= input_index < target.in_width):
            raise NotFoundError(
                f"edge ({layer}, {output_index}, {input_index}) does not exist", module="kan_core"
            )
        active = bool(target.mask[output_index, input_index])
        return EdgeFunction(
            grid=target.grids[input_index],
            coefficients=target.coefficients[output_index, input_index].copy() if active
            else np.zeros(target.n_basis),
            base_weight=float(target.base_weight[output_index, input_index]) if active else 0.0,
            spline_weight=float(target.spline_weight[output_index, input_index]) if active else 0.0,
            base_kind=self.base_kind,
        )

    def describe(self) -> Dict[str, object]:
        return {
            "widths": self.widths,
            "base_kind": self.base_kind.value,
            "active_edges": [int(layer.mask.sum()) for layer in self.layers],
            "parameters": self.n_parameters,
            "grid_intervals": self.layers[0].grids[0].intervals,
        }

    def parameter_arrays(self) -> List[np.ndarray]:
        arrays = []
        for layer in self.layers:
            arrays.extend([layer.coefficients, layer.base_weight, layer.spline_weight])
        return arrays


def input_grids(normalized_inputs: np.ndarray, intervals: int) -> List[SplineGrid]:
    """Per-input grids spanning the observed normalized range; time always spans [0, 1]"""
    grids = []
    n_inputs = normalized_inputs.shape[1]
    for i in range(n_inputs):
        if i == n_inputs - 1:
            grids.append(SplineGrid(0.0, 1.0, intervals))
            continue
        column = normalized_inputs[:, i]
        lower, upper = (float(column.min()), float(column.max())) if column.size else (0.0, 0.0)
        if not upper > lower:
            lower, upper = -1.0, 1.0
        grids.append(SplineGrid(lower, upper, intervals))
    return grids


def initialize_network(
    normalizer: FeatureNormalizer,
    first_grids: List[SplineGrid],
    hidden_width: int,
    base_kind: BaseKind,
    rng: np.random.Generator,
    hidden_bound: Optional[float] = None,
) -> KanNetwork:
    """
    Create a network of widths [d + 1, m, 1] (or [d + 1, 1] when m = 0).

    Spline coefficients start near zero so the base function dominates
    early training; w_s = 1 and w_b ~ N(0, 1 / sqrt(n_in)).
    """
    bound = settings.hidden_grid_bound if hidden_bound is None else hidden_bound
    intervals = first_grids[0].intervals
    widths = [normalizer.n_features + 1] + ([hidden_width] if hidden_width > 0 else []) + [1]
    layers = []
    for index, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
        grids = first_grids if index == 0 else [SplineGrid(-bound, bound, intervals)] * n_in
        n_basis = grids[0].n_basis
        layers.append(KanLayer(
            grids=list(grids),
            coefficients=rng.normal(0.0, 0.1 / np.sqrt(n_basis), size=(n_out, n_in, n_basis)),
            base_weight=rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_out, n_in)),
            spline_weight=np.ones((n_out, n_in)),
            mask=np.ones((n_out, n_in), dtype=bool),
        ))
    return KanNetwork(layers, normalizer, base_kind)


# Forward evaluation


@dataclass
class EncodedInputs:
    """Normalized first-layer inputs with their cached spline basis"""
    inputs: np.ndarray
    basis: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.inputs.shape[0]

    def take(self, rows: np.ndarray) -> "EncodedInputs":
        return EncodedInputs(self.inputs[rows], self.basis[rows])


def layer_basis(grids: List[SplineGrid], inputs: np.ndarray) -> np.ndarray:
    n_rows, n_inputs = inputs.shape
    basis = np.empty((n_rows, n_inputs, grids[0].n_basis))
    for i, grid in enumerate(grids):
        basis[:, i, :] = basis_matrix(grid, inputs[:, i])
    return basis


def layer_basis_derivative(grids: List[SplineGrid], inputs: np.ndarray) -> np.ndarray:
    n_rows, n_inputs = inputs.shape
    dbasis = np.empty((n_rows, n_inputs, grids[0].n_basis))
    for i, grid in enumerate(grids):
        dbasis[:, i, :] = derivative_matrix(grid, inputs[:, i])
    return dbasis


def encode_normalized(net: KanNetwork, normalized_inputs: np.ndarray) -> EncodedInputs:
    normalized_inputs = np.asarray(normalized_inputs, dtype=float)
    if normalized_inputs.ndim != 2 or normalized_inputs.shape[1] != net.layers[0].in_width:
        raise DimensionError(
            f"expected inputs of width {net.layers[0].in_width}", module="kan_core"
        )
    if not np.all(np.isfinite(normalized_inputs)):
        raise InvalidInputError("network inputs must be finite", module="kan_core")
    return EncodedInputs(normalized_inputs, layer_basis(net.layers[0].grids, normalized_inputs))


def encode_inputs(net: KanNetwork, feature_rows, times) -> EncodedInputs:
    times = np.asarray(times, dtype=float).reshape(-1)
    if np.any(times < 0):
        raise InvalidInputError("times must be non-negative", module="kan_core")
    return encode_normalized(net, net.normalizer.transform(feature_rows, times))


@dataclass
class LayerTrace:
    inputs: np.ndarray
    basis: np.ndarray
    base: np.ndarray
    spline: np.ndarray
    phi: np.ndarray
    dbasis: Optional[np.ndarray] = None


@dataclass
class ForwardRecord:
    traces: List[LayerTrace]
    output: np.ndarray


def _layer_forward(layer: KanLayer, kind: BaseKind, inputs: np.ndarray, basis: np.ndarray,
                   keep_derivative: bool) -> Tuple[LayerTrace, np.ndarray]:
    n_rows = inputs.shape[0]
    base = base_function(kind, inputs)
    spline = np.zeros((n_rows, layer.out_width, layer.in_width))
    for k in range(layer.n_basis):
        spline = spline + layer.coefficients[None, :, :, k] * basis[:, None, :, k]
    phi = layer.base_weight[None] * base[:, None, :] + layer.spline_weight[None] * spline
    phi = np.where(layer.mask[None], phi, 0.0)
    out = np.zeros((n_rows, layer.out_width))
    for i in range(layer.in_width):
        out = out + phi[:, :, i]
    dbasis = layer_basis_derivative(layer.grids, inputs) if keep_derivative else None
    return LayerTrace(inputs, basis, base, spline, phi, dbasis), out


def record_forward(net: KanNetwork, encoded: EncodedInputs, keep_derivatives: bool = True) -> ForwardRecord:
    """Run the network over encoded inputs keeping every intermediate for the reverse pass"""
    traces = []
    activations = encoded.inputs
    basis = encoded.basis
    for index, layer in enumerate(net.layers):
        if index > 0:
            basis = layer_basis(layer.grids, activations)
        trace, activations = _layer_forward(
            layer, net.base_kind, activations, basis, keep_derivatives and index > 0
        )
        traces.append(trace)
    return ForwardRecord(traces, activations[:, 0])


def forward_encoded(net: KanNetwork, encoded: EncodedInputs) -> np.ndarray:
    return record_forward(net, encoded, keep_derivatives=False).output


def forward_batch(net: KanNetwork, feature_rows, times) -> np.ndarray:
    """Unclamped network output for each (feature row, time) pair"""
    times = np.asarray(times, dtype=float).reshape(-1)
    feature_rows = np.asarray(feature_rows, dtype=float)
    if feature_rows.ndim != 2:
        feature_rows = feature_rows.reshape(times.shape[0], -1)
    if feature_rows.shape[0] != times.shape[0]:
        raise DimensionError(
            f"{feature_rows.shape[0]} feature rows but {times.shape[0]} times", module="kan_core"
        )
    if times.shape[0] == 0:
        return np.zeros(0)
    return forward_encoded(net, encode_inputs(net, feature_rows, times))


def forward(net: KanNetwork, features, time: float) -> float:
    features = np.asarray(features, dtype=float).reshape(-1)
    if features.shape[0] != net.normalizer.n_features:
        raise DimensionError(
            f"expected {net.normalizer.n_features} features, got {features.shape[0]}", module="kan_core"
        )
    return float(forward_batch(net, features[None, :], [time])[0])


# Reverse pass


@dataclass
class GradientTape:
    """Parameter gradients mirroring the network's per-layer arrays"""
    coefficients: List[np.ndarray]
    base_weight: List[np.ndarray]
    spline_weight: List[np.ndarray]

    @classmethod
    def zeros_like(cls, net: KanNetwork) -> "GradientTape":
        return cls(
            [np.zeros_like(layer.coefficients) for layer in net.layers],
            [np.zeros_like(layer.base_weight) for layer in net.layers],
            [np.zeros_like(layer.spline_weight) for layer in net.layers],
        )

    def arrays(self) -> List[np.ndarray]:
        arrays = []
        for c, wb, ws in zip(self.coefficients, self.base_weight, self.spline_weight):
            arrays.extend([c, wb, ws])
        return arrays


@dataclass
class _GraphEntry:
    record: ForwardRecord
    output_grad: Optional[np.ndarray]
    phi_grads: Optional[List[Optional[np.ndarray]]]


@dataclass
class LossGraph:
    """
    Recorded loss contributions awaiting a reverse pass.

    Terms arrive as gradients of the scalar loss with respect to network
    outputs, edge outputs, or spline coefficients directly.
    """
    entries: List[_GraphEntry] = field(default_factory=list)
    coefficient_grads: Dict[int, np.ndarray] = field(default_factory=dict)

    def add_output_term(self, record: ForwardRecord, output_grad: np.ndarray):
        self.entries.append(_GraphEntry(record, np.asarray(output_grad, dtype=float), None))

    def add_edge_terms(self, record: ForwardRecord, phi_grads: List[Optional[np.ndarray]]):
        self.entries.append(_GraphEntry(record, None, phi_grads))

    def add_coefficient_term(self, layer: int, grad: np.ndarray):
        if layer in self.coefficient_grads:
            self.coefficient_grads[layer] = self.coefficient_grads[layer] + grad
        else:
            self.coefficient_grads[layer] = grad

    @property
    def is_empty(self) -> bool:
        return not self.entries and not self.coefficient_grads


def backward(net: KanNetwork, loss_graph: LossGraph) -> GradientTape:
    """
    Exact reverse-mode gradients of the recorded scalar loss.

    Args:
        net: Network the graph was recorded on
        loss_graph: Recorded loss contributions

    Returns:
        GradientTape congruent with the network
    """
    if loss_graph is None or loss_graph.is_empty:
        raise StateError("no recorded computation to differentiate", module="kan_core")
    tape = GradientTape.zeros_like(net)
    for entry in loss_graph.entries:
        _backward_entry(net, entry, tape)
    for layer_index, grad in loss_graph.coefficient_grads.items():
        tape.coefficients[layer_index] = tape.coefficients[layer_index] + grad
    return tape


def _backward_entry(net: KanNetwork, entry: _GraphEntry, tape: GradientTape):
    traces = entry.record.traces
    n_rows = entry.record.output.shape[0]
    upstream = entry.output_grad[:, None] if entry.output_grad is not None else None
    for index in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[index]
        trace = traces[index]
        gphi = np.zeros((n_rows, layer.out_width, layer.in_width))
        if upstream is not None:
            gphi = gphi + upstream[:, :, None]
        if entry.phi_grads is not None and entry.phi_grads[index] is not None:
            gphi = gphi + entry.phi_grads[index]
        gphi = np.where(layer.mask[None], gphi, 0.0)

        tape.base_weight[index] += np.sum(gphi * trace.base[:, None, :], axis=0)
        tape.spline_weight[index] += np.sum(gphi * trace.spline, axis=0)
        scaled = gphi * layer.spline_weight[None]
        for k in range(layer.n_basis):
            tape.coefficients[index][:, :, k] += np.sum(scaled * trace.basis[:, None, :, k], axis=0)

        if index == 0:
            break
        spline_slope = np.zeros((n_rows, layer.out_width, layer.in_width))
        for k in range(layer.n_basis):
            spline_slope = spline_slope + layer.coefficients[None, :, :, k] * trace.dbasis[:, None, :, k]
        local = (layer.base_weight[None] * base_derivative(net.base_kind, trace.inputs)[:, None, :]
                 + layer.spline_weight[None] * spline_slope)
        upstream = np.sum(gphi * local, axis=1)


# Regularization

REGULARIZATION_TERMS = ("l1", "entropy", "coefficient", "smoothness")


def edge_magnitudes(phi: np.ndarray) -> np.ndarray:
    """
    Batch-mean |phi - mean(phi)| per edge, shape (out, in).

    The network has no bias, so the constant part of every edge carries a
    share of the baseline log-hazard; only the input-dependent part counts.
    """
    return np.mean(np.abs(phi - np.mean(phi, axis=0)), axis=0)


def record_regularization(
    net: KanNetwork,
    encoded: EncodedInputs,
    weights: RegularizationWeights,
    scale: float = 1.0,
    graph: Optional[LossGraph] = None,
) -> Tuple[float, np.ndarray]:
    """
    Weighted edge penalties on a batch of normalized inputs.

    The L1 and entropy terms are computed from edge_magnitudes, so a batch
    of one row contributes nothing to them.

    Args:
        net: Network
        encoded: Normalized [z, t] rows
        weights: Inner term weights
        scale: Multiplier applied to the gradients recorded in graph
        graph: When given, the penalty's gradient contributions are recorded

    Returns:
        (total, per-term values in the order l1, entropy, coefficient, smoothness)
    """
    if encoded.n_rows == 0:
        raise InvalidInputError("regularization batch must not be empty", module="kan_core")
    record = record_forward(net, encoded, keep_derivatives=graph is not None)
    n_rows = encoded.n_rows
    terms = np.zeros(4)
    phi_grads = []
    for index, (layer, trace) in enumerate(zip(net.layers, record.traces)):
        centered = trace.phi - np.mean(trace.phi, axis=0)
        magnitude = np.mean(np.abs(centered), axis=0)
        layer_sum = float(np.sum(magnitude))
        terms[0] += layer_sum

        entropy_grad = np.zeros_like(magnitude)
        if layer_sum > 0:
            p = magnitude / layer_sum
            positive = p > 0
            log_p = np.zeros_like(p)
            log_p[positive] = np.log(p[positive])
            entropy = -float(np.sum(p[positive] * log_p[positive]))
            terms[1] += entropy
            entropy_grad = np.where(positive, -(log_p + entropy) / layer_sum, 0.0)

        active = layer.mask[:, :, None]
        coefficients = np.where(active, layer.coefficients, 0.0)
        norms = np.sqrt(np.sum(coefficients ** 2, axis=2))
        differences = np.diff(coefficients, axis=2)
        diff_norms = np.sqrt(np.sum(differences ** 2, axis=2))
        terms[2] += float(np.sum(norms))
        terms[3] += float(np.sum(diff_norms))

        if graph is None:
            continue
        magnitude_grad = scale * (weights.l1 + weights.entropy * entropy_grad)
        signs = np.sign(centered)
        phi_grads.append(magnitude_grad[None] * (signs - np.mean(signs, axis=0)) / n_rows)

        safe = np.where(norms > 0, norms, 1.0)
        coef_grad = np.where((norms > 0)[:, :, None], coefficients / safe[:, :, None], 0.0)
        safe_diff = np.where(diff_norms > 0, diff_norms, 1.0)
        unit_diff = np.where((diff_norms > 0)[:, :, None], differences / safe_diff[:, :, None], 0.0)
        smooth_grad = np.zeros_like(coefficients)
        smooth_grad[:, :, 1:] += unit_diff
        smooth_grad[:, :, :-1] -= unit_diff
        graph.add_coefficient_term(
            index, scale * np.where(active, weights.coefficient * coef_grad + weights.smoothness * smooth_grad, 0.0)
        )

    if graph is not None:
        graph.add_edge_terms(record, phi_grads)
    per_term = terms * np.array([weights.l1, weights.entropy, weights.coefficient, weights.smoothness])
    return float(np.sum(per_term)), per_term


def regularization(
    net: KanNetwork, batch_inputs, weights: Optional[RegularizationWeights] = None
) -> Tuple[float, np.ndarray]:
    """Weighted penalties on normalized [z, t] rows; returns (total, per-term)"""
    batch_inputs = np.asarray(batch_inputs, dtype=float)
    if batch_inputs.ndim != 2 or batch_inputs.shape[0] == 0:
        raise InvalidInputError("regularization batch must not be empty", module="kan_core")
    weights = weights or RegularizationWeights()
    return record_regularization(net, encode_normalized(net, batch_inputs), weights)

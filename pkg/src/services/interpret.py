"""
Pruning, symbolic regression and edge-sample export for trained networks.
"""

import logging
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.optimize import minimize
from sklearn.metrics import r2_score

from src.models.symbolic import FUNCTION_LIBRARY, EdgeAttribution, FunctionKind, SymbolicModel, SymbolicTerm
from src.services.kan_core import (
    TIME_SLOT_NAME,
    EdgeFunction,
    KanLayer,
    KanNetwork,
    edge_eval_many,
    edge_magnitudes,
    encode_normalized,
    forward_encoded,
    record_forward,
)
from src.utils.errors import (
    InvalidInputError,
    NotFoundError,
    OverPrunedError,
    UnfittableError,
    UnsupportedShapeError,
)

logger = logging.getLogger(__name__)

DEFAULT_PRUNE_THRESHOLD = 0.05
COMPLEXITY_PENALTY = 0.005
MIN_SYMBOLIC_SAMPLES = 20
SYMBOLIC_SAMPLES = 101
INNER_GRID = np.linspace(-10.0, 10.0, 41)
REFINED_CANDIDATES = 3
RECIPROCAL_MARGIN = 1e-3
EXP_ARGUMENT_LIMIT = 50.0

EdgeSelector = Union[str, Tuple[int, int, int]]


def _check_inputs(training_inputs) -> np.ndarray:
    inputs = np.asarray(training_inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise InvalidInputError("attribution needs a non-empty input matrix", module="interpret")
    return inputs


def _edge_outputs(net: KanNetwork, training_inputs) -> List[np.ndarray]:
    encoded = encode_normalized(net, _check_inputs(training_inputs))
    return [trace.phi for trace in record_forward(net, encoded, keep_derivatives=False).traces]


def edge_scores(net: KanNetwork, training_inputs) -> List[np.ndarray]:
    """Centered batch-mean |phi| per edge for each layer, shape (out, in)"""
    return [edge_magnitudes(phi) for phi in _edge_outputs(net, training_inputs)]


def attribute(net: KanNetwork, training_inputs) -> List[EdgeAttribution]:
    """
    Importance of every edge as the mean absolute deviation of its output
    from the batch mean over normalized inputs.

    Returns:
        Attributions sorted by descending score
    """
    attributions = [
        EdgeAttribution(layer=layer, output_index=j, input_index=i, score=float(scores[j, i]))
        for layer, scores in enumerate(edge_scores(net, training_inputs))
        for j in range(scores.shape[0])
        for i in range(scores.shape[1])
    ]
    return sorted(attributions, key=lambda a: -a.score)


def _drop_hidden_nodes(layers: List[KanLayer]) -> Tuple[List[KanLayer], int]:
    """Remove hidden nodes lacking an active incoming or outgoing edge until none remain"""
    removed = 0
    changed = True
    while changed:
        changed = False
        for index in range(len(layers) - 1):
            incoming, outgoing = layers[index], layers[index + 1]
            alive = incoming.mask.any(axis=1) & outgoing.mask.any(axis=0)
            if alive.all():
                continue
            keep = np.flatnonzero(alive)
            if keep.size == 0:
                raise OverPrunedError("a hidden layer lost every node", module="interpret")
            removed += int((~alive).sum())
            layers[index] = KanLayer(
                grids=list(incoming.grids),
                coefficients=incoming.coefficients[keep],
                base_weight=incoming.base_weight[keep],
                spline_weight=incoming.spline_weight[keep],
                mask=incoming.mask[keep],
            )
            layers[index + 1] = KanLayer(
                grids=[outgoing.grids[k] for k in keep],
                coefficients=outgoing.coefficients[:, keep],
                base_weight=outgoing.base_weight[:, keep],
                spline_weight=outgoing.spline_weight[:, keep],
                mask=outgoing.mask[:, keep],
            )
            changed = True
    return layers, removed


def _fold_offsets(layer: KanLayer, offsets: np.ndarray, pruned: np.ndarray) -> int:
    """
    Add the batch-mean output of each node's pruned edges to its surviving
    edge with the largest |w_s|; the B-spline basis sums to one, so shifting
    every coefficient by c / w_s shifts that edge by c everywhere.
    """
    unplaced = 0
    for j in range(layer.out_width):
        shift = float(np.sum(offsets[j, pruned[j]]))
        if shift == 0.0:
            continue
        candidates = np.flatnonzero(layer.mask[j] & (layer.spline_weight[j] != 0.0))
        if candidates.size == 0:
            unplaced += 1
            continue
        target = candidates[np.argmax(np.abs(layer.spline_weight[j, candidates]))]
        layer.coefficients[j, target] += shift / layer.spline_weight[j, target]
    return unplaced


def prune(net: KanNetwork, training_inputs, threshold: float = DEFAULT_PRUNE_THRESHOLD) -> KanNetwork:
    """
    Remove edges scoring below threshold * (layer max score).

    The constant part of a removed edge moves onto a surviving edge of the
    same node, so the pruned network keeps its batch-mean output.

    Args:
        net: Trained network (left untouched)
        training_inputs: Normalized [z, t] rows the scores are computed on
        threshold: Relative cut-off, 0 keeps every edge

    Returns:
        New pruned network
    """
    if not threshold >= 0:
        raise InvalidInputError(f"prune threshold must be non-negative, got {threshold}", module="interpret")
    outputs = _edge_outputs(net, training_inputs)
    pruned = net.copy()
    cut = unplaced = 0
    for layer, phi in zip(pruned.layers, outputs):
        layer_scores = edge_magnitudes(phi)
        below = (layer_scores < threshold * layer_scores.max()) & layer.mask
        cut += int(below.sum())
        layer.mask = layer.mask & ~below
        layer.base_weight[~layer.mask] = 0.0
        layer.spline_weight[~layer.mask] = 0.0
        layer.coefficients[~layer.mask] = 0.0
        unplaced += _fold_offsets(layer, np.mean(phi, axis=0), below)
    if not pruned.layers[-1].mask.any():
        raise OverPrunedError(f"threshold {threshold} prunes every path to the output", module="interpret")
    if unplaced:
        logger.warning(f"{unplaced} node(s) kept no spline edge to absorb the offset of their pruned edges")
    layers, removed = _drop_hidden_nodes(pruned.layers)
    if not layers[-1].mask.any():
        raise OverPrunedError(f"threshold {threshold} prunes every path to the output", module="interpret")
    result = KanNetwork(layers, pruned.normalizer, pruned.base_kind)
    logger.info(f"Pruned {cut} edges and {removed} hidden nodes; widths now {result.widths}")
    return result


# Symbolic regression


def _r_squared_rows(features: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """R^2 of the least-squares fit ys ~ c * f + d for each row of features"""
    centered = features - features.mean(axis=1, keepdims=True)
    y_centered = ys - ys.mean()
    covariance = centered @ y_centered
    variance = np.sum(centered ** 2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = covariance ** 2 / (variance * np.sum(y_centered ** 2))
    return np.where(variance > 0, r2, -np.inf)


def _valid_arguments(kind: FunctionKind, u: np.ndarray) -> np.ndarray:
    """Rows of u on which kind is well defined and numerically safe"""
    if kind.requires_positive_argument:
        return np.all(u > 0, axis=-1)
    if kind == FunctionKind.RECIPROCAL:
        return np.all(np.abs(u) > RECIPROCAL_MARGIN, axis=-1) & (np.all(u > 0, axis=-1) | np.all(u < 0, axis=-1))
    if kind == FunctionKind.EXP:
        return np.all(u < EXP_ARGUMENT_LIMIT, axis=-1)
    return np.ones(u.shape[:-1], dtype=bool)


def _inner_r2(kind: FunctionKind, a: float, b: float, xs: np.ndarray, ys: np.ndarray) -> float:
    u = a * xs + b
    if not _valid_arguments(kind, u[None, :])[0]:
        return -np.inf
    with np.errstate(all="ignore"):
        values = FUNCTION_LIBRARY[kind](u)
    if not np.all(np.isfinite(values)):
        return -np.inf
    return float(_r_squared_rows(values[None, :], ys)[0])


def _outer_fit(kind: FunctionKind, a: float, b: float, xs: np.ndarray, ys: np.ndarray) -> Tuple[float, float, float]:
    """(c, d, R^2) from ordinary least squares given the inner parameters"""
    values = FUNCTION_LIBRARY[kind](a * xs + b)
    design = np.column_stack([values, np.ones_like(values)])
    (c, d), *_ = np.linalg.lstsq(design, ys, rcond=None)
    residual = ys - (c * values + d)
    total = np.sum((ys - ys.mean()) ** 2)
    return float(c), float(d), float(1.0 - np.sum(residual ** 2) / total)


def _fit_kind(kind: FunctionKind, xs: np.ndarray, ys: np.ndarray) -> Optional[Tuple[float, float, float, float, float]]:
    if kind == FunctionKind.LINEAR:
        c, d, r2 = _outer_fit(kind, 1.0, 0.0, xs, ys)
        return 1.0, 0.0, c, d, r2

    # coarse grid over (a, b), vectorized over b
    candidates = []
    for a in INNER_GRID:
        if a == 0.0:
            continue
        u = a * xs[None, :] + INNER_GRID[:, None]
        valid = _valid_arguments(kind, u)
        if not valid.any():
            continue
        with np.errstate(all="ignore"):
            values = FUNCTION_LIBRARY[kind](u[valid])
        finite = np.all(np.isfinite(values), axis=1)
        scores = np.full(INNER_GRID.size, -np.inf)
        scores[np.flatnonzero(valid)[finite]] = _r_squared_rows(values[finite], ys)
        for index in np.flatnonzero(np.isfinite(scores)):
            candidates.append((scores[index], float(a), float(INNER_GRID[index])))
    if not candidates:
        return None
    candidates.sort(key=lambda item: -item[0])

    def loss(params: np.ndarray) -> float:
        r2 = _inner_r2(kind, params[0], params[1], xs, ys)
        return -r2 if np.isfinite(r2) else 1e6

    best_r2, best_a, best_b = candidates[0]
    for _, a0, b0 in candidates[:REFINED_CANDIDATES]:
        result = minimize(
            loss,
            x0=np.array([a0, b0]),
            method="Nelder-Mead",
            options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 2000},
        )
        refined = _inner_r2(kind, result.x[0], result.x[1], xs, ys)
        if refined > best_r2:
            best_r2, best_a, best_b = refined, float(result.x[0]), float(result.x[1])
    c, d, r2 = _outer_fit(kind, best_a, best_b, xs, ys)
    if not np.all(np.isfinite([c, d, r2])):
        return None
    return best_a, best_b, c, d, r2


def fit_symbolic_samples(xs, ys, input_name: str = "x", input_index: Optional[int] = None,
                         kinds: Optional[Iterable[FunctionKind]] = None) -> SymbolicTerm:
    """
    Best template c * f(a * x + b) + d for sampled (x, y) pairs.

    Each kind's (a, b) comes from a coarse grid refined by Nelder-Mead and
    (c, d) from least squares; the selected kind maximizes R^2 minus a
    0.005 penalty for every non-linear kind.
    """
    xs = np.asarray(xs, dtype=float).reshape(-1)
    ys = np.asarray(ys, dtype=float).reshape(-1)
    if xs.shape != ys.shape:
        raise InvalidInputError("sample x and y arrays differ in length", module="interpret")
    if xs.size < MIN_SYMBOLIC_SAMPLES:
        raise InvalidInputError(
            f"symbolic fitting needs at least {MIN_SYMBOLIC_SAMPLES} samples, got {xs.size}", module="interpret"
        )
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise UnfittableError("samples must be finite", module="interpret")
    if np.ptp(xs) == 0:
        raise UnfittableError("samples do not vary in x", module="interpret")
    if np.ptp(ys) == 0:
        return SymbolicTerm(
            function_kind=FunctionKind.LINEAR, inner_scale=1.0, inner_shift=0.0, outer_scale=0.0,
            outer_shift=float(ys[0]), input_name=input_name, input_index=input_index, r_squared=1.0,
        )

    best = None
    for kind in (list(kinds) if kinds is not None else list(FunctionKind)):
        fitted = _fit_kind(kind, xs, ys)
        if fitted is None:
            continue
        a, b, c, d, r2 = fitted
        score = r2 - (0.0 if kind == FunctionKind.LINEAR else COMPLEXITY_PENALTY)
        logger.debug(f"{input_name}: {kind.value} R^2 {r2:.6f}")
        if best is None or score > best[0]:
            best = (score, kind, a, b, c, d, r2)
    if best is None:
        raise UnfittableError(f"no candidate function fits the samples of {input_name}", module="interpret")
    _, kind, a, b, c, d, r2 = best
    return SymbolicTerm(
        function_kind=kind, inner_scale=a, inner_shift=b, outer_scale=c, outer_shift=d,
        input_name=input_name, input_index=input_index, r_squared=min(r2, 1.0),
    )


def fit_symbolic_term(edge: EdgeFunction, samples, input_name: str = "x", input_index: Optional[int] = None,
                      kinds: Optional[Iterable[FunctionKind]] = None) -> SymbolicTerm:
    """Fit a closed-form term to an edge function over the given domain samples"""
    xs = np.asarray(samples, dtype=float).reshape(-1)
    return fit_symbolic_samples(xs, edge_eval_many(edge, xs), input_name, input_index, kinds)


def _to_raw_units(term: SymbolicTerm, net: KanNetwork, input_index: int) -> Tuple[SymbolicTerm, float]:
    """Rewrite a term fitted on a normalized input into raw units; returns (term, constant)"""
    normalizer = net.normalizer
    if input_index == normalizer.n_features:
        scale, shift = 1.0 / normalizer.time_scale, 0.0
    else:
        scale = 1.0 / normalizer.stds[input_index]
        shift = -normalizer.means[input_index] / normalizer.stds[input_index]
    # a * z + b with z = scale * x + shift
    inner_scale = term.inner_scale * scale
    inner_shift = term.inner_shift + term.inner_scale * shift
    if term.function_kind == FunctionKind.LINEAR:
        constant = term.outer_scale * inner_shift + term.outer_shift
        raw = term.model_copy(update={
            "inner_scale": inner_scale, "inner_shift": 0.0, "outer_shift": 0.0,
        })
        return raw, constant
    raw = term.model_copy(update={"inner_scale": inner_scale, "inner_shift": inner_shift, "outer_shift": 0.0})
    return raw, term.outer_shift


def raw_inputs(net: KanNetwork, training_inputs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Raw (features, times) corresponding to normalized [z, t] rows"""
    columns = [
        net.normalizer.raw_from_normalized(i, training_inputs[:, i]) for i in range(training_inputs.shape[1])
    ]
    features = np.column_stack(columns[:-1]) if len(columns) > 1 else np.zeros((training_inputs.shape[0], 0))
    return features, columns[-1]


def formula_samples(net: KanNetwork, training_inputs, input_index: int) -> np.ndarray:
    """Quantiles of one normalized input column, so symbolic fits weight the range by data density"""
    column = _check_inputs(training_inputs)[:, input_index]
    samples = np.quantile(column, np.linspace(0.0, 1.0, SYMBOLIC_SAMPLES))
    if not np.ptp(samples) > 0:
        grid = net.layers[0].grids[input_index]
        samples = np.linspace(grid.lower, grid.upper, SYMBOLIC_SAMPLES)
    return samples


def extract_formula(net: KanNetwork, training_inputs, kinds: Optional[Iterable[FunctionKind]] = None) -> SymbolicModel:
    """
    Symbolic log-hazard of a single-layer network in raw feature and time units.

    Args:
        net: Network of widths [d + 1, 1], typically pruned
        training_inputs: Normalized [z, t] rows; their quantiles are the fit samples and fidelity uses all rows
        kinds: Restrict the candidate function kinds

    Returns:
        SymbolicModel with fidelity R^2 against the unclamped network output
    """
    if len(net.layers) != 1:
        raise UnsupportedShapeError(
            f"formula extraction needs a single-layer network, got widths {net.widths}", module="interpret"
        )
    inputs = _check_inputs(training_inputs)
    layer = net.layers[0]
    if not layer.mask.any():
        raise OverPrunedError("network has no surviving edges", module="interpret")
    kinds = list(kinds) if kinds is not None else None
    names = net.normalizer.input_names
    terms, constant = [], 0.0
    for i in np.flatnonzero(layer.mask[0]):
        samples = formula_samples(net, inputs, int(i))
        term = fit_symbolic_term(net.edge(0, 0, int(i)), samples, names[i], int(i), kinds)
        raw_term, shift = _to_raw_units(term, net, int(i))
        terms.append(raw_term)
        constant += shift

    model = SymbolicModel(
        terms=terms, constant=constant, fidelity=0.0,
        feature_names=list(net.normalizer.feature_names), time_name=TIME_SLOT_NAME,
    )
    network_output = forward_encoded(net, encode_normalized(net, inputs))
    features, times = raw_inputs(net, inputs)
    fidelity = float(r2_score(network_output, model.evaluate(features, times)))
    model = model.model_copy(update={"fidelity": fidelity})
    logger.info(f"Extracted formula with {len(terms)} terms, fidelity R^2 {fidelity:.4f}: {model.render()}")
    return model


# Edge samples


def resolve_edge(net: KanNetwork, selector: EdgeSelector) -> Tuple[int, int, int]:
    """
    Accepts (layer, output, input), "layer:output:input", or an input name
    (first-layer edge into output 0).
    """
    if isinstance(selector, str):
        if selector in net.normalizer.input_names:
            return 0, 0, net.normalizer.input_names.index(selector)
        parts = selector.split(":")
        if len(parts) != 3 or not all(p.strip().lstrip("-").isdigit() for p in parts):
            raise NotFoundError(f"unknown edge selector '{selector}'", module="interpret")
        selector = tuple(int(p) for p in parts)
    layer, output_index, input_index = selector
    net.edge(layer, output_index, input_index)
    return layer, output_index, input_index


def export_edge_samples(net: KanNetwork, selector: EdgeSelector, n_points: int = 100) -> pd.DataFrame:
    """
    Uniform samples of one edge over its grid domain.

    Returns:
        DataFrame with columns x_normalized, x_raw, phi (raw units only differ for first-layer edges)
    """
    if n_points < 2:
        raise InvalidInputError(f"need at least 2 sample points, got {n_points}", module="interpret")
    layer, output_index, input_index = resolve_edge(net, selector)
    edge = net.edge(layer, output_index, input_index)
    xs = np.linspace(edge.grid.lower, edge.grid.upper, n_points)
    raw = net.normalizer.raw_from_normalized(input_index, xs) if layer == 0 else xs
    return pd.DataFrame({"x_normalized": xs, "x_raw": raw, "phi": edge_eval_many(edge, xs)})


def pruned_edge_summary(original: KanNetwork, pruned: KanNetwork) -> List[str]:
    names = original.normalizer.input_names
    kept = set(np.flatnonzero(pruned.layers[0].mask.any(axis=0)))
    return [names[i] for i in range(len(names)) if i not in kept]


def feature_importance_frame(attributions: Sequence[EdgeAttribution], net: KanNetwork) -> pd.DataFrame:
    names = net.normalizer.input_names
    return pd.DataFrame([
        {
            "layer": a.layer,
            "output_index": a.output_index,
            "input_index": a.input_index,
            "input_name": names[a.input_index] if a.layer == 0 else f"hidden_{a.input_index}",
            "score": a.score,
        }
        for a in attributions
    ])

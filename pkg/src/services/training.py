"""
Training loop for the log-hazard network.

Objective: censored-data NLL + lambda * (weighted edge penalties), minimized
with Adam and decoupled weight decay. An event-stratified slice of the data
drives early stopping and the best validation epoch is restored.
"""

import hashlib
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import ValidationError
from tqdm import tqdm

from src.config.settings import settings
from src.models.dataset import SurvivalDataset
from src.models.training import (
    EpochRecord,
    ParameterRange,
    RegularizationBreakdown,
    SearchObjective,
    SearchSpace,
    TrainConfig,
    TrainReport,
    apply_overrides,
)
from src.services.dataio import stratified_folds, stratified_split_indices
from src.services.hazard_model import CensoredLikelihood, negative_log_likelihood
from src.services.kan_core import (
    EncodedInputs,
    FeatureNormalizer,
    KanNetwork,
    LossGraph,
    backward,
    encode_inputs,
    initialize_network,
    input_grids,
    record_regularization,
)
from src.services.metrics import evaluate
from src.utils.errors import (
    DivergenceError,
    HazardKanError,
    InvalidInputError,
    UnfittableError,
)

logger = logging.getLogger(__name__)

MIN_TRAINING_ROWS = 10


class DecoupledAdam:
    """
    Adam with decoupled weight decay.

    Each step first shrinks every parameter by (1 - weight_decay), then
    applies the bias-corrected Adam update.
    """

    def __init__(self, params: List[np.ndarray], lr: float, weight_decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.param_momentum = [np.zeros_like(p) for p in self.params]
        self.param_2nd_momentum = [np.zeros_like(p) for p in self.params]

    def step(self, grads: List[np.ndarray]):
        if len(grads) != len(self.params):
            raise InvalidInputError("gradient list does not match the parameters", module="training")
        self.step_count += 1
        bias_correction_1 = 1 - self.beta1 ** self.step_count
        bias_correction_2 = 1 - self.beta2 ** self.step_count
        for index, (p, g) in enumerate(zip(self.params, grads)):
            self.param_momentum[index] = (1 - self.beta1) * g + self.beta1 * self.param_momentum[index]
            self.param_2nd_momentum[index] = (1 - self.beta2) * g ** 2 + self.beta2 * self.param_2nd_momentum[index]
            p_mom = self.param_momentum[index] / bias_correction_1
            p_2nd_mom = self.param_2nd_momentum[index] / bias_correction_2
            p *= (1.0 - self.weight_decay)
            p -= self.lr * p_mom / (np.sqrt(p_2nd_mom) + self.eps)


def derive_seeds(seed: int) -> Tuple[int, int, int]:
    """Independent (split, init, batch-order) seeds derived from one config seed"""
    children = np.random.SeedSequence(seed % (2 ** 63)).spawn(3)
    return tuple(int(child.generate_state(1)[0]) for child in children)


def total_loss(net: KanNetwork, batch: SurvivalDataset, config: TrainConfig) -> float:
    """NLL + lambda * regularization on the batch's normalized [z, t] rows"""
    nll = negative_log_likelihood(net, batch, config.integration_k)
    if config.lambda_reg == 0.0:
        return nll
    encoded = encode_inputs(net, batch.features, batch.times)
    penalty, _ = record_regularization(net, encoded, config.regularization)
    return nll + config.lambda_reg * penalty


@dataclass
class _Objective:
    likelihood: CensoredLikelihood
    encoded_rows: EncodedInputs
    config: TrainConfig

    def value_and_gradients(self, net: KanNetwork, subjects: np.ndarray):
        graph = LossGraph()
        nll = self.likelihood.evaluate(net, subjects, graph)
        loss = nll
        if self.config.lambda_reg > 0.0:
            penalty, _ = record_regularization(
                net, self.encoded_rows.take(subjects), self.config.regularization,
                scale=self.config.lambda_reg, graph=graph,
            )
            loss = nll + self.config.lambda_reg * penalty
        return loss, nll, graph


def _breakdown(net: KanNetwork, train: SurvivalDataset, config: TrainConfig) -> RegularizationBreakdown:
    _, per_term = record_regularization(net, encode_inputs(net, train.features, train.times), config.regularization)
    return RegularizationBreakdown(
        l1=float(per_term[0]), entropy=float(per_term[1]),
        coefficient=float(per_term[2]), smoothness=float(per_term[3]),
    )


def _digest(indices: np.ndarray) -> str:
    return hashlib.sha256(np.asarray(indices, dtype=np.int64).tobytes()).hexdigest()[:16]


def _batches(n_subjects: int, config: TrainConfig, rng: np.random.Generator) -> List[np.ndarray]:
    if config.full_batch or config.batch_size >= n_subjects:
        return [np.arange(n_subjects)]
    order = rng.permutation(n_subjects)
    return [np.sort(order[start:start + config.batch_size]) for start in range(0, n_subjects, config.batch_size)]


def fit(data: SurvivalDataset, config: Optional[TrainConfig] = None,
        split_seed: Optional[int] = None) -> Tuple[KanNetwork, TrainReport]:
    """
    Train a log-hazard network.

    Args:
        data: Training data (at least 10 rows and one event)
        config: Training configuration
        split_seed: Overrides the early-stopping split seed derived from config.seed

    Returns:
        (network restored to its best validation epoch, TrainReport)
    """
    config = config or TrainConfig()
    if data.n_rows < MIN_TRAINING_ROWS:
        raise InvalidInputError(
            f"training needs at least {MIN_TRAINING_ROWS} rows, got {data.n_rows}", module="training"
        )
    if data.n_events == 0:
        raise UnfittableError("training data contains no events", module="training")

    started = time.perf_counter()
    derived_split, init_seed, batch_seed = derive_seeds(config.seed)
    train_idx, val_idx = stratified_split_indices(
        data.events, config.early_stop_fraction, derived_split if split_seed is None else split_seed
    )
    train, validation = data.subset(train_idx), data.subset(val_idx)

    normalizer = FeatureNormalizer.fit(train.features, train.times, data.column_names)
    grids = input_grids(normalizer.transform(train.features, train.times), config.grid_intervals)
    net = initialize_network(
        normalizer, grids, config.hidden_width, config.base_kind, np.random.default_rng(init_seed)
    )
    logger.info(
        f"Training network {net.widths} ({net.n_parameters} parameters) on {train.n_rows} rows, "
        f"{validation.n_rows} held out for early stopping"
    )

    split_info = dict(training_rows=train.n_rows, validation_rows=validation.n_rows, split_digest=_digest(train_idx))
    if config.epochs == 0:
        return net, TrainReport(
            final_regularization=_breakdown(net, train, config),
            duration_seconds=time.perf_counter() - started,
            **split_info,
        )

    objective = _Objective(
        CensoredLikelihood(net, train, config.integration_k),
        encode_inputs(net, train.features, train.times),
        config,
    )
    val_likelihood = CensoredLikelihood(net, validation, config.integration_k)
    optimizer = DecoupledAdam(net.parameter_arrays(), config.learning_rate, config.weight_decay)
    batch_rng = np.random.default_rng(batch_seed)
    all_subjects = np.arange(train.n_rows)

    history: List[EpochRecord] = []
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        loss, nll, _ = objective.value_and_gradients(net, all_subjects)
        val_nll = val_likelihood.evaluate(net)
        _check_finite((loss, nll, val_nll), 0)
        history.append(EpochRecord(epoch=0, train_loss=loss, train_nll=nll, val_nll=val_nll))
        best_val, best_epoch = val_nll, 0
        best_params = [p.copy() for p in net.parameter_arrays()]
        stopping_epoch = 0

        for epoch in range(1, config.epochs + 1):
            losses, nlls, sizes = [], [], []
            for subjects in _batches(train.n_rows, config, batch_rng):
                loss, nll, graph = objective.value_and_gradients(net, subjects)
                _check_finite((loss, nll), epoch)
                optimizer.step(backward(net, graph).arrays())
                losses.append(loss)
                nlls.append(nll)
                sizes.append(subjects.size)
            val_nll = val_likelihood.evaluate(net)
            train_loss = float(np.average(losses, weights=sizes))
            train_nll = float(np.average(nlls, weights=sizes))
            _check_finite((val_nll,), epoch)
            if not all(np.all(np.isfinite(p)) for p in net.parameter_arrays()):
                raise DivergenceError("parameters became non-finite", epoch)
            history.append(EpochRecord(epoch=epoch, train_loss=train_loss, train_nll=train_nll, val_nll=val_nll))
            logger.debug(f"epoch {epoch}: loss {train_loss:.6f}, nll {train_nll:.6f}, val nll {val_nll:.6f}")
            stopping_epoch = epoch

            if val_nll < best_val:
                best_val, best_epoch = val_nll, epoch
                best_params = [p.copy() for p in net.parameter_arrays()]
            elif epoch - best_epoch >= config.patience:
                logger.info(f"Early stopping at epoch {epoch}; best validation NLL {best_val:.6f} at epoch {best_epoch}")
                break

    for target, source in zip(net.parameter_arrays(), best_params):
        target[...] = source

    report = TrainReport(
        history=history,
        stopping_epoch=stopping_epoch,
        best_epoch=best_epoch,
        final_regularization=_breakdown(net, train, config),
        duration_seconds=time.perf_counter() - started,
        **split_info,
    )
    logger.info(
        f"Finished training after {stopping_epoch} epochs in {report.duration_seconds:.1f}s "
        f"(best epoch {best_epoch}, validation NLL {best_val:.6f})"
    )
    return net, report


def _check_finite(values, epoch: int):
    if not all(np.isfinite(v) for v in values):
        raise DivergenceError("loss became non-finite", epoch)


# Random search


@dataclass
class TrialResult:
    index: int
    overrides: Dict[str, object]
    config: TrainConfig
    score: float
    fold_scores: List[float] = field(default_factory=list)
    error: Optional[str] = None


@dataclass
class SearchOutcome:
    best: TrialResult
    trials: List[TrialResult]
    objective: SearchObjective


def _sample_value(name: str, spec: ParameterRange, rng: np.random.Generator):
    if spec.choices is not None:
        return spec.choices[int(rng.integers(len(spec.choices)))]
    if spec.integer:
        return int(rng.integers(int(spec.low), int(spec.high) + 1))
    if spec.low == spec.high:
        return float(spec.low)
    if spec.log:
        return float(np.exp(rng.uniform(np.log(spec.low), np.log(spec.high))))
    return float(rng.uniform(spec.low, spec.high))


def sample_configs(space: SearchSpace, trials: int, seed: int,
                   base: Optional[TrainConfig] = None) -> List[Tuple[Dict[str, object], TrainConfig]]:
    """Draw all trial configurations up front from a seeded generator"""
    base = base or TrainConfig()
    rng = np.random.default_rng(seed % (2 ** 63))
    samples = []
    for _ in range(trials):
        overrides = {name: _sample_value(name, space.parameters[name], rng) for name in sorted(space.parameters)}
        try:
            samples.append((overrides, apply_overrides(base, overrides)))
        except ValidationError as e:
            raise InvalidInputError(f"search space yields an invalid configuration {overrides}: {e}", module="training")
    return samples


def _score_fold(net: KanNetwork, train: SurvivalDataset, held_out: SurvivalDataset,
                config: TrainConfig, objective: SearchObjective) -> float:
    if objective == SearchObjective.NLL:
        return negative_log_likelihood(net, held_out, config.integration_k)
    report = evaluate(net, held_out, train, config)
    return -report.c_index if objective == SearchObjective.C_INDEX else report.ibs


def _run_trial(index: int, overrides: Dict[str, object], config: TrainConfig, data: SurvivalDataset,
               folds: List[Tuple[np.ndarray, np.ndarray]], objective: SearchObjective) -> TrialResult:
    fold_scores = []
    try:
        for train_idx, held_idx in folds:
            train, held_out = data.subset(train_idx), data.subset(held_idx)
            net, _ = fit(train, config)
            with np.errstate(over="ignore", invalid="ignore"):
                score = _score_fold(net, train, held_out, config, objective)
            if not np.isfinite(score):
                raise DivergenceError("held-out score is non-finite", 0)
            fold_scores.append(score)
    except HazardKanError as e:
        logger.warning(f"Trial {index} failed ({e.module}): {e}")
        return TrialResult(index, overrides, config, float("inf"), fold_scores, str(e))
    score = float(np.mean(fold_scores))
    logger.info(f"Trial {index}: {overrides} scored {score:.6f}")
    return TrialResult(index, overrides, config, score, fold_scores)


def run_search(data: SurvivalDataset, search_space: SearchSpace, trials: int, folds: int, seed: int,
               base_config: Optional[TrainConfig] = None) -> SearchOutcome:
    """
    Bounded random search scored by stratified cross-validation.

    Trials may run concurrently; results are collected by trial index so
    the outcome does not depend on scheduling.
    """
    if trials < 1:
        raise InvalidInputError(f"trials must be at least 1, got {trials}", module="training")
    if folds < 2:
        raise InvalidInputError(f"folds must be at least 2, got {folds}", module="training")
    samples = sample_configs(search_space, trials, seed, base_config)
    fold_indices = stratified_folds(data.events, folds, seed)
    objective = search_space.objective

    with ThreadPoolExecutor(max_workers=settings.threads) as executor:
        futures = [
            executor.submit(_run_trial, index, overrides, config, data, fold_indices, objective)
            for index, (overrides, config) in enumerate(samples)
        ]
        results = [
            future.result()
            for future in tqdm(futures, desc="search", disable=not settings.show_progress)
        ]

    finite = [r for r in results if np.isfinite(r.score)]
    if not finite:
        raise UnfittableError(f"all {trials} search trials failed", module="training")
    best = min(finite, key=lambda r: (r.score, r.index))
    logger.info(f"Best trial {best.index} with {objective.value} score {best.score:.6f}: {best.overrides}")
    return SearchOutcome(best=best, trials=results, objective=objective)


def random_search(data: SurvivalDataset, search_space: SearchSpace, trials: int, folds: int, seed: int,
                  base_config: Optional[TrainConfig] = None) -> TrainConfig:
    return run_search(data, search_space, trials, folds, seed, base_config).best.config

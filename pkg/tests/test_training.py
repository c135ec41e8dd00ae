import math

import numpy as np
import pytest

from src.models.dataset import ColumnKind, SurvivalDataset
from src.models.synthetic import FeatureDistribution, SyntheticSpec
from src.models.training import ParameterRange, SearchObjective, SearchSpace, TrainConfig, apply_overrides
from src.services.dataio import generate_synthetic, stratified_split_indices
from src.services.hazard_model import negative_log_likelihood
from src.services.kan_core import regularization
from src.services.training import (
    DecoupledAdam,
    derive_seeds,
    fit,
    random_search,
    run_search,
    sample_configs,
    total_loss,
)
from src.utils.errors import DivergenceError, InvalidInputError, UnfittableError
from tests.conftest import build_network, constant_network

FAST = dict(epochs=5, integration_k=10, patience=5)


def small_data(n: int = 60, seed: int = 11) -> SurvivalDataset:
    spec = SyntheticSpec(n=n, features=[FeatureDistribution(), FeatureDistribution()], linear=[0.7, -0.5],
                         censoring_target=0.25, seed=seed)
    return generate_synthetic(spec)[0]


def same_parameters(first, second) -> bool:
    return all(np.array_equal(a, b) for a, b in zip(first.parameter_arrays(), second.parameter_arrays()))


class TestDecoupledAdam:
    """Optimizer update rule"""

    def test_weight_decay_only(self):
        p = np.array([1.0, -2.0, 4.0])
        optimizer = DecoupledAdam([p], lr=0.1, weight_decay=0.1)
        optimizer.step([np.zeros(3)])
        np.testing.assert_allclose(p, [0.9, -1.8, 3.6], rtol=1e-15)

    def test_first_step_moves_by_learning_rate(self):
        p = np.array([1.0, 1.0])
        optimizer = DecoupledAdam([p], lr=0.01)
        optimizer.step([np.array([3.0, -0.5])])
        np.testing.assert_allclose(p, [0.99, 1.01], rtol=1e-6)

    def test_gradient_count_checked(self):
        optimizer = DecoupledAdam([np.zeros(2)], lr=0.01)
        with pytest.raises(InvalidInputError):
            optimizer.step([])


class TestTotalLoss:
    """NLL plus weighted penalties"""

    def test_lambda_zero_is_the_likelihood(self, rng, synthetic_data):
        net = build_network(rng, n_features=2)
        config = TrainConfig(lambda_reg=0.0, integration_k=20)
        assert total_loss(net, synthetic_data, config) == negative_log_likelihood(net, synthetic_data, 20)

    def test_zero_network(self, synthetic_data):
        net = constant_network(0.0, n_features=2)
        config = TrainConfig(lambda_reg=1.0, integration_k=20)
        assert total_loss(net, synthetic_data, config) == negative_log_likelihood(net, synthetic_data, 20)

    def test_composition(self, rng, synthetic_data):
        data = synthetic_data.subset(np.arange(20))
        net = build_network(rng, n_features=2, hidden_width=2)
        config = TrainConfig(lambda_reg=0.01, integration_k=20)
        penalty, _ = regularization(net, net.normalizer.transform(data.features, data.times), config.regularization)
        expected = negative_log_likelihood(net, data, 20) + 0.01 * penalty
        assert total_loss(net, data, config) == pytest.approx(expected, rel=1e-12)


class TestFit:
    """Training loop"""

    def test_epochs_zero_returns_initial_network(self):
        data = small_data()
        net, report = fit(data, TrainConfig(epochs=0, integration_k=10))
        assert report.history == []
        assert report.stopping_epoch == 0
        assert np.all(net.layers[0].spline_weight == 1.0)
        assert report.training_rows + report.validation_rows == data.n_rows

    def test_deterministic(self):
        data = small_data()
        config = TrainConfig(hidden_width=1, **FAST)
        first, first_report = fit(data, config)
        second, second_report = fit(data, config)
        assert same_parameters(first, second)
        assert first_report.history == second_report.history
        assert first_report.split_digest == second_report.split_digest

    def test_minibatches_are_deterministic(self):
        data = small_data()
        config = TrainConfig(batch_size=16, **FAST)
        assert same_parameters(fit(data, config)[0], fit(data, config)[0])

    def test_seed_changes_the_result(self):
        data = small_data()
        first, _ = fit(data, TrainConfig(seed=1, **FAST))
        second, _ = fit(data, TrainConfig(seed=2, **FAST))
        assert not same_parameters(first, second)

    def test_fixed_split_seed_isolates_initialization(self):
        data = small_data()
        first, first_report = fit(data, TrainConfig(seed=1, epochs=0, integration_k=10), split_seed=77)
        second, second_report = fit(data, TrainConfig(seed=2, epochs=0, integration_k=10), split_seed=77)
        assert first_report.split_digest == second_report.split_digest
        assert not same_parameters(first, second)

    def test_training_lowers_the_likelihood(self):
        data = small_data(n=120)
        _, report = fit(data, TrainConfig(epochs=30, integration_k=10, patience=30, learning_rate=0.02))
        assert report.history[-1].train_nll < report.history[0].train_nll

    def test_best_epoch_is_restored(self):
        data = small_data()
        config = TrainConfig(epochs=12, integration_k=10, patience=3, learning_rate=0.05)
        net, report = fit(data, config)
        assert report.best_epoch <= report.stopping_epoch
        _, val_idx = stratified_split_indices(data.events, config.early_stop_fraction, derive_seeds(config.seed)[0])
        restored = negative_log_likelihood(net, data.subset(val_idx), config.integration_k)
        assert restored == pytest.approx(report.history[report.best_epoch].val_nll, rel=1e-12)
        assert report.to_frame().shape == (len(report.history), 3)

    def test_no_events(self):
        data = SurvivalDataset(
            features=np.arange(12.0).reshape(12, 1), times=np.arange(1.0, 13.0), events=np.zeros(12),
            column_names=["x1"], column_kinds=[ColumnKind.NUMERIC],
        )
        with pytest.raises(UnfittableError):
            fit(data, TrainConfig(**FAST))

    def test_too_few_rows(self):
        with pytest.raises(InvalidInputError):
            fit(small_data().subset(np.arange(5)), TrainConfig(**FAST))

    def test_divergence_names_the_epoch(self):
        with pytest.raises(DivergenceError) as e:
            fit(small_data(), TrainConfig(learning_rate=1e300, lambda_reg=0.1, **FAST))
        assert e.value.epoch >= 1
        assert "epoch" in str(e.value)


class TestSearch:
    """Random search over configurations"""

    def test_single_trial(self):
        space = SearchSpace(parameters={"lambda_reg": ParameterRange(low=1e-3, high=1e-1, log=True)})
        outcome = run_search(small_data(), space, trials=1, folds=2, seed=0, base_config=TrainConfig(**FAST))
        assert len(outcome.trials) == 1
        assert outcome.best.index == 0
        assert 1e-3 <= outcome.best.config.lambda_reg <= 1e-1

    def test_degenerate_space(self):
        space = SearchSpace(parameters={"learning_rate": ParameterRange(choices=[0.02])})
        config = random_search(small_data(), space, trials=3, folds=2, seed=1, base_config=TrainConfig(**FAST))
        assert config.learning_rate == 0.02

    def test_diverging_configuration_loses(self):
        space = SearchSpace(parameters={"learning_rate": ParameterRange(choices=[1e300, 0.01])},
                            objective=SearchObjective.NLL)
        base = TrainConfig(lambda_reg=0.1, **FAST)
        outcome = run_search(small_data(), space, trials=8, folds=2, seed=3, base_config=base)
        assert outcome.best.config.learning_rate == 0.01
        for trial in outcome.trials:
            if trial.config.learning_rate == 1e300:
                assert math.isinf(trial.score)
                assert trial.error

    def test_infeasible_space(self):
        space = SearchSpace(parameters={"hidden_width": ParameterRange(low=5, high=7, integer=True)})
        with pytest.raises(InvalidInputError):
            run_search(small_data(), space, trials=2, folds=2, seed=0)

    def test_sampling_is_seeded(self):
        space = SearchSpace(parameters={
            "grid_intervals": ParameterRange(low=3, high=8, integer=True),
            "regularization.entropy": ParameterRange(low=0.5, high=4.0),
        })
        first = sample_configs(space, 6, seed=5)
        second = sample_configs(space, 6, seed=5)
        assert [o for o, _ in first] == [o for o, _ in second]
        for overrides, config in first:
            assert 3 <= config.grid_intervals <= 8
            assert config.regularization.entropy == overrides["regularization.entropy"]

    def test_argument_checks(self):
        space = SearchSpace(parameters={"learning_rate": ParameterRange(choices=[0.01])})
        with pytest.raises(InvalidInputError):
            run_search(small_data(), space, trials=0, folds=2, seed=0)
        with pytest.raises(InvalidInputError):
            run_search(small_data(), space, trials=1, folds=1, seed=0)

    def test_unknown_parameter(self):
        with pytest.raises(ValueError):
            SearchSpace(parameters={"momentum": ParameterRange(low=0.1, high=0.9)})

    def test_dotted_override(self):
        config = apply_overrides(TrainConfig(), {"regularization.l1": 0.5, "epochs": 7})
        assert config.regularization.l1 == 0.5
        assert config.epochs == 7


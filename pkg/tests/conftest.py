import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.models.network import BaseKind
from src.models.synthetic import FeatureDistribution, SyntheticSpec
from src.services.dataio import generate_synthetic
from src.services.kan_core import FeatureNormalizer, KanNetwork, initialize_network
from src.services.splines import SplineGrid


def cox_de_boor(knots, k, degree, x):
    """Textbook recursion, half-open support [t_k, t_{k+degree+1})"""
    if degree == 0:
        return 1.0 if knots[k] <= x < knots[k + 1] else 0.0
    value = 0.0
    left_span = knots[k + degree] - knots[k]
    if left_span > 0:
        value += (x - knots[k]) / left_span * cox_de_boor(knots, k, degree - 1, x)
    right_span = knots[k + degree + 1] - knots[k + 1]
    if right_span > 0:
        value += (knots[k + degree + 1] - x) / right_span * cox_de_boor(knots, k + 1, degree - 1, x)
    return value


def oracle_basis(grid: SplineGrid, x: float) -> np.ndarray:
    return np.array([cox_de_boor(grid.knots, k, grid.degree, x) for k in range(grid.n_basis)])


def build_network(rng: np.random.Generator, n_features: int = 2, hidden_width: int = 0,
                  base_kind: BaseKind = BaseKind.SILU, intervals: int = 5) -> KanNetwork:
    """Random network whose spline parts are large enough to matter"""
    normalizer = FeatureNormalizer(
        feature_names=[f"x{i + 1}" for i in range(n_features)],
        means=rng.normal(0.0, 1.0, n_features),
        stds=rng.uniform(0.5, 2.0, n_features),
        time_scale=2.0,
    )
    grids = [SplineGrid(-2.0, 2.0, intervals)] * n_features + [SplineGrid(0.0, 1.0, intervals)]
    net = initialize_network(normalizer, grids, hidden_width, base_kind, rng)
    for layer in net.layers:
        layer.coefficients[...] = rng.normal(0.0, 0.5, layer.coefficients.shape)
        layer.spline_weight[...] = rng.uniform(0.5, 1.5, layer.spline_weight.shape)
    return net


def constant_network(log_hazard: float, n_features: int = 1, time_scale: float = 1.0) -> KanNetwork:
    """Network whose output is log_hazard for every input"""
    normalizer = FeatureNormalizer(
        [f"x{i + 1}" for i in range(n_features)], np.zeros(n_features), np.ones(n_features), time_scale
    )
    grids = [SplineGrid(-1.0, 1.0, 3)] * n_features + [SplineGrid(0.0, 1.0, 3)]
    net = initialize_network(normalizer, grids, 0, BaseKind.SILU, np.random.default_rng(0))
    layer = net.layers[0]
    layer.base_weight[...] = 0.0
    layer.spline_weight[...] = 0.0
    layer.coefficients[...] = 0.0
    layer.spline_weight[0, -1] = 1.0
    layer.coefficients[0, -1, :] = log_hazard
    return net


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def network_factory():
    return build_network


@pytest.fixture
def small_network(rng):
    return build_network(rng, n_features=2, hidden_width=0)


@pytest.fixture
def synthetic_spec():
    return SyntheticSpec(
        n=200,
        features=[FeatureDistribution(), FeatureDistribution(kind="uniform", low=0.0, high=2.0)],
        linear=[0.6, -0.4],
        intercept=-0.5,
        censoring_target=0.3,
        seed=7,
    )


@pytest.fixture
def synthetic_data(synthetic_spec):
    dataset, _ = generate_synthetic(synthetic_spec)
    return dataset


@pytest.fixture
def csv_file(tmp_path) -> Path:
    path = tmp_path / "cohort.csv"
    path.write_text(
        "age,grade,time,event\n"
        "61,II,5.5,1\n"
        "47,III,12.0,0\n"
        "55,II,3.25,1\n",
        encoding="utf-8",
    )
    return path

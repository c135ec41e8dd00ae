import os

import numpy as np
import pytest

from src.models.dataset import ColumnKind, SurvivalDataset
from src.models.synthetic import FeatureDistribution, SyntheticSpec
from src.services.dataio import (
    align_columns,
    calibrate_censoring_rate,
    generate_synthetic,
    load_csv,
    stratified_folds,
    stratified_split,
    stratified_split_indices,
    write_csv,
)
from src.services.metrics import kaplan_meier
from src.utils.errors import CalibrationError, InvalidInputError, ParseError, StratificationError


def write(tmp_path, text: str, name: str = "data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def balanced_dataset(n: int, n_events: int) -> SurvivalDataset:
    return SurvivalDataset(
        features=np.arange(n, dtype=float).reshape(n, 1),
        times=np.arange(1, n + 1, dtype=float),
        events=[1] * n_events + [0] * (n - n_events),
        column_names=["x1"],
        column_kinds=[ColumnKind.NUMERIC],
    )


class TestLoadCsv:
    """Parsing and encoding of survival tables"""

    def test_numeric_and_text_columns(self, csv_file):
        data = load_csv(csv_file)
        assert data.n_rows == 3
        assert data.n_features == 2
        assert data.column_names == ["age", "grade_III"]
        assert data.column_kinds == [ColumnKind.NUMERIC, ColumnKind.ONE_HOT_LEVEL]
        np.testing.assert_array_equal(data.features[:, 1], [0.0, 1.0, 0.0])
        np.testing.assert_array_equal(data.times, [5.5, 12.0, 3.25])
        np.testing.assert_array_equal(data.events, [1, 0, 1])

    def test_custom_column_names(self, tmp_path):
        path = write(tmp_path, "duration,status,x\n1.0,1,0.5\n2.0,0,0.25\n")
        data = load_csv(path, time_column="duration", event_column="status")
        assert data.column_names == ["x"]

    def test_one_hot_levels_sum_to_at_most_one(self, tmp_path):
        path = write(tmp_path, "stage,time,event\nb,1,1\na,2,0\nc,3,1\nb,4,1\na,5,0\n")
        data = load_csv(path)
        assert data.column_names == ["stage_b", "stage_c"]
        assert np.all(data.features.sum(axis=1) <= 1.0)
        np.testing.assert_array_equal(data.features.sum(axis=1), [1.0, 0.0, 1.0, 1.0, 0.0])

    def test_non_binary_event_names_the_row(self, tmp_path):
        path = write(tmp_path, "x,time,event\n1,1.0,1\n2,2.0,2\n3,3.0,0\n")
        with pytest.raises(ParseError) as e:
            load_csv(path)
        assert e.value.rows == [3]
        assert "row(s) 3" in str(e.value)
        assert e.value.module == "dataio"

    @pytest.mark.parametrize("text", [
        "x,time\n1,2\n",
        "x,time,event\n1,-2.0,1\n",
        "x,time,event\n1,abc,1\n",
        "x,time,event\nNA,2.0,1\n",
        "x,time,event\n,2.0,1\n",
        "x,time,event\n1,2.0,1\nfoo,3.0,0\n",
    ])
    def test_rejected_files(self, tmp_path, text):
        with pytest.raises(ParseError):
            load_csv(write(tmp_path, text))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_csv(tmp_path / "absent.csv")

    def test_round_trip(self, tmp_path, synthetic_data):
        path = tmp_path / "round.csv"
        write_csv(synthetic_data, path)
        reloaded = load_csv(path)
        np.testing.assert_array_equal(reloaded.features, synthetic_data.features)
        np.testing.assert_array_equal(reloaded.times, synthetic_data.times)
        np.testing.assert_array_equal(reloaded.events, synthetic_data.events)
        assert reloaded.column_names == synthetic_data.column_names

    def test_written_values_reload_bit_for_bit(self, tmp_path, rng):
        data = SurvivalDataset(
            features=rng.normal(0.0, 1.0, (100, 4)) * 10.0 ** rng.integers(-3, 4, (100, 4)),
            times=rng.exponential(3.0, 100),
            events=rng.integers(0, 2, 100),
            column_names=[f"x{i + 1}" for i in range(4)],
            column_kinds=[ColumnKind.NUMERIC] * 4,
        )
        path = tmp_path / "dense.csv"
        write_csv(data, path)
        reloaded = load_csv(path)
        assert reloaded.features.tobytes() == data.features.tobytes()
        assert reloaded.times.tobytes() == data.times.tobytes()

    def test_literal_values_parse_like_float(self, tmp_path):
        path = write(tmp_path, "x,time,event\n0.1234567890123456789,2.2250738585072014e-308,1\n"
                               "9007199254740993,0.30000000000000004,0\n")
        data = load_csv(path)
        assert data.features[:, 0].tolist() == [float("0.1234567890123456789"), float("9007199254740993")]
        assert data.times.tolist() == [float("2.2250738585072014e-308"), float("0.30000000000000004")]

    @pytest.mark.skipif(not os.environ.get("HAZARD_KAN_GBSG2_CSV"), reason="GBSG2 table not configured")
    def test_gbsg2_table(self):
        data = load_csv(os.environ["HAZARD_KAN_GBSG2_CSV"],
                        os.environ.get("HAZARD_KAN_GBSG2_TIME", "time"),
                        os.environ.get("HAZARD_KAN_GBSG2_EVENT", "cens"))
        assert data.n_rows == 686
        assert data.event_rate == pytest.approx(0.44, abs=0.01)


class TestAlignColumns:

    def test_reorders_to_network_order(self, csv_file):
        data = align_columns(load_csv(csv_file), ["grade_III", "age"])
        assert data.column_names == ["grade_III", "age"]
        np.testing.assert_array_equal(data.features[:, 1], [61.0, 47.0, 55.0])

    def test_missing_column(self, csv_file):
        with pytest.raises(InvalidInputError):
            align_columns(load_csv(csv_file), ["age", "weight"])


class TestStratifiedSplit:
    """Event-preserving splits"""

    def test_exact_allocation(self):
        train, test = stratified_split(balanced_dataset(10, 5), 0.2, seed=3)
        assert test.n_rows == 2
        assert test.n_events == 1
        assert train.n_rows == 8

    def test_deterministic(self):
        events = np.random.default_rng(1).integers(0, 2, 300)
        first = stratified_split_indices(events, 0.2, 42)
        second = stratified_split_indices(events, 0.2, 42)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)

    def test_partition_of_rows(self):
        events = np.random.default_rng(2).integers(0, 2, 57)
        train, test = stratified_split_indices(events, 0.3, 0)
        assert np.intersect1d(train, test).size == 0
        np.testing.assert_array_equal(np.sort(np.concatenate([train, test])), np.arange(57))

    def test_event_rate_preserved(self):
        events = (np.random.default_rng(5).uniform(size=1000) < 0.43).astype(int)
        _, test = stratified_split_indices(events, 0.2, 11)
        assert abs(events[test].mean() - events.mean()) <= 0.005

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1, 1.5])
    def test_invalid_fraction(self, fraction):
        with pytest.raises(InvalidInputError):
            stratified_split(balanced_dataset(10, 5), fraction, 0)

    def test_stratum_too_small(self):
        with pytest.raises(StratificationError):
            stratified_split(balanced_dataset(10, 1), 0.2, 0)

    def test_folds(self):
        events = np.array([1, 0] * 10)
        folds = stratified_folds(events, 5, 0)
        assert len(folds) == 5
        for _, held_out in folds:
            assert events[held_out].sum() == 2
        with pytest.raises(InvalidInputError):
            stratified_folds(events, 1, 0)


class TestSyntheticGeneration:
    """Sampling from a known hazard"""

    def test_unit_exponential_mean(self):
        spec = SyntheticSpec(n=10000, features=[FeatureDistribution()], seed=0)
        data, _ = generate_synthetic(spec)
        assert data.n_events == 10000
        assert abs(data.times.mean() - 1.0) < 0.03

    def test_weibull_tracks_kaplan_meier(self):
        spec = SyntheticSpec(n=20000, features=[FeatureDistribution()], intercept=float(np.log(2.0)),
                             log_time_coefficient=1.0, seed=4)
        data, truth = generate_synthetic(spec)
        grid = np.linspace(0.0, 2.0, 201)
        estimate = kaplan_meier(data.times, data.events)(grid)
        assert np.max(np.abs(estimate - np.exp(-grid ** 2))) < 0.02
        np.testing.assert_allclose(truth(np.zeros((1, 1)), grid), np.exp(-grid ** 2), rtol=1e-12)

    def test_inversion_hits_the_cumulative_hazard(self, synthetic_spec):
        spec = synthetic_spec.model_copy(update={"censoring_target": 0.0})
        data, truth = generate_synthetic(spec)
        rng = np.random.default_rng(spec.seed)
        rng.normal(size=spec.n)
        rng.uniform(0.0, 2.0, size=spec.n)
        targets = rng.exponential(1.0, size=spec.n)
        np.testing.assert_allclose(truth.cumulative_hazard(data.features, data.times), targets, rtol=1e-8, atol=1e-8)

    def test_censoring_target(self):
        spec = SyntheticSpec(n=20000, features=[FeatureDistribution()], linear=[0.5],
                             censoring_target=0.3, seed=9)
        data, _ = generate_synthetic(spec)
        assert abs((1.0 - data.event_rate) - 0.3) < 0.02

    def test_deterministic(self, synthetic_spec):
        first, _ = generate_synthetic(synthetic_spec)
        second, _ = generate_synthetic(synthetic_spec)
        np.testing.assert_array_equal(first.times, second.times)
        np.testing.assert_array_equal(first.events, second.events)

    def test_unattainable_censoring(self):
        with pytest.raises(CalibrationError):
            calibrate_censoring_rate(np.zeros(5), 0.3)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SyntheticSpec(n=10, features=[FeatureDistribution()], linear=[1.0, 2.0])
        with pytest.raises(ValueError):
            SyntheticSpec(n=10, time_coefficient=1.0, log_time_coefficient=0.5)
        with pytest.raises(ValueError):
            SyntheticSpec(n=10, censoring_target=1.0)

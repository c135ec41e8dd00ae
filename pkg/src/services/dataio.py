"""
Dataset ingestion, export, stratified splitting and synthetic generation.
"""

import logging
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.model_selection import StratifiedKFold, train_test_split

from src.config.settings import settings
from src.models.dataset import ColumnKind, SurvivalDataset
from src.models.evaluation import SurvivalCurve
from src.models.synthetic import DistributionKind, SyntheticSpec
from src.utils.errors import CalibrationError, InvalidInputError, ParseError, StratificationError

logger = logging.getLogger(__name__)

MISSING_TOKENS = {"", "na", "nan", "null", "none"}
HEADER_ROWS = 1
BISECTION_TOLERANCE = 1e-10
MAX_SEED = 2 ** 32


def _file_rows(mask: np.ndarray) -> List[int]:
    """1-based file line numbers of flagged data rows (line 1 is the header)"""
    return [int(i) + HEADER_ROWS + 1 for i in np.flatnonzero(mask)]


def _to_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return np.nan


def _parse_numeric(values: pd.Series) -> pd.Series:
    """Correctly rounded parse of every cell; unparseable or non-finite cells become NaN"""
    parsed = values.map(_to_float).astype(float)
    return parsed.where(np.isfinite(parsed))


def load_csv(path: Union[str, Path], time_column: str = "time", event_column: str = "event") -> SurvivalDataset:
    """
    Load a comma-delimited survival table.

    Numeric columns become features as-is; text columns are one-hot encoded
    with the lexicographically first level dropped as reference.

    Args:
        path: CSV file with a header row
        time_column: Name of the observed-time column
        event_column: Name of the event indicator column (1 event, 0 censored)

    Returns:
        SurvivalDataset
    """
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"data file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8", skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ParseError(f"could not read {path}: {e}")

    frame.columns = [str(c).strip() for c in frame.columns]
    absent = [c for c in (time_column, event_column) if c not in frame.columns]
    if absent:
        raise ParseError(f"missing required column(s): {', '.join(absent)}")

    cells = frame.apply(lambda column: column.str.strip())
    missing = cells.apply(lambda column: column.str.lower().isin(MISSING_TOKENS)).any(axis=1).to_numpy()
    if missing.any():
        raise ParseError("missing values", rows=_file_rows(missing))

    times = _parse_numeric(cells[time_column])
    if times.isna().any():
        raise ParseError(f"unparseable values in '{time_column}'", rows=_file_rows(times.isna().to_numpy()))
    if (times < 0).any():
        raise ParseError(f"negative times in '{time_column}'", rows=_file_rows((times < 0).to_numpy()))

    events = _parse_numeric(cells[event_column])
    bad_events = events.isna() | ~events.isin([0, 1])
    if bad_events.any():
        raise ParseError(f"event indicators must be 0 or 1 in '{event_column}'", rows=_file_rows(bad_events.to_numpy()))

    columns, names, kinds = [], [], []
    for name in frame.columns:
        if name in (time_column, event_column):
            continue
        parsed = _parse_numeric(cells[name])
        if parsed.notna().all():
            columns.append(parsed.to_numpy(dtype=float))
            names.append(name)
            kinds.append(ColumnKind.NUMERIC)
        elif parsed.notna().any():
            raise ParseError(f"unparseable numeric values in '{name}'", rows=_file_rows(parsed.isna().to_numpy()))
        else:
            levels = sorted(cells[name].unique())
            for level in levels[1:]:
                columns.append((cells[name] == level).to_numpy(dtype=float))
                names.append(f"{name}_{level}")
                kinds.append(ColumnKind.ONE_HOT_LEVEL)
            logger.debug(f"Encoded '{name}' into {len(levels) - 1} indicator(s), reference '{levels[0]}'")

    features = np.column_stack(columns) if columns else np.zeros((len(frame), 0))
    dataset = SurvivalDataset(
        features=features,
        times=times.to_numpy(dtype=float),
        events=events.to_numpy(dtype=float),
        column_names=names,
        column_kinds=kinds,
    )
    logger.info(
        f"Loaded {dataset.n_rows} rows with {dataset.n_features} feature columns from {path} "
        f"(event rate {dataset.event_rate:.3f})"
    )
    return dataset


def write_csv(dataset: SurvivalDataset, path: Union[str, Path],
              time_column: str = "time", event_column: str = "event"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dataset.to_frame(time_column, event_column).to_csv(path, index=False, float_format=settings.float_format)
    logger.info(f"Wrote {dataset.n_rows} rows to {path}")


def stratified_split_indices(events: np.ndarray, test_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    if not 0.0 < test_fraction < 1.0:
        raise InvalidInputError(f"test fraction must lie in (0, 1), got {test_fraction}", module="dataio")
    indices = np.arange(len(events))
    try:
        train_idx, test_idx = train_test_split(
            indices, test_size=test_fraction, stratify=events, random_state=seed % MAX_SEED
        )
    except ValueError as e:
        raise StratificationError(f"cannot stratify {len(events)} rows at fraction {test_fraction}: {e}", module="dataio")
    if train_idx.size == 0 or test_idx.size == 0:
        raise StratificationError("a split side is empty", module="dataio")
    return np.sort(train_idx), np.sort(test_idx)


def stratified_split(data: SurvivalDataset, test_fraction: float, seed: int) -> Tuple[SurvivalDataset, SurvivalDataset]:
    """Split rows so both sides keep the event rate of the whole dataset"""
    train_idx, test_idx = stratified_split_indices(data.events, test_fraction, seed)
    return data.subset(train_idx), data.subset(test_idx)


def stratified_folds(events: np.ndarray, folds: int, seed: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    if folds < 2:
        raise InvalidInputError(f"cross-validation needs at least 2 folds, got {folds}", module="dataio")
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed % MAX_SEED)
    try:
        return list(splitter.split(np.zeros((len(events), 1)), events))
    except ValueError as e:
        raise StratificationError(f"cannot build {folds} stratified folds: {e}", module="dataio")


# Synthetic data


class TrueSurvival:
    """Exact hazard, cumulative hazard and survival of a synthetic spec"""

    def __init__(self, spec: SyntheticSpec):
        self.spec = spec

    def risk(self, features) -> np.ndarray:
        """Time-independent part of the log-hazard for each row"""
        features = np.atleast_2d(np.asarray(features, dtype=float))
        spec = self.spec
        eta = np.full(features.shape[0], spec.intercept)
        if spec.linear:
            eta = eta + features @ np.asarray(spec.linear)
        for term in spec.sqrt_terms:
            argument = term.scale * features[:, term.feature] + term.shift
            if np.any(argument < 0):
                raise InvalidInputError(
                    f"sqrt term on feature {term.feature} has a negative argument", module="dataio"
                )
            eta = eta + term.weight * np.sqrt(argument)
        for term in spec.sin_terms:
            eta = eta + term.weight * np.sin(term.frequency * features[:, term.feature] + term.phase)
        return eta

    def _time_integral(self, times: np.ndarray) -> np.ndarray:
        """Integral of the time factor of the hazard over [0, t]"""
        spec = self.spec
        if spec.log_time_coefficient != 0.0:
            rho = spec.log_time_coefficient
            return np.power(times, rho + 1.0) / (rho + 1.0)
        if spec.time_coefficient != 0.0:
            rate = spec.time_coefficient / spec.time_scale
            return np.expm1(rate * times) / rate
        return times

    def log_hazard(self, features, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        spec = self.spec
        value = self.risk(features) + spec.time_coefficient * times / spec.time_scale
        if spec.log_time_coefficient != 0.0:
            with np.errstate(divide="ignore"):
                value = value + spec.log_time_coefficient * np.log(times)
        return value

    def hazard(self, features, times) -> np.ndarray:
        return np.exp(self.log_hazard(features, times))

    def cumulative_hazard(self, features, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        return np.exp(self.risk(features)) * self._time_integral(times)

    def __call__(self, features, times) -> np.ndarray:
        return np.exp(-self.cumulative_hazard(features, times))

    def curves(self, feature_rows, grid) -> List[SurvivalCurve]:
        grid = np.asarray(grid, dtype=float)
        eta = np.exp(self.risk(feature_rows))
        base = self._time_integral(grid)
        return [SurvivalCurve(times=grid, survival=np.exp(-e * base)) for e in eta]


def _sample_features(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    columns = []
    for distribution in spec.features:
        if distribution.kind == DistributionKind.UNIFORM:
            columns.append(rng.uniform(distribution.low, distribution.high, size=spec.n))
        else:
            columns.append(rng.normal(distribution.mean, distribution.std, size=spec.n))
    return np.column_stack(columns) if columns else np.zeros((spec.n, 0))


def invert_cumulative_hazard(truth: TrueSurvival, features: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Solve H(t | x_i) = targets_i for t by vectorized bisection"""
    scale = truth.spec.time_scale
    lower = np.zeros(targets.shape[0])
    upper = np.full(targets.shape[0], scale)
    for _ in range(200):
        short = truth.cumulative_hazard(features, upper) < targets
        if not short.any():
            break
        upper = np.where(short, upper * 2.0, upper)
    else:
        raise CalibrationError("event times could not be bracketed; the hazard is too small", module="dataio")
    for _ in range(400):
        if np.all(upper - lower <= BISECTION_TOLERANCE * np.maximum(1.0, upper)):
            break
        middle = 0.5 * (lower + upper)
        below = truth.cumulative_hazard(features, middle) < targets
        lower = np.where(below, middle, lower)
        upper = np.where(below, upper, middle)
    return 0.5 * (lower + upper)


def calibrate_censoring_rate(event_times: np.ndarray, target: float) -> float:
    """
    Exponential censoring rate r whose expected censored fraction
    mean(1 - exp(-r * T_i)) equals the target.
    """
    def fraction(rate: float) -> float:
        return float(np.mean(-np.expm1(-rate * event_times)))

    scale = float(np.mean(event_times)) or 1.0
    low, high = 1e-12 / scale, 1e12 / scale
    if fraction(high) < target:
        raise CalibrationError(
            f"censoring target {target} is unattainable (at most {fraction(high):.4f})", module="dataio"
        )
    for _ in range(300):
        middle = np.sqrt(low * high)
        if fraction(middle) < target:
            low = middle
        else:
            high = middle
        if high / low - 1.0 < BISECTION_TOLERANCE:
            break
    return float(np.sqrt(low * high))


def generate_synthetic(spec: SyntheticSpec) -> Tuple[SurvivalDataset, TrueSurvival]:
    """
    Draw a right-censored dataset from a known hazard.

    Event times come from inverse-transform sampling, H(T | x) = E with
    E ~ Exp(1); censoring times are exponential with a rate calibrated so
    the expected censored fraction matches the requested target.
    """
    rng = np.random.default_rng(spec.seed)
    truth = TrueSurvival(spec)
    features = _sample_features(spec, rng)
    targets = rng.exponential(1.0, size=spec.n)
    event_times = invert_cumulative_hazard(truth, features, targets)

    if spec.censoring_target == 0.0:
        censor_times = np.full(spec.n, np.inf)
    else:
        rate = calibrate_censoring_rate(event_times, spec.censoring_target)
        censor_times = rng.exponential(1.0 / rate, size=spec.n)
        logger.debug(f"Calibrated censoring rate {rate:.6g} for target {spec.censoring_target}")

    observed = np.minimum(event_times, censor_times)
    events = (event_times <= censor_times).astype(int)
    dataset = SurvivalDataset(
        features=features,
        times=observed,
        events=events,
        column_names=spec.names,
        column_kinds=[ColumnKind.NUMERIC] * len(spec.features),
    )
    logger.info(
        f"Generated {spec.n} synthetic subjects with {len(spec.features)} features, "
        f"{1.0 - dataset.event_rate:.3f} censored"
    )
    return dataset, truth


def align_columns(data: SurvivalDataset, names: Sequence[str]) -> SurvivalDataset:
    """Restrict and reorder feature columns to the ones a trained network expects"""
    try:
        return data.select_columns(names)
    except KeyError as e:
        raise InvalidInputError(str(e.args[0]), module="dataio")

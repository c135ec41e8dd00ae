"""
Repeated hold-out benchmark: seeded stratified train/test splits, an
optional random search per repeat, and mean C-index / IBS with 95%
Student-t confidence half-widths.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd
from scipy import stats
from tqdm import tqdm

from src.config.settings import settings
from src.models.dataset import SurvivalDataset
from src.models.training import SearchSpace, TrainConfig
from src.services.dataio import stratified_split
from src.services.metrics import evaluate
from src.services.training import fit, random_search
from src.utils.errors import InvalidInputError

logger = logging.getLogger(__name__)

DEFAULT_REPEATS = 5
DEFAULT_TEST_FRACTION = 0.2
CONFIDENCE = 0.95


@dataclass
class RepeatResult:
    repeat: int
    seed: int
    c_index: float
    ibs: float
    config: TrainConfig
    stopping_epoch: int


@dataclass
class BenchmarkSummary:
    repeats: List[RepeatResult] = field(default_factory=list)

    def _interval(self, values: np.ndarray):
        mean = float(np.mean(values))
        if values.size < 2:
            return mean, 0.0
        sem = float(np.std(values, ddof=1) / np.sqrt(values.size))
        return mean, float(stats.t.ppf(0.5 + CONFIDENCE / 2, df=values.size - 1) * sem)

    @property
    def c_index(self):
        """(mean, 95% half-width)"""
        return self._interval(np.array([r.c_index for r in self.repeats]))

    @property
    def ibs(self):
        return self._interval(np.array([r.ibs for r in self.repeats]))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.repeat, r.seed, r.c_index, r.ibs, r.stopping_epoch) for r in self.repeats],
            columns=["repeat", "seed", "c_index", "ibs", "stopping_epoch"],
        )

    def display_values(self) -> dict:
        """Summary scaled by 100, the way results tables report them"""
        c_mean, c_half = self.c_index
        ibs_mean, ibs_half = self.ibs
        return {
            "repeats": len(self.repeats),
            "c_index_mean": 100.0 * c_mean,
            "c_index_ci95": 100.0 * c_half,
            "ibs_mean": 100.0 * ibs_mean,
            "ibs_ci95": 100.0 * ibs_half,
        }


def _run_repeat(repeat: int, data: SurvivalDataset, config: TrainConfig, seed: int, test_fraction: float,
                search_space: Optional[SearchSpace], trials: int, folds: int) -> RepeatResult:
    train, test = stratified_split(data, test_fraction, seed)
    chosen = config
    if search_space is not None:
        chosen = random_search(train, search_space, trials, folds, seed, base_config=config)
    net, report = fit(train, chosen)
    result = evaluate(net, test, train, chosen)
    logger.info(f"Repeat {repeat} (seed {seed}): C-index {result.c_index:.4f}, IBS {result.ibs:.4f}")
    return RepeatResult(repeat, seed, result.c_index, result.ibs, chosen, report.stopping_epoch)


def run_benchmark(
    data: SurvivalDataset,
    config: Optional[TrainConfig] = None,
    repeats: int = DEFAULT_REPEATS,
    seed: int = 0,
    test_fraction: float = DEFAULT_TEST_FRACTION,
    search_space: Optional[SearchSpace] = None,
    trials: int = 25,
    folds: int = 5,
) -> BenchmarkSummary:
    """
    Evaluate the model over repeated stratified hold-out splits.

    Args:
        data: Full dataset
        config: Base training configuration
        repeats: Number of hold-out splits (split seeds seed, seed+1, ...)
        seed: First split seed
        test_fraction: Share of rows held out per repeat
        search_space: When given, a random search picks the configuration on each training portion
        trials: Search trials per repeat
        folds: Cross-validation folds per search trial

    Returns:
        BenchmarkSummary with per-repeat scores
    """
    if repeats < 1:
        raise InvalidInputError(f"repeats must be at least 1, got {repeats}", module="benchmark")
    if not 0.0 < test_fraction < 1.0:
        raise InvalidInputError(f"test fraction must lie in (0, 1), got {test_fraction}", module="benchmark")
    config = config or TrainConfig()
    workers = 1 if search_space is not None else settings.threads

    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [
            executor.submit(_run_repeat, r, data, config, seed + r, test_fraction, search_space, trials, folds)
            for r in range(repeats)
        ]
        results = [f.result() for f in tqdm(futures, desc="benchmark", disable=not settings.show_progress)]

    summary = BenchmarkSummary(repeats=results)
    c_mean, c_half = summary.c_index
    ibs_mean, ibs_half = summary.ibs
    logger.info(
        f"Benchmark over {repeats} repeats: C-index {c_mean:.4f} +/- {c_half:.4f}, IBS {ibs_mean:.4f} +/- {ibs_half:.4f}"
    )
    return summary

import argparse
from pathlib import Path

from src.config.settings import settings
from src.models.training import SearchObjective
from src.services.benchmark import DEFAULT_REPEATS, DEFAULT_TEST_FRACTION
from src.services.hazard_model import DEFAULT_INTEGRATION_POINTS
from src.services.interpret import DEFAULT_PRUNE_THRESHOLD


def _add_columns(parser: argparse.ArgumentParser):
    parser.add_argument("--time-col", default="time", help="Observed time column (default: time)")
    parser.add_argument("--event-col", default="event", help="Event indicator column (default: event)")


def _add_integration(parser: argparse.ArgumentParser):
    parser.add_argument("--integration-k", type=int, default=DEFAULT_INTEGRATION_POINTS,
                        help="Trapezoid points per integration interval")


def _add_training_overrides(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, help="YAML or JSON training configuration")
    parser.add_argument("--seed", type=int, help="Training seed")
    parser.add_argument("--epochs", type=int, help="Maximum training epochs")
    parser.add_argument("--lambda", dest="lambda_reg", type=float, help="Regularization strength")
    parser.add_argument("--hidden", dest="hidden_width", type=int, help="Hidden width m (0 means no hidden layer)")
    parser.add_argument("--grid", dest="grid_intervals", type=int, help="Spline grid intervals G")
    parser.add_argument("--learning-rate", type=float, help="Adam learning rate")
    parser.add_argument("--weight-decay", type=float, help="Decoupled weight decay per step")
    parser.add_argument("--batch-size", type=int, help="Mini-batch size (full batch when omitted)")
    parser.add_argument("--base", dest="base_kind", choices=["silu", "identity"], help="Base function of every edge")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hazard-kan",
        description=f"{settings.app_name}: time-continuous survival models on Kolmogorov-Arnold networks",
    )
    parser.add_argument("--log-level", default=None, help="Override the configured log level")
    subparsers = parser.add_subparsers(dest="command", required=True)

    train = subparsers.add_parser("train", help="Fit a network on a dataset")
    train.add_argument("--data", type=Path, required=True)
    _add_columns(train)
    train.add_argument("--out-model", type=Path, required=True)
    train.add_argument("--out-report", type=Path, help="Training report (default: next to the model)")
    _add_training_overrides(train)

    evaluate = subparsers.add_parser("eval", help="C-index and IBS of a model on a test set")
    evaluate.add_argument("--data", type=Path, required=True)
    evaluate.add_argument("--model", type=Path, required=True)
    evaluate.add_argument("--train-data", type=Path, required=True,
                          help="Training data supplying the censoring distribution")
    _add_columns(evaluate)
    _add_integration(evaluate)
    evaluate.add_argument("--out-report", type=Path)

    predict = subparsers.add_parser("predict", help="Survival curves on a time grid")
    predict.add_argument("--data", type=Path, required=True)
    predict.add_argument("--model", type=Path, required=True)
    _add_columns(predict)
    predict.add_argument("--grid-start", type=float)
    predict.add_argument("--grid-end", type=float)
    predict.add_argument("--grid-points", type=int)
    predict.add_argument("--times", help="Explicit comma-separated grid, instead of start/end/points")
    predict.add_argument("--hazard", action="store_true", help="Also export h(t | x) on the grid")
    _add_integration(predict)
    predict.add_argument("--out", type=Path, required=True)

    interpret = subparsers.add_parser("interpret", help="Prune a model and extract its symbolic formula")
    interpret.add_argument("--model", type=Path, required=True)
    interpret.add_argument("--data", type=Path, required=True)
    _add_columns(interpret)
    interpret.add_argument("--prune-threshold", type=float, default=DEFAULT_PRUNE_THRESHOLD)
    interpret.add_argument("--points", type=int, default=100, help="Samples per exported edge")
    interpret.add_argument("--no-formula", action="store_true", help="Skip symbolic extraction")
    interpret.add_argument("--out-dir", type=Path, required=True)

    plot_export = subparsers.add_parser("plot-export", help="Sample edge functions for plotting")
    plot_export.add_argument("--model", type=Path, required=True)
    plot_export.add_argument("--edge", action="append", required=True,
                             help="Input name or layer:output:input (repeatable)")
    plot_export.add_argument("--points", type=int, default=100)
    plot_export.add_argument("--out-dir", type=Path, required=True)

    synth = subparsers.add_parser("synth", help="Generate a synthetic dataset")
    synth.add_argument("--spec", type=Path, required=True)
    synth.add_argument("--out", type=Path, required=True)
    _add_columns(synth)

    search = subparsers.add_parser("search", help="Random search over training configurations")
    search.add_argument("--data", type=Path, required=True)
    _add_columns(search)
    search.add_argument("--space", type=Path, help="Search space file (default ranges when omitted)")
    search.add_argument("--config", type=Path, help="Base training configuration")
    search.add_argument("--trials", type=int, default=25)
    search.add_argument("--folds", type=int, default=5)
    search.add_argument("--seed", type=int, default=0)
    search.add_argument("--objective", choices=[o.value for o in SearchObjective])
    search.add_argument("--out-config", type=Path, required=True)
    search.add_argument("--out-trials", type=Path)

    benchmark = subparsers.add_parser("benchmark", help="Repeated stratified hold-out evaluation")
    benchmark.add_argument("--data", type=Path, required=True)
    _add_columns(benchmark)
    benchmark.add_argument("--config", type=Path)
    benchmark.add_argument("--repeats", type=int, default=DEFAULT_REPEATS)
    benchmark.add_argument("--seed", type=int, default=0)
    benchmark.add_argument("--test-fraction", type=float, default=DEFAULT_TEST_FRACTION)
    benchmark.add_argument("--search", action="store_true", help="Run a random search on every training portion")
    benchmark.add_argument("--space", type=Path)
    benchmark.add_argument("--trials", type=int, default=25)
    benchmark.add_argument("--folds", type=int, default=5)
    benchmark.add_argument("--out-report", type=Path, required=True)

    return parser

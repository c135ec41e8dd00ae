"""
Subcommand handlers. Each handler reads its inputs, calls the engine and
writes its artifacts; `run` maps engine errors to exit status 2.
"""

import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import orjson
import pandas as pd
import yaml

from src.cli.parser import build_parser
from src.config.loader import (
    default_search_space,
    load_search_space,
    load_synthetic_spec,
    load_train_config,
)
from src.config.settings import settings
from src.models.training import SearchObjective, TrainConfig
from src.services.benchmark import run_benchmark
from src.services.dataio import align_columns, generate_synthetic, load_csv, write_csv
from src.services.hazard_model import hazard_curve, survival_curves
from src.services.interpret import (
    attribute,
    export_edge_samples,
    extract_formula,
    feature_importance_frame,
    prune,
    pruned_edge_summary,
    resolve_edge,
)
from src.services.metrics import evaluate
from src.services.serialization import (
    load_network,
    save_config,
    save_network,
    save_symbolic_model,
    write_frame,
    write_key_values,
)
from src.services.training import fit, run_search
from src.utils.errors import HazardKanError, InvalidInputError
from src.utils.logging import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 2


def _format(value) -> str:
    return settings.float_format % value if isinstance(value, float) else str(value)


def _print_values(values: Dict[str, object]):
    for key, value in values.items():
        print(f"{key}={_format(value)}")


def _training_overrides(args) -> Dict[str, object]:
    names = ("seed", "epochs", "lambda_reg", "hidden_width", "grid_intervals",
             "learning_rate", "weight_decay", "batch_size", "base_kind")
    return {name: getattr(args, name) for name in names}


def cmd_train(args) -> int:
    config = load_train_config(args.config, _training_overrides(args))
    data = load_csv(args.data, args.time_col, args.event_col)
    net, report = fit(data, config)
    logger.info(f"Trained network: {net.describe()}")

    save_network(net, args.out_model)
    report_path = args.out_report or args.out_model.with_name(f"{args.out_model.stem}.report.json")
    payload = {
        "config": config.model_dump(mode="json"),
        "report": report.model_dump(mode="json", exclude={"duration_seconds"}),
    }
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_bytes(orjson.dumps(payload, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS) + b"\n")

    last = report.history[-1] if report.history else None
    _print_values({
        "stopping_epoch": report.stopping_epoch,
        "best_epoch": report.best_epoch,
        "val_nll": last.val_nll if last else float("nan"),
    })
    return EXIT_OK


def cmd_eval(args) -> int:
    net = load_network(args.model)
    test = load_csv(args.data, args.time_col, args.event_col)
    train = load_csv(args.train_data, args.time_col, args.event_col)
    test = align_columns(test, net.normalizer.feature_names)
    train = align_columns(train, net.normalizer.feature_names)
    report = evaluate(net, test, train, TrainConfig(integration_k=args.integration_k))
    values = report.display_values()
    if args.out_report:
        write_key_values(values, args.out_report)
    _print_values(values)
    return EXIT_OK


def _prediction_grid(args) -> np.ndarray:
    ranged = (args.grid_start, args.grid_end, args.grid_points)
    if args.times is not None:
        if any(v is not None for v in ranged):
            raise InvalidInputError("--times cannot be combined with --grid-start/--grid-end/--grid-points",
                                    module="cli")
        try:
            return np.array([float(v) for v in args.times.split(",")])
        except ValueError:
            raise InvalidInputError(f"cannot parse --times '{args.times}'", module="cli")
    if any(v is None for v in ranged):
        raise InvalidInputError("predict needs --times or all of --grid-start, --grid-end and --grid-points",
                                module="cli")
    if args.grid_points < 1:
        raise InvalidInputError(f"--grid-points must be at least 1, got {args.grid_points}", module="cli")
    if args.grid_points == 1:
        return np.array([args.grid_start])
    return np.linspace(args.grid_start, args.grid_end, args.grid_points)


def cmd_predict(args) -> int:
    grid = _prediction_grid(args)
    net = load_network(args.model)
    data = load_csv(args.data, args.time_col, args.event_col)
    features = align_columns(data, net.normalizer.feature_names).features
    curves = survival_curves(net, features, grid, args.integration_k)

    columns = {
        "subject": np.repeat(np.arange(len(curves)), grid.size),
        "time": np.tile(grid, len(curves)),
        "survival": np.concatenate([curve.survival for curve in curves]) if curves else np.zeros(0),
    }
    if args.hazard:
        columns["hazard"] = (
            np.concatenate([hazard_curve(net, row, grid) for row in features]) if curves else np.zeros(0)
        )
    columns["extrapolated"] = np.repeat([curve.extrapolated for curve in curves], grid.size).astype(bool)
    write_frame(pd.DataFrame(columns), args.out)
    logger.info(f"Wrote {len(curves)} survival curves on {grid.size} grid points to {args.out}")
    return EXIT_OK


def _edge_file(out_dir: Path, layer: int, output_index: int, input_index: int) -> Path:
    return out_dir / "edges" / f"edge_{layer}_{output_index}_{input_index}.csv"


def cmd_interpret(args) -> int:
    net = load_network(args.model)
    data = load_csv(args.data, args.time_col, args.event_col)
    inputs = net.normalizer.transform(align_columns(data, net.normalizer.feature_names).features, data.times)
    out_dir = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    write_frame(feature_importance_frame(attribute(net, inputs), net), out_dir / "importance.csv")
    pruned = prune(net, inputs, args.prune_threshold)
    removed = pruned_edge_summary(net, pruned)
    logger.info(f"Pruned network: {pruned.describe()}; inputs without surviving edges: {removed}")
    save_network(pruned, out_dir / "pruned_model.json")

    for layer_index, layer in enumerate(pruned.layers):
        for output_index, input_index in zip(*np.nonzero(layer.mask)):
            selector = (layer_index, int(output_index), int(input_index))
            write_frame(export_edge_samples(pruned, selector, args.points), _edge_file(out_dir, *selector))

    if not args.no_formula:
        model = extract_formula(pruned, inputs)
        (out_dir / "formula.txt").write_text(
            f"{model.render()}\nfidelity_r2={_format(model.fidelity)}\n", encoding="utf-8"
        )
        save_symbolic_model(model, out_dir / "formula.json")
        print(model.render())
        print(f"fidelity_r2={_format(model.fidelity)}")
    return EXIT_OK


def cmd_plot_export(args) -> int:
    net = load_network(args.model)
    for selector in args.edge:
        frame = export_edge_samples(net, selector, args.points)
        write_frame(frame, _edge_file(args.out_dir, *resolve_edge(net, selector)))
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = load_synthetic_spec(args.spec)
    dataset, _ = generate_synthetic(spec)
    write_csv(dataset, args.out, args.time_col, args.event_col)
    spec_path = args.out.with_name(f"{args.out.stem}.spec.yaml")
    spec_path.write_text(yaml.safe_dump(spec.model_dump(mode="json"), sort_keys=True), encoding="utf-8")
    _print_values({"rows": dataset.n_rows, "events": dataset.n_events, "event_rate": dataset.event_rate})
    return EXIT_OK


def cmd_search(args) -> int:
    space = load_search_space(args.space) if args.space else default_search_space()
    if args.objective:
        space = space.model_copy(update={"objective": SearchObjective(args.objective)})
    base = load_train_config(args.config)
    data = load_csv(args.data, args.time_col, args.event_col)
    outcome = run_search(data, space, args.trials, args.folds, args.seed, base)
    save_config(outcome.best.config, args.out_config)
    if args.out_trials:
        rows = [
            {"trial": t.index, "score": t.score, **t.overrides, "error": t.error or ""}
            for t in outcome.trials
        ]
        write_frame(pd.DataFrame(rows), args.out_trials)
    _print_values({"best_trial": outcome.best.index, f"best_{outcome.objective.value}": outcome.best.score})
    return EXIT_OK


def cmd_benchmark(args) -> int:
    config = load_train_config(args.config)
    space = None
    if args.search:
        space = load_search_space(args.space) if args.space else default_search_space()
    data = load_csv(args.data, args.time_col, args.event_col)
    summary = run_benchmark(
        data, config, repeats=args.repeats, seed=args.seed, test_fraction=args.test_fraction,
        search_space=space, trials=args.trials, folds=args.folds,
    )
    values = summary.display_values()
    write_key_values(values, args.out_report)
    write_frame(summary.to_frame(), args.out_report.with_name(f"{args.out_report.stem}_repeats.csv"))
    _print_values(values)
    return EXIT_OK


COMMANDS: Dict[str, Callable] = {
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "interpret": cmd_interpret,
    "plot-export": cmd_plot_export,
    "synth": cmd_synth,
    "search": cmd_search,
    "benchmark": cmd_benchmark,
}


def run(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments and run one subcommand.

    Returns:
        0 on success, 2 on any engine or usage error
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_ERROR
    setup_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except HazardKanError as e:
        print(f"error [{e.module}]: {e}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as e:
        print(f"error [cli]: {e}", file=sys.stderr)
        return EXIT_ERROR

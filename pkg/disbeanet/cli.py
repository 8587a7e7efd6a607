import sys
import argparse
import logging
from pathlib import Path
from typing import Optional, Sequence

from rich.console import Console
from rich.table import Table
from rich.text import Text

from . import __version__
from .config import PipelineConfig
from .core import (
    setup_logging,
    format_exception,
    run_synth,
    run_train,
    run_track_predict,
    run_georef,
    run_eval,
    TrainOutcome,
)
from .errors import ConfigError, DisBeaNetError
from .evaluation import EvalReport
from .geodesy import format_point

logger = logging.getLogger("disbeanet.cli")


def parse_depths(text: str) -> list[int]:
    """Parse a comma separated depth list such as ``1,2,3,5,20``."""
    try:
        depths = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigError(f"invalid depth list {text!r}") from e
    if not depths or any(d < 1 for d in depths):
        raise ConfigError(f"depth list must hold positive integers, got {text!r}")
    return depths


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="disbeanet",
        description="disbeanet - estimate vessel distance and bearing from camera detections."
    )
    parser.add_argument("--version", action="store_true", help="Show disbeanet version and exit.")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="Pipeline config file (JSON).")
    common.add_argument("--out-dir", help="Directory for default input and output files.")
    common.add_argument("--seed", type=int, help="Random seed (overrides config and DISBEANET_SEED).")
    common.add_argument("-v", "--verbose", action="store_true", help="More logs.")
    common.add_argument("-q", "--quiet", action="store_true", help="No logs, only results.")
    common.add_argument("--no-progress", action="store_true", help="Disable progress bar.")

    commands = parser.add_subparsers(dest="command")
    synth = commands.add_parser("synth", parents=[common], help="Generate a synthetic recording.")
    synth.add_argument("--scenario", "-s", help="Scenario file (JSON); defaults to the config's scenario.")

    train = commands.add_parser("train", parents=[common], help="Train the distance/bearing network.")
    train.add_argument("--epochs", type=int)
    train.add_argument("--depth", type=int, help="Number of hidden layers.")
    train.add_argument("--width", type=int, help="Units per hidden layer.")
    train.add_argument("--lr", type=float, dest="learning_rate")
    train.add_argument("--optimizer", choices=["sgd", "adam"])
    train.add_argument("--activation", choices=["tanh", "relu"])
    train.add_argument("--bearing-encoding", choices=["degrees", "sincos"])
    train.add_argument("--sweep", help="Also train one model per hidden depth, e.g. 1,2,3,5,20.")

    commands.add_parser("track-predict", parents=[common], help="Track detections and predict distance/bearing.")
    commands.add_parser("georef", parents=[common], help="Convert predictions to latitude/longitude tracks.")
    commands.add_parser("eval", parents=[common], help="Compare predictions with ground truth.")
    return parser


def load_config(args) -> PipelineConfig:
    config = PipelineConfig.load(args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out_dir is not None:
        updates["paths"] = config.paths.model_copy(update={"out_dir": Path(args.out_dir)})
    if updates:
        config = config.model_copy(update=updates)
    if args.command == "train":
        config = config.with_overrides(
            epochs=args.epochs,
            depth=args.depth,
            width=args.width,
            learning_rate=args.learning_rate,
            optimizer=args.optimizer,
            activation=args.activation,
            bearing_encoding=args.bearing_encoding,
        )
    return config


def cmd_synth(config: PipelineConfig, scenario_path: Optional[str], console: Console) -> int:
    scenario_path = scenario_path or config.scenario
    if scenario_path is None:
        raise ConfigError("no scenario given: use --scenario or set 'scenario' in the config")
    outputs = run_synth(scenario_path, config.paths.out_dir, config.explicit_seed)
    table = Table(title="Synthetic recording")
    table.add_column("frames", justify="right")
    table.add_column("detections", justify="right", style="green")
    table.add_column("dropouts", justify="right", style="yellow")
    table.add_column("out of view", justify="right", style="magenta")
    s = outputs.stats
    table.add_row(str(s.frames), str(s.detections), str(s.dropouts), str(s.out_of_fov))
    console.print(table)
    return 0


def print_train_outcome(outcome: TrainOutcome, console: Console):
    meta = outcome.network.metadata
    table = Table(title=f"Network {list(outcome.network.spec.sizes)}")
    table.add_column("split")
    table.add_column("samples", justify="right")
    table.add_column("distance RMSE [NM]", justify="right")
    table.add_column("bearing RMSE [deg]", justify="right")
    table.add_row("train", str(outcome.n_train), f"{outcome.train_rmse[0]:.4f}", f"{outcome.train_rmse[1]:.3f}")
    table.add_row("validation", str(outcome.n_val), f"{outcome.val_rmse[0]:.4f}", f"{outcome.val_rmse[1]:.3f}")
    console.print(table)
    if outcome.val_report is not None:
        console.print(f"validation position error: mean {outcome.val_report.mean_position_error_m:.1f} m, "
                      f"max {outcome.val_report.max_position_error_m:.1f} m", highlight=False)
    console.print(
        f"{meta.epochs_run} epochs, best validation loss {meta.best_val_loss:.4e} at epoch {meta.best_epoch}",
        highlight=False,
    )
    if outcome.sweep:
        sweep = Table(title="Hidden layer sweep")
        sweep.add_column("depth", justify="right")
        sweep.add_column("distance RMSE [NM]", justify="right")
        sweep.add_column("bearing RMSE [deg]", justify="right")
        sweep.add_column("epochs", justify="right")
        for row in outcome.sweep:
            sweep.add_row(str(row.depth), f"{row.rmse_distance_nm:.4f}", f"{row.rmse_bearing_deg:.3f}",
                          str(row.epochs_run))
        console.print(sweep)


def cmd_train(config: PipelineConfig, sweep: Optional[str], show_progress: bool, console: Console) -> int:
    depths = parse_depths(sweep) if sweep else None
    outcome = run_train(config, sweep_depths=depths, show_progress=show_progress)
    print_train_outcome(outcome, console)
    return 0


def cmd_track_predict(config: PipelineConfig, console: Console) -> int:
    rows = run_track_predict(config)
    tracks = sorted({r.track_id for r in rows})
    console.print(f"{len(rows)} predictions over {len(tracks)} track(s) -> {config.paths.predictions_path}",
                  highlight=False)
    return 0


def cmd_georef(config: PipelineConfig, console: Console) -> int:
    points = run_georef(config)
    if points:
        last = points[-1]
        console.print(f"Last position of track {last.track_id}: {format_point(last.position)}", highlight=False)
    console.print(f"{len(points)} positions -> {config.paths.tracks_geojson_path}", highlight=False)
    return 0


def print_report(report: EvalReport, console: Console):
    table = Table(title=f"Evaluation over {report.n_samples} samples")
    table.add_column("metric")
    table.add_column("value", justify="right")
    table.add_row("distance RMSE [NM]", f"{report.rmse_distance_nm:.4f}")
    table.add_row("bearing RMSE [deg]", f"{report.rmse_bearing_deg:.3f}")
    table.add_row("bearing RMSE, unwrapped [deg]", f"{report.rmse_bearing_linear_deg:.3f}")
    table.add_row("latitude RMSE [deg]", f"{report.rmse_lat_deg:.6f}")
    table.add_row("longitude RMSE [deg]", f"{report.rmse_lon_deg:.6f}")
    table.add_row("max latitude error [arcsec]", f"{report.max_lat_error_arcsec:.2f}")
    table.add_row("max longitude error [arcsec]", f"{report.max_lon_error_arcsec:.2f}")
    table.add_row("mean position error [m]", f"{report.mean_position_error_m:.1f}")
    table.add_row(f"distance within {report.distance_tolerance:.0%}", f"{report.distance_accuracy:.1%}")
    table.add_row(f"bearing within {report.bearing_tolerance_deg:g} deg", f"{report.bearing_accuracy:.1%}")
    console.print(table)


def cmd_eval(config: PipelineConfig, console: Console) -> int:
    report = run_eval(config)
    print_report(report, console)
    return 0


def main(argv: Optional[Sequence[str]] = None, console: Optional[Console] = None) -> int:
    """Run one pipeline stage and return its exit code."""
    if console is None:
        console = Console()
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.version:
        print(__version__)
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    if args.verbose and args.quiet:
        parser.error("Cannot use both -v and -q together.")

    setup_logging(quiet=args.quiet, verbose=args.verbose)
    logger.debug(f"disbeanet version: {__version__}")
    show_progress = not (args.no_progress or args.quiet)

    try:
        config = load_config(args)
        if args.command == "synth":
            return cmd_synth(config, args.scenario, console)
        if args.command == "train":
            return cmd_train(config, args.sweep, show_progress, console)
        if args.command == "track-predict":
            return cmd_track_predict(config, console)
        if args.command == "georef":
            return cmd_georef(config, console)
        return cmd_eval(config, console)
    except DisBeaNetError as e:
        logger.debug(format_exception(e))
        console.print(Text(f"{type(e).__name__}: {e}", style="red"))
        return e.exit_code
    except Exception as e:
        console.print(Text(f"Unexpected error: {format_exception(e)}", style="red"))
        return 1


def console_main():
    sys.exit(main())

"""
Pipeline stages behind the command line: synth -> train -> track-predict -> georef -> eval.

Each ``run_*`` function reads its inputs, writes its outputs atomically and returns the
in-memory result; errors are raised as ``DisBeaNetError`` subclasses.
"""
import csv
import io
import json
import logging
import sys
import traceback
from dataclasses import dataclass, field
from datetime import datetime, timezone
from os import PathLike
from pathlib import Path
from typing import Optional, Sequence, Union

from pydantic import BaseModel, Field, ValidationError

from .config import PipelineConfig, env_seed
from .dataset import (
    PairingResult,
    features_matrix,
    fit_norm_stats,
    interpolate_truth,
    load_detections,
    load_ground_truth,
    pair_samples,
    split,
)
from .errors import ConfigError, DataFormatError, InputError
from .evaluation import EvalReport, emit_report, evaluate
from .geodesy import destination_point
from .mlp import (
    LossHistory,
    Network,
    SweepRow,
    hidden_layer_sweep,
    init_network,
    load_model,
    predict_batch,
    predict_features,
    save_model,
    train,
    validation_rmse,
)
from .synth import Scenario, generate
from .stats import SynthStats
from .tracker import IouTracker
from .types import EarthModel, GeoPoint, LabeledSample, RangeBearing
from .utils.files import atomic_write_text, read_text

logger = logging.getLogger(__name__)

PREDICTION_COLUMNS = ("t", "track_id", "distance_nm", "bearing_deg")
TRACK_COLUMNS = ("t", "track_id", "lat_deg", "lon_deg")
SWEEP_COLUMNS = ("depth", "rmse_distance_nm", "rmse_bearing_deg", "best_val_loss", "epochs_run")


class LiveFlushingStreamHandler(logging.StreamHandler):
    """
    A stream handler that flushes logs immediately, giving real-time console output.
    """
    def emit(self, record):
        super(LiveFlushingStreamHandler, self).emit(record)
        self.flush()


def create_live_console_handler(formatter=None, level=logging.INFO):
    handler = LiveFlushingStreamHandler(stream=sys.stdout)
    if formatter:
        handler.setFormatter(formatter)
    handler.setLevel(level)
    return handler


class SimpleLogFormatter(logging.Formatter):
    """
    Format logs with a timestamp and level, e.g.:
    HH:MM:SS LEVEL|LOGGER| message
    """
    def __init__(self, use_colors=True):
        super().__init__()
        self.use_colors = use_colors

    def format(self, record):
        try:
            from colorama import Fore, Style
            has_colorama = True
        except ImportError:
            has_colorama = False

        time = datetime.fromtimestamp(record.created, tz=timezone.utc)
        tstamp = time.astimezone().strftime("%H:%M:%S")
        level = record.levelname
        origin = record.name.replace("disbeanet.", "")
        message = record.getMessage()

        color = ""
        reset = ""
        if self.use_colors and has_colorama:
            if level in ("ERROR", "CRITICAL"):
                color = Fore.RED
            elif level == "WARNING":
                color = Fore.YELLOW
            elif level == "DEBUG":
                color = Fore.MAGENTA
            elif level == "INFO":
                color = Fore.CYAN
            reset = Style.RESET_ALL

        return f"{color}{tstamp} {level:8s}|{origin:10s}| {message}{reset}"


def setup_logging(quiet=False, verbose=False):
    """Route the package logger to stdout; repeated calls replace the previous handler."""
    package_logger = logging.getLogger("disbeanet")
    for handler in list(package_logger.handlers):
        if isinstance(handler, LiveFlushingStreamHandler):
            package_logger.removeHandler(handler)

    # If quiet => set level above CRITICAL (so no logs)
    if quiet:
        package_logger.setLevel(logging.CRITICAL + 1)
        return
    level = logging.DEBUG if verbose else logging.INFO
    package_logger.setLevel(level)
    package_logger.addHandler(create_live_console_handler(formatter=SimpleLogFormatter(), level=level))


def format_exception(exception: Exception) -> str:
    """Format exception using '{type}: {message}\\n{traceback}'."""
    tb_str = ''.join(traceback.format_exception(type(exception), exception, exception.__traceback__))
    return f"{type(exception).__name__}: {exception}\n{tb_str}"


def require_file(path: Optional[Union[str, PathLike]], what: str) -> Path:
    if path is None:
        raise ConfigError(f"no {what} path configured")
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{what} not found: {path}")
    return path


# --- synth ---------------------------------------------------------------------------------

@dataclass
class SynthOutputs:
    detections: Path
    truth: Path
    summary: Path
    stats: SynthStats


def run_synth(
    scenario_path: Union[str, PathLike],
    out_dir: Union[str, PathLike],
    seed: Optional[int] = None,
) -> SynthOutputs:
    """Generate detections.jsonl, truth.csv and summary.json for a scenario file.

    An explicit ``seed``, else DISBEANET_SEED, replaces the scenario seed.
    """
    scenario = Scenario.load(require_file(scenario_path, "scenario file"))
    seed = env_seed() if seed is None else seed
    if seed is not None:
        scenario = scenario.model_copy(update={"seed": seed})
    out_dir = Path(out_dir)
    outputs = SynthOutputs(
        detections=out_dir / "detections.jsonl",
        truth=out_dir / "truth.csv",
        summary=out_dir / "summary.json",
        stats=SynthStats(),
    )
    outputs.stats = generate(scenario, outputs.detections, outputs.truth)
    summary = {"scenario": str(scenario_path), "seed": scenario.seed, **outputs.stats.to_dict()}
    atomic_write_text(outputs.summary, json.dumps(summary, indent=2) + "\n")
    return outputs


# --- train ---------------------------------------------------------------------------------

@dataclass
class TrainOutcome:
    network: Network
    history: LossHistory
    pairing: PairingResult
    n_train: int
    n_val: int
    train_rmse: tuple[float, float]  # (distance NM, bearing deg)
    val_rmse: tuple[float, float]
    val_report: Optional[EvalReport] = None
    sweep: list[SweepRow] = field(default_factory=list)


def load_samples(config: PipelineConfig) -> PairingResult:
    stream = load_detections(require_file(config.paths.detections_path, "detections file"))
    truth = load_ground_truth(require_file(config.paths.truth_path, "ground truth file"))
    pairing = pair_samples(stream, truth, config.train.max_dt)
    logger.info(f"Paired {len(pairing.samples)} samples ({pairing.dropped} dropped)")
    return pairing


def dumps_sweep_csv(rows: Sequence[SweepRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        writer.writerow([row.depth, repr(row.rmse_distance_nm), repr(row.rmse_bearing_deg),
                         repr(row.best_val_loss), row.epochs_run])
    return buffer.getvalue()


def holdout_report(net: Network, samples: Sequence[LabeledSample], earth: EarthModel) -> EvalReport:
    """Compare predictions on paired samples with their truth, geo-referenced from the truth camera."""
    predictions = predict_features(net, features_matrix(samples))
    return evaluate(
        [(s.truth.t, p.range_bearing) for s, p in zip(samples, predictions)],
        [s.truth for s in samples],
        [s.truth.camera for s in samples],
        earth,
    )


def run_train(
    config: PipelineConfig,
    sweep_depths: Optional[Sequence[int]] = None,
    show_progress: bool = False,
) -> TrainOutcome:
    """Pair, split, normalize, train and save the model; optionally run a hidden-layer sweep."""
    cfg = config.train_config
    pairing = load_samples(config)
    if len(pairing.samples) < 2:
        raise InputError(f"need at least 2 paired samples to train, got {len(pairing.samples)}")
    train_set, val_set = split(pairing.samples, cfg.train_fraction, cfg.seed)
    # single-class flat-horizon scenes make class_id and cy_n constant
    stats = fit_norm_stats(train_set, cfg.bearing_encoding, allow_constant=True)

    net = init_network(cfg.layer_spec(), cfg.seed)
    net.norm_stats = stats
    logger.info(f"Training {list(net.spec.sizes)} on {len(train_set)} samples, validating on {len(val_set)}")
    result = train(net, train_set, val_set, cfg, show_progress=show_progress)
    save_model(result.network, config.paths.model_path)
    logger.info(f"Saved model to {config.paths.model_path}")

    outcome = TrainOutcome(
        network=result.network,
        history=result.history,
        pairing=pairing,
        n_train=len(train_set),
        n_val=len(val_set),
        train_rmse=validation_rmse(result.network, train_set),
        val_rmse=validation_rmse(result.network, val_set),
        val_report=holdout_report(result.network, val_set, config.earth),
    )
    logger.info(f"Mean validation position error {outcome.val_report.mean_position_error_m:.1f} m")
    depths = list(sweep_depths) if sweep_depths else list(config.sweep_depths)
    if depths:
        outcome.sweep = hidden_layer_sweep(train_set, val_set, depths, cfg, stats, show_progress=show_progress)
        atomic_write_text(config.paths.sweep_csv_path, dumps_sweep_csv(outcome.sweep))
        logger.info(f"Wrote sweep table to {config.paths.sweep_csv_path}")
    return outcome


# --- track-predict -------------------------------------------------------------------------

class PredictionRow(BaseModel):
    t: float
    track_id: int = Field(ge=0)
    distance_nm: float
    bearing_deg: float

    @property
    def range_bearing(self) -> RangeBearing:
        return RangeBearing(self.distance_nm, self.bearing_deg)


def dumps_predictions(rows: Sequence[PredictionRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(PREDICTION_COLUMNS)
    for row in rows:
        writer.writerow([repr(row.t), row.track_id, repr(row.distance_nm), repr(row.bearing_deg)])
    return buffer.getvalue()


def load_predictions(path: Union[str, PathLike]) -> list[PredictionRow]:
    path = require_file(path, "predictions file")
    reader = csv.DictReader(io.StringIO(read_text(path, "predictions file")))
    if reader.fieldnames is None or any(c not in reader.fieldnames for c in PREDICTION_COLUMNS):
        raise DataFormatError(f"expected columns {', '.join(PREDICTION_COLUMNS)}", path, 1)
    rows = []
    for row in reader:
        try:
            rows.append(PredictionRow.model_validate({c: row[c] for c in PREDICTION_COLUMNS}))
        except ValidationError as e:
            raise DataFormatError(f"malformed row: {e.errors()[0]['msg']}", path, reader.line_num) from e
    return rows


def run_track_predict(config: PipelineConfig) -> list[PredictionRow]:
    """Track detections frame by frame and predict distance and bearing for each one."""
    net = load_model(require_file(config.paths.model_path, "model file"))
    stream = load_detections(require_file(config.paths.detections_path, "detections file"))
    tracker = IouTracker(config.tracker.iou_threshold, config.tracker.max_misses)
    rows = []
    clamped = 0
    for frame in stream.frames():
        track_ids = tracker.step(frame)
        predictions = predict_batch(net, frame, stream.frame_w, stream.frame_h)
        for d, track_id, p in zip(frame, track_ids, predictions):
            clamped += p.clamped
            rows.append(PredictionRow(
                t=d.t, track_id=track_id,
                distance_nm=p.range_bearing.distance_nm, bearing_deg=p.range_bearing.bearing_deg,
            ))
    atomic_write_text(config.paths.predictions_path, dumps_predictions(rows))
    logger.info(
        f"Wrote {len(rows)} predictions for {tracker.next_id} track(s) to {config.paths.predictions_path}"
        + (f" ({clamped} distances clamped)" if clamped else "")
    )
    return rows


# --- georef --------------------------------------------------------------------------------

@dataclass(frozen=True)
class TrackPoint:
    t: float
    track_id: int
    position: GeoPoint


def camera_positions(config: PipelineConfig, times: Sequence[float]) -> list[GeoPoint]:
    """Per-sample camera positions from the truth file, else the fixed configured camera."""
    truth_path = config.paths.truth_path
    if truth_path.is_file():
        truth = load_ground_truth(truth_path)
        gt_times = [g.t for g in truth]
        positions = []
        for t in times:
            record = interpolate_truth(truth, t, config.train.max_dt, gt_times)
            if record is None:
                raise InputError(f"no camera position within {config.train.max_dt} s of t={t} in {truth_path}")
            positions.append(record.camera)
        return positions
    if config.camera is not None:
        return [config.camera.position] * len(times)
    raise ConfigError(f"no camera source: {truth_path} does not exist and no fixed camera is configured")


def geojson_tracks(points: Sequence[TrackPoint]) -> dict:
    """One GeoJSON feature per track: a LineString, or a Point for single positions."""
    by_track: dict[int, list[TrackPoint]] = {}
    for p in points:
        by_track.setdefault(p.track_id, []).append(p)
    features = []
    for track_id in sorted(by_track):
        track = by_track[track_id]
        coordinates = [[p.position.lon_deg, p.position.lat_deg] for p in track]
        if len(coordinates) == 1:
            geometry = {"type": "Point", "coordinates": coordinates[0]}
        else:
            geometry = {"type": "LineString", "coordinates": coordinates}
        features.append({
            "type": "Feature",
            "geometry": geometry,
            "properties": {"track_id": track_id, "times": [p.t for p in track], "n_points": len(track)},
        })
    return {"type": "FeatureCollection", "features": features}


def dumps_tracks_csv(points: Sequence[TrackPoint]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TRACK_COLUMNS)
    for p in points:
        writer.writerow([repr(p.t), p.track_id, repr(p.position.lat_deg), repr(p.position.lon_deg)])
    return buffer.getvalue()


def run_georef(config: PipelineConfig) -> list[TrackPoint]:
    """Convert predicted distance/bearing to latitude/longitude tracks."""
    rows = load_predictions(config.paths.predictions_path)
    cameras = camera_positions(config, [r.t for r in rows])
    points = [
        TrackPoint(t=r.t, track_id=r.track_id, position=destination_point(camera, r.range_bearing, config.earth))
        for r, camera in zip(rows, cameras)
    ]
    atomic_write_text(config.paths.tracks_geojson_path, json.dumps(geojson_tracks(points), indent=1) + "\n")
    atomic_write_text(config.paths.tracks_csv_path, dumps_tracks_csv(points))
    logger.info(f"Wrote {len(points)} geo-referenced positions to {config.paths.tracks_geojson_path}")
    return points


# --- eval ----------------------------------------------------------------------------------

def run_eval(config: PipelineConfig) -> EvalReport:
    """Compare predictions with interpolated truth and write the report files."""
    rows = load_predictions(config.paths.predictions_path)
    if not rows:
        raise InputError(f"no predictions to evaluate in {config.paths.predictions_path}")
    truth_path = require_file(config.paths.truth_path, "ground truth file")
    truth = load_ground_truth(truth_path)
    gt_times = [g.t for g in truth]
    matched = []
    for r in rows:
        record = interpolate_truth(truth, r.t, config.train.max_dt, gt_times)
        if record is None:
            raise InputError(f"prediction at t={r.t} has no ground truth within {config.train.max_dt} s")
        matched.append(record)
    report = evaluate(
        [(r.t, r.range_bearing) for r in rows],
        matched,
        [m.camera for m in matched],
        config.earth,
    )
    emit_report(report, config.paths.report_json_path, config.paths.report_csv_path)
    return report

"""
Detection and ground-truth ingestion, feature extraction, pairing, normalization and splitting.

Detections are JSON Lines: a header object followed by one record per box::

    {"type":"header","frame_w":640,"frame_h":480,"source":"synth"}
    {"frame":0,"t":0.0,"class":0,"x":100.0,"y":50.0,"w":40.0,"h":20.0,"conf":0.9}

Ground truth is CSV with the columns in ``TRUTH_COLUMNS``.
"""
import bisect
import csv
import io
import logging
from dataclasses import dataclass, field
from os import PathLike
from typing import Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import DataFormatError, DataValidationError, NormalizationError, InputError
from .geodesy import normalize_lon, wrap_bearing, wrap_signed_deg
from .types import (
    Detection,
    FeatureVector,
    GeoPoint,
    GroundTruthRecord,
    LabeledSample,
    FEATURE_NAMES,
    NUM_FEATURES,
)
from .utils.files import read_text

logger = logging.getLogger(__name__)

TRUTH_COLUMNS = ("t", "distance_nm", "bearing_deg", "lat_deg", "lon_deg", "cam_lat_deg", "cam_lon_deg")
DEFAULT_MAX_DT = 0.5  # seconds

BearingEncoding = Literal["degrees", "sincos"]
PathType = Union[str, PathLike]


class StreamHeader(BaseModel):
    model_config = ConfigDict(extra="forbid")

    type: Literal["header"] = "header"
    frame_w: int = Field(gt=0)
    frame_h: int = Field(gt=0)
    source: str = ""


class DetectionRecord(BaseModel):
    """One JSONL detection line."""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    frame: int
    t: float
    class_id: int = Field(alias="class")
    x: float
    y: float
    w: float
    h: float
    conf: float

    def to_detection(self) -> Detection:
        return Detection(
            frame_index=self.frame, t=self.t, class_id=self.class_id,
            x=self.x, y=self.y, w=self.w, h=self.h, confidence=self.conf,
        )

    @staticmethod
    def from_detection(d: Detection) -> "DetectionRecord":
        return DetectionRecord(
            frame=d.frame_index, t=d.t, class_id=d.class_id,
            x=d.x, y=d.y, w=d.w, h=d.h, conf=d.confidence,
        )


class TruthRow(BaseModel):
    """One ground-truth CSV row; values arrive as strings and are coerced."""
    t: float
    distance_nm: float
    bearing_deg: float
    lat_deg: float
    lon_deg: float
    cam_lat_deg: float
    cam_lon_deg: float

    def to_record(self) -> GroundTruthRecord:
        return GroundTruthRecord(
            t=self.t,
            distance_nm=self.distance_nm,
            bearing_deg=self.bearing_deg,
            vessel=GeoPoint(self.lat_deg, normalize_lon(self.lon_deg)),
            camera=GeoPoint(self.cam_lat_deg, normalize_lon(self.cam_lon_deg)),
        )


@dataclass
class DetectionStream:
    """Detections of one video stream, in file order."""
    frame_w: Optional[int]
    frame_h: Optional[int]
    source: str = ""
    detections: list[Detection] = field(default_factory=list)

    def __len__(self):
        return len(self.detections)

    def __iter__(self):
        return iter(self.detections)

    def frames(self) -> list[list[Detection]]:
        """Group consecutive detections sharing a frame index."""
        groups: list[list[Detection]] = []
        for d in self.detections:
            if groups and groups[-1][0].frame_index == d.frame_index:
                groups[-1].append(d)
            else:
                groups.append([d])
        return groups


def _dump_model(model: BaseModel) -> str:
    return model.model_dump_json(by_alias=True)


def dumps_detections(stream: DetectionStream) -> str:
    """Serialize a stream to JSON Lines text."""
    lines = []
    if stream.frame_w is not None and stream.frame_h is not None:
        header = StreamHeader(frame_w=stream.frame_w, frame_h=stream.frame_h, source=stream.source)
        lines.append(_dump_model(header))
    for d in stream.detections:
        lines.append(_dump_model(DetectionRecord.from_detection(d)))
    return "".join(line + "\n" for line in lines)


def parse_detections(text: str, path: Optional[PathType] = None) -> DetectionStream:
    """Parse JSON Lines detection text."""
    stream = DetectionStream(frame_w=None, frame_h=None)
    header_seen = False
    for line_number, line in enumerate(io.StringIO(text), start=1):
        line = line.strip()
        if not line:
            continue
        if not header_seen:
            try:
                header = StreamHeader.model_validate_json(line)
            except ValidationError as e:
                raise DataFormatError(f"expected stream header: {e.errors()[0]['msg']}", path, line_number) from e
            stream.frame_w, stream.frame_h, stream.source = header.frame_w, header.frame_h, header.source
            header_seen = True
            continue
        try:
            record = DetectionRecord.model_validate_json(line)
        except ValidationError as e:
            raise DataFormatError(f"malformed detection: {e.errors()[0]['msg']}", path, line_number) from e
        try:
            detection = record.to_detection()
        except DataValidationError as e:
            raise DataValidationError(f"{path}:{line_number}: {e}") from e
        if not detection.fits_frame(stream.frame_w, stream.frame_h):
            raise DataValidationError(
                f"{path}:{line_number}: box ({detection.x}, {detection.y}, {detection.w}, {detection.h}) "
                f"outside frame {stream.frame_w}x{stream.frame_h}"
            )
        stream.detections.append(detection)
    return stream


def load_detections(path: PathType) -> DetectionStream:
    """Load a detections JSONL file."""
    text = read_text(path, "detections file")
    stream = parse_detections(text, path)
    logger.debug(f"Loaded {len(stream)} detections from {path}")
    return stream


def dumps_ground_truth(records: Sequence[GroundTruthRecord]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TRUTH_COLUMNS)
    for r in records:
        writer.writerow([
            repr(r.t), repr(r.distance_nm), repr(r.bearing_deg),
            repr(r.vessel.lat_deg), repr(r.vessel.lon_deg),
            repr(r.camera.lat_deg), repr(r.camera.lon_deg),
        ])
    return buffer.getvalue()


def parse_ground_truth(text: str, path: Optional[PathType] = None) -> list[GroundTruthRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise DataFormatError("missing header row", path, 1)
    missing = [c for c in TRUTH_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise DataFormatError(f"missing column(s): {', '.join(missing)}", path, 1)
    records: list[GroundTruthRecord] = []
    for row in reader:
        line_number = reader.line_num
        try:
            record = TruthRow.model_validate({c: row[c] for c in TRUTH_COLUMNS}).to_record()
        except ValidationError as e:
            raise DataFormatError(f"malformed row: {e.errors()[0]['msg']}", path, line_number) from e
        except DataValidationError as e:
            raise DataValidationError(f"{path}:{line_number}: {e}") from e
        if records and record.t <= records[-1].t:
            raise DataValidationError(
                f"{path}:{line_number}: timestamps must be strictly increasing ({record.t} after {records[-1].t})"
            )
        records.append(record)
    return records


def load_ground_truth(path: PathType) -> list[GroundTruthRecord]:
    """Load a ground-truth CSV file."""
    text = read_text(path, "ground truth file")
    records = parse_ground_truth(text, path)
    logger.debug(f"Loaded {len(records)} ground truth records from {path}")
    return records


def extract_features(d: Detection, frame_w: float, frame_h: float) -> FeatureVector:
    """Derive the seven network inputs from a detection box."""
    if frame_w <= 0 or frame_h <= 0:
        raise DataValidationError(f"invalid frame size {frame_w}x{frame_h}")
    w_n = d.w / frame_w
    h_n = d.h / frame_h
    return FeatureVector(
        cx_n=(d.x + d.w / 2) / frame_w,
        cy_n=(d.y + d.h / 2) / frame_h,
        w_n=w_n,
        h_n=h_n,
        area_n=w_n * h_n,
        aspect=d.w / d.h,
        class_id=float(d.class_id),
    )


def _lerp(a: float, b: float, frac: float) -> float:
    return a + (b - a) * frac


def _lerp_circular(a_deg: float, b_deg: float, frac: float) -> float:
    """Interpolate along the shortest arc from a to b, result in [0, 360)."""
    return wrap_bearing(a_deg + wrap_signed_deg(b_deg - a_deg) * frac)


def _lerp_point(a: GeoPoint, b: GeoPoint, frac: float) -> GeoPoint:
    lon = a.lon_deg + wrap_signed_deg(b.lon_deg - a.lon_deg) * frac
    return GeoPoint(_lerp(a.lat_deg, b.lat_deg, frac), normalize_lon(lon))


def interpolate_truth(
    gts: Sequence[GroundTruthRecord],
    t: float,
    max_dt: float,
    times: Optional[Sequence[float]] = None,
) -> Optional[GroundTruthRecord]:
    """Truth at time t, or None if no record lies within max_dt of t."""
    if not gts:
        return None
    if times is None:
        times = [g.t for g in gts]
    i = bisect.bisect_left(times, t)
    if i < len(gts) and gts[i].t == t:
        return gts[i]
    if i == 0 or i == len(gts):
        nearest = gts[0] if i == 0 else gts[-1]
        if abs(nearest.t - t) > max_dt:
            return None
        return GroundTruthRecord(t, nearest.distance_nm, nearest.bearing_deg, nearest.vessel, nearest.camera)
    lo, hi = gts[i - 1], gts[i]
    if min(t - lo.t, hi.t - t) > max_dt:
        return None
    frac = (t - lo.t) / (hi.t - lo.t)
    return GroundTruthRecord(
        t=t,
        distance_nm=_lerp(lo.distance_nm, hi.distance_nm, frac),
        bearing_deg=_lerp_circular(lo.bearing_deg, hi.bearing_deg, frac),
        vessel=_lerp_point(lo.vessel, hi.vessel, frac),
        camera=_lerp_point(lo.camera, hi.camera, frac),
    )


@dataclass
class PairingResult:
    samples: list[LabeledSample]
    dropped: int


def pair_samples(
    dets: Union[DetectionStream, Sequence[Detection]],
    gts: Sequence[GroundTruthRecord],
    max_dt: float = DEFAULT_MAX_DT,
    frame_w: Optional[float] = None,
    frame_h: Optional[float] = None,
) -> PairingResult:
    """Pair each detection with the ground truth interpolated at its timestamp."""
    if isinstance(dets, DetectionStream):
        frame_w = frame_w if frame_w is not None else dets.frame_w
        frame_h = frame_h if frame_h is not None else dets.frame_h
        dets = dets.detections
    if frame_w is None or frame_h is None:
        raise InputError("frame size unknown: detections need a stream header")
    times = [g.t for g in gts]
    samples = []
    dropped = 0
    for d in dets:
        truth = interpolate_truth(gts, d.t, max_dt, times)
        if truth is None:
            dropped += 1
            continue
        samples.append(LabeledSample(features=extract_features(d, frame_w, frame_h), truth=truth, detection=d))
    if dropped:
        logger.warning(f"Dropped {dropped} of {len(dets)} detections with no ground truth within {max_dt} s")
    return PairingResult(samples=samples, dropped=dropped)


class NormStats(BaseModel):
    """z-score statistics for the network inputs and targets."""
    model_config = ConfigDict(frozen=True)

    feature_mean: list[float]
    feature_std: list[float]
    target_mean: list[float]
    target_std: list[float]
    bearing_encoding: BearingEncoding = "degrees"
    constant_features: list[int] = Field(default_factory=list)

    @property
    def num_targets(self) -> int:
        return len(self.target_mean)


def target_width(encoding: BearingEncoding) -> int:
    return 2 if encoding == "degrees" else 3


def features_matrix(samples: Sequence[LabeledSample]) -> np.ndarray:
    if not samples:
        return np.zeros((0, NUM_FEATURES))
    return np.stack([s.features.as_array() for s in samples])


def encode_targets(distance_nm, bearing_deg, encoding: BearingEncoding) -> np.ndarray:
    """Targets as columns: (distance, bearing) or (distance, sin, cos)."""
    distance_nm = np.asarray(distance_nm, dtype=np.float64)
    bearing_deg = np.asarray(bearing_deg, dtype=np.float64)
    if encoding == "degrees":
        return np.stack([distance_nm, bearing_deg], axis=-1)
    radians = np.radians(bearing_deg)
    return np.stack([distance_nm, np.sin(radians), np.cos(radians)], axis=-1)


def targets_matrix(samples: Sequence[LabeledSample], encoding: BearingEncoding = "degrees") -> np.ndarray:
    return encode_targets(
        [s.target_distance_nm for s in samples],
        [s.target_bearing_deg for s in samples],
        encoding,
    )


def fit_norm_stats(
    samples: Sequence[LabeledSample],
    bearing_encoding: BearingEncoding = "degrees",
    allow_constant: bool = False,
) -> NormStats:
    """Fit population mean/std per feature and target.

    With ``allow_constant`` a zero-variance feature is frozen (std 1, normalizes to 0)
    instead of raising.
    """
    if len(samples) < 2:
        raise NormalizationError(f"need at least 2 samples to fit normalization, got {len(samples)}")
    x = features_matrix(samples)
    y = targets_matrix(samples, bearing_encoding)
    x_mean, x_std = x.mean(axis=0), x.std(axis=0)
    y_mean, y_std = y.mean(axis=0), y.std(axis=0)
    constant = []
    for i, sd in enumerate(x_std):
        if sd > 0.0:
            continue
        if not allow_constant:
            raise NormalizationError(f"feature {i} ({FEATURE_NAMES[i]}) has zero variance", feature_index=i)
        logger.warning(f"Feature {i} ({FEATURE_NAMES[i]}) is constant and will be frozen at {x_mean[i]}")
        x_std[i] = 1.0
        constant.append(i)
    for j, sd in enumerate(y_std):
        if sd <= 0.0:
            raise NormalizationError(f"target {j} has zero variance")
    return NormStats(
        feature_mean=x_mean.tolist(),
        feature_std=x_std.tolist(),
        target_mean=y_mean.tolist(),
        target_std=y_std.tolist(),
        bearing_encoding=bearing_encoding,
        constant_features=constant,
    )


def normalize_features(stats: NormStats, x: np.ndarray) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - np.asarray(stats.feature_mean)) / np.asarray(stats.feature_std)


def normalize_targets(stats: NormStats, y: np.ndarray) -> np.ndarray:
    return (np.asarray(y, dtype=np.float64) - np.asarray(stats.target_mean)) / np.asarray(stats.target_std)


def denormalize_targets(stats: NormStats, y_n: np.ndarray) -> np.ndarray:
    return np.asarray(y_n, dtype=np.float64) * np.asarray(stats.target_std) + np.asarray(stats.target_mean)


def apply_norm(stats: NormStats, sample: LabeledSample) -> tuple[np.ndarray, np.ndarray]:
    """Normalized (features, targets) of one sample."""
    x = normalize_features(stats, sample.features.as_array())
    y = normalize_targets(stats, targets_matrix([sample], stats.bearing_encoding)[0])
    return x, y


def decode_outputs(stats: NormStats, outputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Physical (distance_nm, bearing_deg) arrays from normalized network outputs, bearing unwrapped."""
    y = denormalize_targets(stats, outputs)
    distance = y[..., 0]
    if stats.bearing_encoding == "degrees":
        bearing = y[..., 1]
    else:
        bearing = np.degrees(np.arctan2(y[..., 1], y[..., 2]))
    return distance, bearing


def invert_norm(stats: NormStats, outputs: np.ndarray) -> tuple[float, float]:
    """(distance_nm, bearing_deg) from one normalized network output."""
    distance, bearing = decode_outputs(stats, np.asarray(outputs, dtype=np.float64))
    bearing = float(bearing)
    if stats.bearing_encoding == "sincos":
        bearing = wrap_bearing(bearing)
    return float(distance), bearing


def split(samples: Sequence, train_fraction: float, seed: int) -> tuple[list, list]:
    """Deterministic shuffled train/validation partition."""
    if not 0.0 < train_fraction < 1.0:
        raise InputError(f"train fraction must be in (0, 1), got {train_fraction}")
    n = len(samples)
    if n < 2:
        raise InputError(f"need at least 2 samples to split, got {n}")
    n_train = min(n - 1, max(1, int(round(n * train_fraction))))
    order = np.random.default_rng(seed).permutation(n)
    train = [samples[i] for i in order[:n_train]]
    val = [samples[i] for i in order[n_train:]]
    return train, val

"""
Synthetic single-vessel scenarios: dead-reckoned trajectories observed by a pinhole camera.

The camera looks along ``heading_deg`` with the horizon on the middle image row. A vessel
at relative bearing beta and range d projects to a box centred at
``(frame_w / 2 + focal_px * tan(beta), frame_h / 2)`` of size
``(focal_px * length_m / d, focal_px * height_m / d)``.
"""
import json
import logging
import math
from dataclasses import dataclass
from os import PathLike
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .dataset import DetectionStream, dumps_detections, dumps_ground_truth
from .errors import ConfigError, DataValidationError
from .geodesy import destination_point, inverse_problem, point, wrap_bearing, wrap_signed_deg
from .stats import SynthStats
from .types import Box, Detection, EarthModel, GeoPoint, GroundTruthRecord, RangeBearing
from .utils.files import atomic_write_text, read_text

logger = logging.getLogger(__name__)

ObservationStatus = Literal["detected", "dropout", "out_of_fov"]


class CameraSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lat_deg: float = Field(ge=-90.0, le=90.0)
    lon_deg: float
    heading_deg: float = 0.0
    height_m: float = Field(10.0, ge=0.0)
    focal_px: float = Field(1000.0, gt=0.0)
    frame_w: int = Field(1280, gt=0)
    frame_h: int = Field(720, gt=0)
    # a moving camera platform is dead reckoned like the vessel
    speed_kn: float = Field(0.0, ge=0.0)
    course_deg: float = 0.0

    @property
    def position(self) -> GeoPoint:
        return point(self.lat_deg, self.lon_deg)

    @property
    def half_fov_deg(self) -> float:
        return math.degrees(math.atan((self.frame_w / 2) / self.focal_px))


class VesselSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lat_deg: float = Field(ge=-90.0, le=90.0)
    lon_deg: float
    speed_kn: float = Field(ge=0.0)
    course_deg: float
    length_m: float = Field(gt=0.0)
    height_m: float = Field(gt=0.0)
    class_id: int = Field(0, ge=0)

    @property
    def position(self) -> GeoPoint:
        return point(self.lat_deg, self.lon_deg)


class NoiseSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pixel_sd: float = Field(0.0, ge=0.0)
    dropout: float = Field(0.0, ge=0.0, lt=1.0)


class Scenario(BaseModel):
    """A synthetic recording: one camera, one vessel, fixed frame rate."""
    model_config = ConfigDict(extra="forbid")

    camera: CameraSpec
    vessel: VesselSpec
    duration_s: float = Field(gt=0.0)
    fps: float = Field(gt=0.0)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    seed: int = 0
    earth_radius_nm: Optional[float] = Field(None, gt=0.0)
    source: str = "synth"

    @property
    def earth(self) -> EarthModel:
        return EarthModel() if self.earth_radius_nm is None else EarthModel(self.earth_radius_nm)

    @property
    def num_frames(self) -> int:
        return int(round(self.duration_s * self.fps))

    @staticmethod
    def load(path: Union[str, PathLike]) -> "Scenario":
        text = read_text(path, "scenario file", ConfigError)
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from e
        try:
            return Scenario.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"{path}: invalid scenario: {e}") from e


def _dead_reckon(start: GeoPoint, speed_kn: float, course_deg: float, t: float, earth: EarthModel) -> GeoPoint:
    return destination_point(start, RangeBearing(speed_kn * t / 3600.0, wrap_bearing(course_deg)), earth)


def _check_time(scenario: Scenario, t: float):
    if not 0.0 <= t <= scenario.duration_s:
        raise DataValidationError(f"time {t} s outside scenario duration [0, {scenario.duration_s}]")


def propagate(scenario: Scenario, t: float) -> GeoPoint:
    """Vessel position at time t by great-circle dead reckoning."""
    _check_time(scenario, t)
    v = scenario.vessel
    return _dead_reckon(v.position, v.speed_kn, v.course_deg, t, scenario.earth)


def camera_position(scenario: Scenario, t: float) -> GeoPoint:
    _check_time(scenario, t)
    c = scenario.camera
    return _dead_reckon(c.position, c.speed_kn, c.course_deg, t, scenario.earth)


def project(scenario: Scenario, truth: RangeBearing) -> Optional[Box]:
    """Noiseless pinhole box of the vessel, or None outside the horizontal field of view."""
    camera = scenario.camera
    beta = wrap_signed_deg(truth.bearing_deg - camera.heading_deg)
    if abs(beta) >= camera.half_fov_deg:
        return None
    range_m = truth.distance_m
    cx = camera.frame_w / 2 + camera.focal_px * math.tan(math.radians(beta))
    cy = camera.frame_h / 2
    w = camera.focal_px * scenario.vessel.length_m / range_m
    h = camera.focal_px * scenario.vessel.height_m / range_m
    return Box(cx - w / 2, cy - h / 2, w, h)


@dataclass(frozen=True)
class Observation:
    truth: RangeBearing
    detection: Optional[Detection]
    status: ObservationStatus


def observe(
    scenario: Scenario,
    vessel_pos: GeoPoint,
    t: float = 0.0,
    frame_index: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> Observation:
    """Truth range/bearing from the camera and the (possibly noisy or dropped) detection."""
    camera = camera_position(scenario, t)
    truth = inverse_problem(camera, vessel_pos, scenario.earth)
    if truth.distance_nm == 0.0:
        raise DataValidationError(f"vessel at the camera position at t={t}")
    box = project(scenario, truth)
    if box is None:
        return Observation(truth, None, "out_of_fov")

    x, y, w, h = box.x, box.y, box.w, box.h
    noise = scenario.noise
    if rng is not None and noise.pixel_sd > 0.0:
        dx, dy, dw, dh = rng.normal(0.0, noise.pixel_sd, size=4)
        x, y, w, h = x + dx, y + dy, w + dw, h + dh
    frame_w, frame_h = scenario.camera.frame_w, scenario.camera.frame_h
    if w <= 0.0 or h <= 0.0 or x < 0.0 or y < 0.0 or x + w > frame_w or y + h > frame_h:
        return Observation(truth, None, "out_of_fov")
    if rng is not None and noise.dropout > 0.0 and rng.random() < noise.dropout:
        return Observation(truth, None, "dropout")

    detection = Detection(
        frame_index=frame_index, t=t, class_id=scenario.vessel.class_id,
        x=float(x), y=float(y), w=float(w), h=float(h), confidence=1.0,
    )
    return Observation(truth, detection, "detected")


def simulate(scenario: Scenario) -> tuple[DetectionStream, list[GroundTruthRecord], SynthStats]:
    """Run the scenario frame by frame."""
    rng = np.random.default_rng(scenario.seed)
    camera = scenario.camera
    stream = DetectionStream(frame_w=camera.frame_w, frame_h=camera.frame_h, source=scenario.source)
    truth = []
    observations = []
    for k in range(scenario.num_frames):
        t = k / scenario.fps
        vessel = propagate(scenario, t)
        observation = observe(scenario, vessel, t, k, rng)
        truth.append(GroundTruthRecord(
            t=t,
            distance_nm=observation.truth.distance_nm,
            bearing_deg=observation.truth.bearing_deg,
            vessel=vessel,
            camera=camera_position(scenario, t),
        ))
        if observation.detection is not None:
            stream.detections.append(observation.detection)
        observations.append(observation)
    return stream, truth, SynthStats.from_observations(observations)


def generate(
    scenario: Scenario,
    out_detections_path: Union[str, PathLike],
    out_truth_path: Union[str, PathLike],
) -> SynthStats:
    """Simulate the scenario and write detections JSONL plus ground-truth CSV."""
    stream, truth, stats = simulate(scenario)
    atomic_write_text(out_detections_path, dumps_detections(stream))
    atomic_write_text(out_truth_path, dumps_ground_truth(truth))
    logger.info(
        f"Generated {stats.frames} frames: {stats.detections} detections, "
        f"{stats.dropouts} dropouts, {stats.out_of_fov} out of view"
    )
    return stats

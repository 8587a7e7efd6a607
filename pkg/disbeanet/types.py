"""Domain data types."""
import math
from dataclasses import dataclass, astuple
from typing import Optional

import numpy as np

from .errors import DataValidationError

NM_IN_METERS = 1852.0
DEFAULT_EARTH_RADIUS_NM = 3440.065  # 6371 km mean sphere

FEATURE_NAMES = ("cx_n", "cy_n", "w_n", "h_n", "area_n", "aspect", "class_id")
NUM_FEATURES = len(FEATURE_NAMES)


def _require(condition: bool, msg: str):
    if not condition:
        raise DataValidationError(msg)


def _finite(*values) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class GeoPoint:
    """A geographic position in degrees, longitude in (-180, 180]."""
    lat_deg: float
    lon_deg: float

    def __post_init__(self):
        _require(_finite(self.lat_deg, self.lon_deg), f"non-finite position {self}")
        _require(-90.0 <= self.lat_deg <= 90.0, f"latitude out of range: {self.lat_deg}")
        _require(-180.0 < self.lon_deg <= 180.0, f"longitude not normalized: {self.lon_deg}")


@dataclass(frozen=True)
class RangeBearing:
    """A polar observation: distance in nautical miles, bearing clockwise from true north."""
    distance_nm: float
    bearing_deg: float

    def __post_init__(self):
        _require(_finite(self.distance_nm, self.bearing_deg), f"non-finite observation {self}")
        _require(self.distance_nm >= 0.0, f"negative distance: {self.distance_nm}")
        _require(0.0 <= self.bearing_deg < 360.0, f"bearing out of [0, 360): {self.bearing_deg}")

    @property
    def distance_m(self) -> float:
        return self.distance_nm * NM_IN_METERS


@dataclass(frozen=True)
class EarthModel:
    """Spherical earth."""
    radius_nm: float = DEFAULT_EARTH_RADIUS_NM

    def __post_init__(self):
        _require(_finite(self.radius_nm) and self.radius_nm > 0.0, f"invalid earth radius: {self.radius_nm}")


@dataclass(frozen=True)
class Box:
    """Axis-aligned pixel box given by its top-left corner and size."""
    x: float
    y: float
    w: float
    h: float

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class Detection:
    """One bounding box observation in a video frame."""
    frame_index: int
    t: float
    class_id: int
    x: float
    y: float
    w: float
    h: float
    confidence: float = 1.0

    def __post_init__(self):
        _require(self.frame_index >= 0, f"negative frame index: {self.frame_index}")
        _require(_finite(self.t, self.x, self.y, self.w, self.h, self.confidence), f"non-finite detection {self}")
        _require(self.class_id >= 0, f"negative class id: {self.class_id}")
        _require(self.w > 0.0 and self.h > 0.0, f"box size must be positive, got w={self.w} h={self.h}")
        _require(self.x >= 0.0 and self.y >= 0.0, f"box corner must be non-negative, got x={self.x} y={self.y}")
        _require(0.0 <= self.confidence <= 1.0, f"confidence out of [0, 1]: {self.confidence}")

    @property
    def box(self) -> Box:
        return Box(self.x, self.y, self.w, self.h)

    def fits_frame(self, frame_w: float, frame_h: float) -> bool:
        return self.x + self.w <= frame_w and self.y + self.h <= frame_h


@dataclass(frozen=True)
class FeatureVector:
    """The seven network inputs derived from a detection."""
    cx_n: float
    cy_n: float
    w_n: float
    h_n: float
    area_n: float
    aspect: float
    class_id: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)


@dataclass(frozen=True)
class GroundTruthRecord:
    """Logged truth for one instant."""
    t: float
    distance_nm: float
    bearing_deg: float
    vessel: GeoPoint
    camera: GeoPoint

    def __post_init__(self):
        RangeBearing(self.distance_nm, self.bearing_deg)  # validates
        _require(_finite(self.t), f"non-finite timestamp: {self.t}")

    @property
    def range_bearing(self) -> RangeBearing:
        return RangeBearing(self.distance_nm, self.bearing_deg)


@dataclass(frozen=True)
class LabeledSample:
    """A feature vector paired with the truth interpolated at the detection time."""
    features: FeatureVector
    truth: GroundTruthRecord
    detection: Optional[Detection] = None

    @property
    def target_distance_nm(self) -> float:
        return self.truth.distance_nm

    @property
    def target_bearing_deg(self) -> float:
        return self.truth.bearing_deg

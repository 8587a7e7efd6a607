"""Pipeline configuration loaded from JSON, with environment and command line overrides."""
import json
import os
from os import PathLike
from pathlib import Path
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigError
from .geodesy import point
from .mlp import TrainConfig
from .tracker import DEFAULT_IOU_THRESHOLD, DEFAULT_MAX_MISSES
from .types import DEFAULT_EARTH_RADIUS_NM, EarthModel, GeoPoint
from .utils.files import read_text

SEED_ENV_VAR = "DISBEANET_SEED"


class PathsConfig(BaseModel):
    """Input and output files; outputs default to names inside ``out_dir``."""
    model_config = ConfigDict(extra="forbid")

    out_dir: Path = Path("out")
    detections: Optional[Path] = None
    truth: Optional[Path] = None
    model: Optional[Path] = None
    predictions: Optional[Path] = None
    tracks_geojson: Optional[Path] = None
    tracks_csv: Optional[Path] = None
    report_json: Optional[Path] = None
    report_csv: Optional[Path] = None
    sweep_csv: Optional[Path] = None

    def resolve(self, name: str, default_file: str) -> Path:
        value = getattr(self, name)
        return value if value is not None else self.out_dir / default_file

    @property
    def detections_path(self) -> Path:
        return self.resolve("detections", "detections.jsonl")

    @property
    def truth_path(self) -> Path:
        return self.resolve("truth", "truth.csv")

    @property
    def model_path(self) -> Path:
        return self.resolve("model", "model.json")

    @property
    def predictions_path(self) -> Path:
        return self.resolve("predictions", "predictions.csv")

    @property
    def tracks_geojson_path(self) -> Path:
        return self.resolve("tracks_geojson", "tracks.geojson")

    @property
    def tracks_csv_path(self) -> Path:
        return self.resolve("tracks_csv", "tracks.csv")

    @property
    def report_json_path(self) -> Path:
        return self.resolve("report_json", "report.json")

    @property
    def report_csv_path(self) -> Path:
        return self.resolve("report_csv", "report.csv")

    @property
    def sweep_csv_path(self) -> Path:
        return self.resolve("sweep_csv", "sweep.csv")


class TrackerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    iou_threshold: float = Field(DEFAULT_IOU_THRESHOLD, ge=0.0, le=1.0)
    max_misses: int = Field(DEFAULT_MAX_MISSES, ge=0)


class CameraConfig(BaseModel):
    """Fixed camera position used when the truth file cannot supply one per sample."""
    model_config = ConfigDict(extra="forbid")

    lat_deg: float = Field(ge=-90.0, le=90.0)
    lon_deg: float

    @property
    def position(self) -> GeoPoint:
        return point(self.lat_deg, self.lon_deg)


class PipelineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    paths: PathsConfig = Field(default_factory=PathsConfig)
    earth_radius_nm: float = Field(DEFAULT_EARTH_RADIUS_NM, gt=0.0)
    tracker: TrackerConfig = Field(default_factory=TrackerConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    camera: Optional[CameraConfig] = None
    scenario: Optional[Path] = None
    sweep_depths: list[int] = Field(default_factory=list)
    seed: int = 0

    @property
    def earth(self) -> EarthModel:
        return EarthModel(self.earth_radius_nm)

    @property
    def explicit_seed(self) -> Optional[int]:
        """The seed when the config file, DISBEANET_SEED or --seed set one, else None."""
        return self.seed if "seed" in self.model_fields_set else None

    @property
    def train_config(self) -> TrainConfig:
        """Training hyperparameters with the pipeline seed applied."""
        return self.train.model_copy(update={"seed": self.seed})

    @staticmethod
    def load(path: Optional[Union[str, PathLike]] = None, environ: Optional[dict] = None) -> "PipelineConfig":
        """Load a config file (or defaults when path is None) and apply the seed override."""
        data = {}
        if path is not None:
            text = read_text(path, "config file", ConfigError)
            try:
                data = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: invalid JSON: {e}") from e
        try:
            config = PipelineConfig.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"{path}: invalid config: {e}") from e
        return config.with_env_overrides(environ)

    def with_env_overrides(self, environ: Optional[dict] = None) -> "PipelineConfig":
        environ = os.environ if environ is None else environ
        seed = env_seed(environ)
        if seed is None:
            return self
        return self.model_copy(update={"seed": seed})

    def with_overrides(self, **train_overrides) -> "PipelineConfig":
        """Copy with non-None training fields replaced; validates the result."""
        updates = {k: v for k, v in train_overrides.items() if v is not None}
        if not updates:
            return self
        try:
            train = TrainConfig.model_validate({**self.train.model_dump(), **updates})
        except ValidationError as e:
            raise ConfigError(f"invalid training override: {e}") from e
        return self.model_copy(update={"train": train})


def env_seed(environ: Optional[dict] = None) -> Optional[int]:
    environ = os.environ if environ is None else environ
    value = environ.get(SEED_ENV_VAR)
    if value is None or value == "":
        return None
    try:
        return int(value)
    except ValueError as e:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {value!r}") from e

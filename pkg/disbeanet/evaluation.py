"""RMSE metrics and predicted-vs-truth comparison reports."""
import csv
import io
import json
import logging
from os import PathLike
from typing import Sequence, Union

import numpy as np
from pydantic import BaseModel, Field

from .errors import DataValidationError
from .geodesy import destination_point, great_circle_distance_nm
from .types import EarthModel, GeoPoint, GroundTruthRecord, RangeBearing, NM_IN_METERS
from .utils.files import atomic_write_text

logger = logging.getLogger(__name__)

SERIES_COLUMNS = ("t", "dist_pred", "dist_true", "brg_pred", "brg_true", "lat_pred", "lat_true", "lon_pred", "lon_true")
DEFAULT_DISTANCE_TOLERANCE = 0.10  # relative
DEFAULT_BEARING_TOLERANCE_DEG = 5.0


def _paired_arrays(predicted, actual) -> tuple[np.ndarray, np.ndarray]:
    predicted = np.asarray(predicted, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if predicted.ndim != 1 or predicted.shape != actual.shape:
        raise DataValidationError(f"length mismatch: {predicted.shape} predicted vs {actual.shape} actual")
    if len(predicted) == 0:
        raise DataValidationError("cannot compute RMSE of empty series")
    return predicted, actual


def rmse(predicted: Sequence[float], actual: Sequence[float]) -> float:
    """sqrt(sum((predicted - actual)^2) / N)."""
    predicted, actual = _paired_arrays(predicted, actual)
    residuals = predicted - actual
    return float(np.sqrt(np.sum(residuals * residuals) / len(residuals)))


def circular_residuals_deg(predicted: Sequence[float], actual: Sequence[float]) -> np.ndarray:
    """predicted - actual, each wrapped into (-180, 180]."""
    predicted, actual = _paired_arrays(predicted, actual)
    residuals = predicted - actual
    wrapped = np.mod(residuals + 180.0, 360.0) - 180.0
    wrapped = np.where(wrapped == -180.0, 180.0, wrapped)
    # residuals already in range are kept bit-exact
    in_range = (residuals > -180.0) & (residuals <= 180.0)
    return np.where(in_range, residuals, wrapped)


def circular_rmse_deg(predicted_deg: Sequence[float], actual_deg: Sequence[float]) -> float:
    residuals = circular_residuals_deg(predicted_deg, actual_deg)
    return float(np.sqrt(np.sum(residuals * residuals) / len(residuals)))


def within_tolerance(residuals: Sequence[float], tolerance) -> float:
    """Fraction of residuals with |residual| <= tolerance (scalar or per-sample)."""
    residuals = np.abs(np.asarray(residuals, dtype=np.float64))
    if len(residuals) == 0:
        raise DataValidationError("cannot compute accuracy of empty series")
    return float(np.mean(residuals <= np.asarray(tolerance, dtype=np.float64)))


class EvalSeries(BaseModel):
    t: list[float] = Field(default_factory=list)
    dist_pred: list[float] = Field(default_factory=list)
    dist_true: list[float] = Field(default_factory=list)
    brg_pred: list[float] = Field(default_factory=list)
    brg_true: list[float] = Field(default_factory=list)
    lat_pred: list[float] = Field(default_factory=list)
    lat_true: list[float] = Field(default_factory=list)
    lon_pred: list[float] = Field(default_factory=list)
    lon_true: list[float] = Field(default_factory=list)

    def rows(self) -> list[tuple[float, ...]]:
        return list(zip(*(getattr(self, c) for c in SERIES_COLUMNS)))


class EvalReport(BaseModel):
    n_samples: int
    rmse_distance_nm: float
    rmse_bearing_deg: float
    rmse_bearing_linear_deg: float
    rmse_lat_deg: float
    rmse_lon_deg: float
    mean_position_error_m: float
    max_position_error_m: float
    max_lat_error_arcsec: float
    max_lon_error_arcsec: float
    distance_accuracy: float
    bearing_accuracy: float
    distance_tolerance: float
    bearing_tolerance_deg: float
    series: EvalSeries

    def scalars(self) -> dict:
        return self.model_dump(exclude={"series"})


def evaluate(
    predictions: Sequence[tuple[float, RangeBearing]],
    truth: Sequence[GroundTruthRecord],
    cameras: Sequence[GeoPoint],
    earth: EarthModel = EarthModel(),
    distance_tolerance: float = DEFAULT_DISTANCE_TOLERANCE,
    bearing_tolerance_deg: float = DEFAULT_BEARING_TOLERANCE_DEG,
) -> EvalReport:
    """Compare time-aligned predictions with ground truth, including geo-referenced positions."""
    if not (len(predictions) == len(truth) == len(cameras)):
        raise DataValidationError(
            f"length mismatch: {len(predictions)} predictions, {len(truth)} truth records, {len(cameras)} cameras"
        )
    if len(predictions) == 0:
        raise DataValidationError("nothing to evaluate: no samples")

    series = EvalSeries()
    position_errors_m = []
    for (t, rb), gt, camera in zip(predictions, truth, cameras):
        predicted_position = destination_point(camera, rb, earth)
        series.t.append(t)
        series.dist_pred.append(rb.distance_nm)
        series.dist_true.append(gt.distance_nm)
        series.brg_pred.append(rb.bearing_deg)
        series.brg_true.append(gt.bearing_deg)
        series.lat_pred.append(predicted_position.lat_deg)
        series.lat_true.append(gt.vessel.lat_deg)
        series.lon_pred.append(predicted_position.lon_deg)
        series.lon_true.append(gt.vessel.lon_deg)
        position_errors_m.append(great_circle_distance_nm(predicted_position, gt.vessel, earth) * NM_IN_METERS)

    lat_errors = np.abs(np.subtract(series.lat_pred, series.lat_true))
    lon_errors = np.abs(np.subtract(series.lon_pred, series.lon_true))
    distance_residuals = np.subtract(series.dist_pred, series.dist_true)
    report = EvalReport(
        n_samples=len(series.t),
        rmse_distance_nm=rmse(series.dist_pred, series.dist_true),
        rmse_bearing_deg=circular_rmse_deg(series.brg_pred, series.brg_true),
        rmse_bearing_linear_deg=rmse(series.brg_pred, series.brg_true),
        rmse_lat_deg=rmse(series.lat_pred, series.lat_true),
        rmse_lon_deg=rmse(series.lon_pred, series.lon_true),
        mean_position_error_m=float(np.mean(position_errors_m)),
        max_position_error_m=float(np.max(position_errors_m)),
        max_lat_error_arcsec=float(np.max(lat_errors) * 3600.0),
        max_lon_error_arcsec=float(np.max(lon_errors) * 3600.0),
        distance_accuracy=within_tolerance(distance_residuals, distance_tolerance * np.asarray(series.dist_true)),
        bearing_accuracy=within_tolerance(circular_residuals_deg(series.brg_pred, series.brg_true),
                                          bearing_tolerance_deg),
        distance_tolerance=distance_tolerance,
        bearing_tolerance_deg=bearing_tolerance_deg,
        series=series,
    )
    logger.info(
        f"Evaluated {report.n_samples} samples: distance RMSE {report.rmse_distance_nm:.4f} NM, "
        f"bearing RMSE {report.rmse_bearing_deg:.3f} deg, mean position error {report.mean_position_error_m:.1f} m"
    )
    return report


def dumps_series_csv(report: EvalReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SERIES_COLUMNS)
    for row in report.series.rows():
        writer.writerow([repr(float(v)) for v in row])
    return buffer.getvalue()


def emit_report(report: EvalReport, json_path: Union[str, PathLike], csv_path: Union[str, PathLike]):
    """Write the scalar report as JSON and the per-sample series as CSV."""
    atomic_write_text(json_path, json.dumps(report.scalars(), indent=2) + "\n")
    atomic_write_text(csv_path, dumps_series_csv(report))

import json
import math
import os
import tempfile
from pathlib import Path

from micropytest.decorators import tag

from disbeanet.config import PathsConfig, PipelineConfig
from disbeanet.core import run_synth, run_train
from disbeanet.geodesy import destination_point, inverse_problem
from disbeanet.types import GeoPoint, RangeBearing

CAMERA = GeoPoint(10.0, 20.0)
DEPTHS = [1, 2, 3, 5, 20]


def offset(north_nm, east_nm):
    return destination_point(CAMERA, RangeBearing(math.hypot(north_nm, east_nm),
                                                  math.degrees(math.atan2(east_nm, north_nm)) % 360.0))


def crossing_scenario(pixel_sd=0.0):
    """1200 frames of a vessel crossing from 2.6 NM north-west to 1 NM north-east of the camera."""
    start, end = offset(2.4, -0.9), offset(0.9, 0.35)
    leg = inverse_problem(start, end)
    duration_s = 600.0
    return {
        "camera": {"lat_deg": CAMERA.lat_deg, "lon_deg": CAMERA.lon_deg, "heading_deg": 0.0, "focal_px": 1000.0},
        "vessel": {"lat_deg": start.lat_deg, "lon_deg": start.lon_deg,
                   "speed_kn": leg.distance_nm / duration_s * 3600.0, "course_deg": leg.bearing_deg,
                   "length_m": 60.0, "height_m": 18.0},
        "duration_s": duration_s,
        "fps": 2.0,
        "noise": {"pixel_sd": pixel_sd, "dropout": 0.0},
        "seed": 0,
    }


def synth_and_config(tmp, scenario):
    path = os.path.join(tmp, "scenario.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scenario, f)
    outputs = run_synth(path, tmp, seed=0)
    return outputs, PipelineConfig(paths=PathsConfig(out_dir=Path(tmp)), seed=0)


@tag("slow")
def test_noiseless_crossing_is_recovered(ctx):
    with tempfile.TemporaryDirectory() as tmp:
        outputs, config = synth_and_config(tmp, crossing_scenario())
        assert outputs.stats.frames >= 1000
        assert outputs.stats.out_of_fov == 0
        outcome = run_train(config)

    report = outcome.val_report
    mean_range = sum(report.series.dist_true) / report.n_samples
    ctx.add_artifact("validation", {
        "distance_rmse_pct": 100.0 * outcome.val_rmse[0] / mean_range,
        "bearing_rmse_deg": outcome.val_rmse[1],
        "mean_position_error_m": report.mean_position_error_m,
        "epochs_run": outcome.network.metadata.epochs_run,
    })
    assert 0.5 <= min(report.series.dist_true) and max(report.series.dist_true) <= 3.0
    assert outcome.val_rmse[0] < 0.02 * mean_range
    assert outcome.val_rmse[1] < 1.0
    assert report.mean_position_error_m < 75.0


@tag("slow")
def test_three_hidden_layers_match_the_best_depth(ctx):
    # one pixel of box noise gives every depth the same error floor to converge to
    with tempfile.TemporaryDirectory() as tmp:
        _, config = synth_and_config(tmp, crossing_scenario(pixel_sd=1.0))
        outcome = run_train(config, sweep_depths=DEPTHS)

    rows = {row.depth: row for row in outcome.sweep}
    assert list(rows) == DEPTHS
    ctx.add_artifact("sweep", [vars(row) for row in outcome.sweep])
    best_loss = min(row.best_val_loss for row in rows.values())
    best_distance = min(row.rmse_distance_nm for row in rows.values())
    assert math.sqrt(rows[3].best_val_loss) <= 1.10 * math.sqrt(best_loss)
    assert rows[3].rmse_distance_nm <= 1.10 * best_distance
    assert rows[3].epochs_run < config.train.epochs

import math
import os
import tempfile

from disbeanet.dataset import load_detections, load_ground_truth, pair_samples
from disbeanet.errors import ConfigError, DataValidationError
from disbeanet.geodesy import destination_point, wrap_signed_deg
from disbeanet.stats import SynthStats
from disbeanet.synth import Scenario, generate, observe, project, propagate, simulate
from disbeanet.types import GeoPoint, RangeBearing


def scenario(**overrides):
    data = {
        "camera": {"lat_deg": 0.0, "lon_deg": 0.0, "heading_deg": 0.0, "focal_px": 1000.0},
        "vessel": {"lat_deg": 0.05, "lon_deg": 0.0, "speed_kn": 10.0, "course_deg": 90.0,
                   "length_m": 50.0, "height_m": 15.0},
        "duration_s": 10.0,
        "fps": 10.0,
        "seed": 3,
    }
    data.update(overrides)
    return Scenario.model_validate(data)


def test_propagate_start_position():
    s = scenario()
    p = propagate(s, 0.0)
    assert abs(p.lat_deg - 0.05) < 1e-12
    assert abs(p.lon_deg) < 1e-12


def test_propagate_one_hour_north():
    s = scenario(vessel={"lat_deg": 0.0, "lon_deg": 0.0, "speed_kn": 60.0, "course_deg": 0.0,
                         "length_m": 50.0, "height_m": 15.0}, duration_s=3600.0, fps=1.0)
    p = propagate(s, 3600.0)
    assert abs(p.lat_deg - 0.999347) < 1e-6
    assert p.lon_deg == 0.0


def test_propagate_rejects_time_outside_scenario():
    try:
        propagate(scenario(), 11.0)
    except DataValidationError:
        pass
    else:
        assert False, "expected DataValidationError"


def test_box_height_by_hand():
    s = scenario(camera={"lat_deg": 0.0, "lon_deg": 0.0, "focal_px": 800.0},
                 vessel={"lat_deg": 0.01, "lon_deg": 0.0, "speed_kn": 0.0, "course_deg": 0.0,
                         "length_m": 20.0, "height_m": 5.0})
    box = project(s, RangeBearing(1000.0 / 1852.0, 0.0))
    assert abs(box.h - 4.0) < 1e-9
    assert abs(box.w - 16.0) < 1e-9


def test_dead_ahead_is_centered():
    s = scenario()
    box = project(s, RangeBearing(3.0, 0.0))
    assert abs(box.x + box.w / 2 - s.camera.frame_w / 2) < 1e-9
    assert abs(box.y + box.h / 2 - s.camera.frame_h / 2) < 1e-9


def test_doubling_range_halves_box():
    s = scenario()
    near = project(s, RangeBearing(2.0, 5.0))
    far = project(s, RangeBearing(4.0, 5.0))
    assert abs(far.h - near.h / 2) < 1e-12
    assert abs(far.w - near.w / 2) < 1e-12


def test_behind_camera_is_out_of_view():
    s = scenario()
    assert project(s, RangeBearing(2.0, 180.0)) is None
    vessel = destination_point(GeoPoint(0.0, 0.0), RangeBearing(2.0, 180.0))
    assert observe(s, vessel).status == "out_of_fov"


def test_vessel_at_camera_is_rejected():
    try:
        observe(scenario(), GeoPoint(0.0, 0.0))
    except DataValidationError:
        pass
    else:
        assert False, "expected DataValidationError"


def test_frame_count_and_detections():
    stream, truth, stats = simulate(scenario())
    assert stats.frames == 100
    assert len(truth) == 100
    assert stats.detections == len(stream) == 100
    assert stats.dropouts == stats.out_of_fov == 0
    assert [d.t for d in stream] == [k / 10.0 for k in range(100)]
    assert SynthStats.from_observations([]) == SynthStats()


def test_dropout_and_noise():
    s = scenario(noise={"pixel_sd": 1.0, "dropout": 0.5}, duration_s=20.0)
    stream, truth, stats = simulate(s)
    assert stats.frames == 200
    assert stats.detections + stats.dropouts + stats.out_of_fov == 200
    assert 50 < stats.dropouts < 150
    noiseless, _, _ = simulate(scenario(duration_s=20.0))
    by_frame = {d.frame_index: d for d in noiseless}
    assert any(abs(d.x - by_frame[d.frame_index].x) > 1e-6 for d in stream)


def test_truth_matches_geometry():
    s = scenario()
    _, truth, _ = simulate(s)
    for record in truth[::10]:
        assert record.camera == GeoPoint(0.0, 0.0)
        p = destination_point(record.camera, record.range_bearing)
        assert abs(p.lat_deg - record.vessel.lat_deg) < 1e-9
        assert abs(p.lon_deg - record.vessel.lon_deg) < 1e-9


def test_moving_camera():
    s = scenario(camera={"lat_deg": 0.0, "lon_deg": 0.0, "speed_kn": 20.0, "course_deg": 0.0})
    _, truth, _ = simulate(s)
    assert truth[0].camera == GeoPoint(0.0, 0.0)
    assert truth[-1].camera.lat_deg > 0.0
    assert truth[-1].distance_nm < truth[0].distance_nm


def test_generate_is_deterministic():
    s = scenario(noise={"pixel_sd": 0.5, "dropout": 0.1})
    with tempfile.TemporaryDirectory() as tmp:
        outputs = []
        for run in range(2):
            det_path = os.path.join(tmp, f"d{run}.jsonl")
            truth_path = os.path.join(tmp, f"t{run}.csv")
            generate(s, det_path, truth_path)
            with open(det_path, "rb") as f1, open(truth_path, "rb") as f2:
                outputs.append((f1.read(), f2.read()))
    assert outputs[0] == outputs[1]


def test_scenario_load_errors():
    with tempfile.TemporaryDirectory() as tmp:
        missing = os.path.join(tmp, "missing.json")
        bad = os.path.join(tmp, "bad.json")
        with open(bad, "w") as f:
            f.write('{"camera": {}}')
        latin1 = os.path.join(tmp, "latin1.json")
        with open(latin1, "wb") as f:
            f.write(b'{"source": "caf\xe9"}')
        for path in (missing, bad, latin1, tmp):
            try:
                Scenario.load(path)
            except ConfigError as e:
                assert path in str(e)
            else:
                assert False, f"expected ConfigError for {path}"


def crossing():
    return scenario(
        vessel={"lat_deg": 0.02, "lon_deg": -0.015, "speed_kn": 20.0, "course_deg": 90.0,
                "length_m": 60.0, "height_m": 18.0},
        duration_s=60.0,
        fps=5.0,
    )


def assert_geometry_recovered(s, detections, truth):
    camera = s.camera
    by_time = {r.t: r for r in truth}
    for d in detections:
        record = by_time[d.t]
        beta = math.degrees(math.atan((d.x + d.w / 2 - camera.frame_w / 2) / camera.focal_px))
        assert abs(beta - wrap_signed_deg(record.bearing_deg - camera.heading_deg)) < 1e-9
        range_m = camera.focal_px * s.vessel.height_m / d.h
        assert abs(range_m - record.range_bearing.distance_m) < 1e-6


def test_noiseless_boxes_invert_to_truth(ctx):
    s = crossing()
    stream, truth, stats = simulate(s)
    ctx.debug(f"{stats.detections} detections, {stats.out_of_fov} out of view")
    assert stats.detections > 100
    assert stats.out_of_fov > 0
    assert_geometry_recovered(s, stream.detections, truth)


def test_generated_files_load_and_pair():
    s = crossing()
    with tempfile.TemporaryDirectory() as tmp:
        dets, gt = os.path.join(tmp, "detections.jsonl"), os.path.join(tmp, "truth.csv")
        stats = generate(s, dets, gt)
        stream, truth = load_detections(dets), load_ground_truth(gt)
    assert len(stream) == stats.detections
    assert len(truth) == stats.frames
    assert_geometry_recovered(s, stream.detections, truth)
    pairing = pair_samples(stream, truth, max_dt=0.5)
    assert pairing.dropped == 0
    assert len(pairing.samples) == len(stream)

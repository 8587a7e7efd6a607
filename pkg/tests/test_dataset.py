import json
import os
import tempfile

import numpy as np

from disbeanet.dataset import (
    DetectionStream,
    LabeledSample,
    apply_norm,
    dumps_detections,
    dumps_ground_truth,
    extract_features,
    fit_norm_stats,
    interpolate_truth,
    invert_norm,
    load_detections,
    load_ground_truth,
    pair_samples,
    parse_detections,
    parse_ground_truth,
    split,
)
from disbeanet.errors import DataFormatError, DataValidationError, InputError, NormalizationError
from disbeanet.types import Detection, FeatureVector, GeoPoint, GroundTruthRecord

HEADER = '{"type":"header","frame_w":640,"frame_h":480,"source":"test"}\n'
TRUTH_HEADER = "t,distance_nm,bearing_deg,lat_deg,lon_deg,cam_lat_deg,cam_lon_deg\n"
ORIGIN = GeoPoint(0.0, 0.0)


def truth(t, distance, bearing):
    return GroundTruthRecord(t, distance, bearing, GeoPoint(0.01 * t, 0.0), ORIGIN)


def sample(x, y, w, h, class_id, distance, bearing, t=0.0):
    d = Detection(frame_index=0, t=t, class_id=class_id, x=x, y=y, w=w, h=h)
    return LabeledSample(extract_features(d, 640, 480), truth(t, distance, bearing), d)


def expect(exc_type, fn, *args, **kwargs):
    try:
        fn(*args, **kwargs)
    except exc_type as e:
        return e
    assert False, f"expected {exc_type.__name__}"


def test_parse_empty_file():
    stream = parse_detections("")
    assert len(stream) == 0
    assert stream.frames() == []


def test_parse_single_record():
    record = '{"frame":0,"t":0.0,"class":0,"x":100,"y":50,"w":40,"h":20,"conf":0.9}\n'
    stream = parse_detections(HEADER + record)
    assert (stream.frame_w, stream.frame_h, stream.source) == (640, 480, "test")
    assert stream.detections == [
        Detection(frame_index=0, t=0.0, class_id=0, x=100.0, y=50.0, w=40.0, h=20.0, confidence=0.9)
    ]


def test_parse_zero_width_is_invalid():
    record = '{"frame":0,"t":0.0,"class":0,"x":100,"y":50,"w":0,"h":20,"conf":0.9}\n'
    expect(DataValidationError, parse_detections, HEADER + record)


def test_parse_box_outside_frame():
    record = '{"frame":0,"t":0.0,"class":0,"x":620,"y":50,"w":40,"h":20,"conf":0.9}\n'
    expect(DataValidationError, parse_detections, HEADER + record)


def test_parse_malformed_line_names_line():
    text = HEADER + '{"frame":0,"t":0.0,"class":0,"x":1,"y":1,"w":4,"h":2,"conf":0.9}\n' + "{not json\n"
    e = expect(DataFormatError, parse_detections, text, "dets.jsonl")
    assert e.line == 3
    assert str(e).startswith("dets.jsonl:3: ")


def test_detections_serialization_reparses():
    stream = DetectionStream(frame_w=640, frame_h=480, source="s", detections=[
        Detection(0, 0.0, 0, 0.1, 2.0, 3.0 / 7.0, 4.0, 0.5),
        Detection(0, 0.0, 1, 10.0, 20.0, 30.0, 40.0, 1.0),
        Detection(2, 0.2, 0, 11.0, 21.0, 31.0, 41.0, 0.25),
    ])
    text = dumps_detections(stream)
    assert json.loads(text.splitlines()[0])["type"] == "header"
    again = parse_detections(text)
    assert again.detections == stream.detections
    assert [len(f) for f in again.frames()] == [2, 1]


def test_load_files_not_utf8():
    record = b'{"frame":0,"t":0.0,"class":0,"x":1,"y":1,"w":4,"h":2,"conf":0.9}\n'
    with tempfile.TemporaryDirectory() as tmp:
        dets = os.path.join(tmp, "dets.jsonl")
        with open(dets, "wb") as f:
            f.write(HEADER.encode() + record + b'{"source":"\xff"}\n')
        e = expect(DataFormatError, load_detections, dets)
        assert e.line == 3
        assert str(e).startswith(f"{dets}:3: ")

        gt = os.path.join(tmp, "truth.csv")
        with open(gt, "wb") as f:
            f.write(b"\xfft," + TRUTH_HEADER[2:].encode())
        e = expect(DataFormatError, load_ground_truth, gt)
        assert e.line == 1

        expect(InputError, load_detections, tmp)
        expect(InputError, load_ground_truth, os.path.join(tmp, "missing.csv"))


def test_ground_truth_header_only():
    assert parse_ground_truth(TRUTH_HEADER) == []


def test_ground_truth_single_row():
    records = parse_ground_truth(TRUTH_HEADER + "0.5,1.25,270.0,0.1,-179.9,0.0,190.0\n")
    assert len(records) == 1
    r = records[0]
    assert (r.t, r.distance_nm, r.bearing_deg) == (0.5, 1.25, 270.0)
    assert r.vessel == GeoPoint(0.1, -179.9)
    assert r.camera == GeoPoint(0.0, -170.0)


def test_ground_truth_equal_timestamps():
    rows = "1.0,1,0,0,0,0,0\n1.0,2,0,0,0,0,0\n"
    expect(DataValidationError, parse_ground_truth, TRUTH_HEADER + rows)


def test_ground_truth_missing_column():
    expect(DataFormatError, parse_ground_truth, "t,distance_nm,bearing_deg\n0,1,2\n")


def test_ground_truth_serialization_is_exact():
    records = [truth(0.1, 1.0 / 3.0, 359.99999999999994), truth(0.2, 2.0, 0.1)]
    assert parse_ground_truth(dumps_ground_truth(records)) == records


def test_full_frame_features():
    f = extract_features(Detection(0, 0.0, 3, 0.0, 0.0, 640.0, 480.0), 640, 480)
    assert f == FeatureVector(0.5, 0.5, 1.0, 1.0, 1.0, 640.0 / 480.0, 3.0)


def test_features_by_hand():
    f = extract_features(Detection(0, 0.0, 0, 100.0, 50.0, 40.0, 20.0), 640, 480)
    expected = [0.1875, 0.125, 0.0625, 0.041667, 0.0026042, 2.0, 0.0]
    assert np.allclose(f.as_array(), expected, atol=5e-7)


def test_interpolate_exact_hit():
    gts = [truth(0.0, 1.0, 10.0), truth(1.0, 2.0, 20.0)]
    assert interpolate_truth(gts, 1.0, 0.5) == gts[1]


def test_interpolate_midpoint():
    gts = [truth(0.0, 1.0, 350.0), truth(1.0, 2.0, 10.0)]
    mid = interpolate_truth(gts, 0.5, 0.5)
    assert mid.distance_nm == 1.5
    assert mid.bearing_deg == 0.0


def test_interpolate_outside_window():
    gts = [truth(0.0, 1.0, 0.0), truth(10.0, 2.0, 0.0)]
    assert interpolate_truth(gts, 5.0, 0.5) is None
    assert interpolate_truth(gts, 10.4, 0.5).distance_nm == 2.0
    assert interpolate_truth(gts, 10.6, 0.5) is None
    assert interpolate_truth([], 0.0, 0.5) is None


def test_pair_samples_drops_unmatched():
    stream = DetectionStream(frame_w=640, frame_h=480, detections=[
        Detection(0, 0.0, 0, 10.0, 10.0, 20.0, 10.0),
        Detection(1, 5.0, 0, 10.0, 10.0, 20.0, 10.0),
    ])
    result = pair_samples(stream, [truth(0.0, 1.0, 0.0), truth(0.1, 1.1, 0.0)])
    assert result.dropped == 1
    assert len(result.samples) == 1
    assert result.samples[0].detection is stream.detections[0]


def test_pair_samples_needs_frame_size():
    expect(InputError, pair_samples, [Detection(0, 0.0, 0, 1.0, 1.0, 2.0, 2.0)], [truth(0.0, 1.0, 0.0)])


def two_samples():
    return [
        sample(100.0, 50.0, 40.0, 20.0, 0, 1.0, 10.0),
        sample(200.0, 100.0, 80.0, 30.0, 1, 3.0, 30.0),
    ]


def test_norm_stats_population_sd():
    stats = fit_norm_stats(two_samples())
    assert stats.target_mean == [2.0, 20.0]
    assert stats.target_std == [1.0, 10.0]
    assert stats.constant_features == []


def test_apply_norm_on_mean_sample():
    stats = fit_norm_stats(two_samples())
    mean_sample = LabeledSample(FeatureVector(*stats.feature_mean), truth(0.0, 2.0, 20.0))
    x, y = apply_norm(stats, mean_sample)
    assert np.all(x == 0.0)
    assert np.all(y == 0.0)
    assert invert_norm(stats, y) == (2.0, 20.0)


def test_norm_stats_zero_variance():
    samples = [sample(100.0, 50.0, 40.0, 20.0, 0, 1.0, 10.0), sample(200.0, 100.0, 80.0, 30.0, 0, 3.0, 30.0)]
    e = expect(NormalizationError, fit_norm_stats, samples)
    assert e.feature_index == 6
    stats = fit_norm_stats(samples, allow_constant=True)
    assert stats.constant_features == [6]
    assert stats.feature_std[6] == 1.0


def test_norm_stats_needs_two_samples():
    expect(NormalizationError, fit_norm_stats, two_samples()[:1])


def test_sincos_targets():
    stats = fit_norm_stats(two_samples(), bearing_encoding="sincos")
    assert stats.num_targets == 3
    _, y = apply_norm(stats, two_samples()[1])
    distance, bearing = invert_norm(stats, y)
    assert abs(distance - 3.0) < 1e-12
    assert abs(bearing - 30.0) < 1e-9


def test_split_sizes():
    train, val = split(list(range(10)), 0.8, seed=1)
    assert (len(train), len(val)) == (8, 2)
    assert sorted(train + val) == list(range(10))


def test_split_deterministic():
    assert split(list(range(50)), 0.8, 7) == split(list(range(50)), 0.8, 7)


def test_split_seeds_differ():
    items = list(range(100))
    for seed in range(20):
        assert split(items, 0.8, seed) != split(items, 0.8, seed + 100)


def test_split_needs_two_samples():
    expect(InputError, split, [1], 0.8, 0)

import json
import os
import tempfile
from pathlib import Path

from disbeanet.config import PipelineConfig, env_seed
from disbeanet.errors import ConfigError


def expect_config_error(fn, *args, **kwargs):
    try:
        fn(*args, **kwargs)
    except ConfigError as e:
        return e
    assert False, "expected ConfigError"


def test_defaults():
    config = PipelineConfig.load(environ={})
    assert config.seed == 0
    assert config.train.depth == 3
    assert config.train.epochs == 5000
    assert config.earth.radius_nm == 3440.065
    assert config.paths.model_path == Path("out") / "model.json"
    assert config.paths.report_csv_path == Path("out") / "report.csv"


def test_load_file_and_paths():
    data = {
        "paths": {"out_dir": "run1", "truth": "data/gt.csv"},
        "train": {"depth": 2, "learning_rate": 0.05},
        "tracker": {"iou_threshold": 0.5},
        "camera": {"lat_deg": 32.7, "lon_deg": 242.77},
        "seed": 11,
    }
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "config.json")
        with open(path, "w") as f:
            json.dump(data, f)
        config = PipelineConfig.load(path, environ={})
    assert config.paths.truth_path == Path("data/gt.csv")
    assert config.paths.detections_path == Path("run1") / "detections.jsonl"
    assert config.train.depth == 2
    assert config.tracker.iou_threshold == 0.5
    assert abs(config.camera.position.lon_deg + 117.23) < 1e-9
    assert config.train_config.seed == 11


def test_env_seed_overrides_file():
    config = PipelineConfig.load(environ={"DISBEANET_SEED": "7"})
    assert config.seed == 7
    assert config.train_config.seed == 7
    assert env_seed({}) is None
    assert env_seed({"DISBEANET_SEED": ""}) is None
    expect_config_error(env_seed, {"DISBEANET_SEED": "seven"})


def test_training_overrides():
    config = PipelineConfig.load(environ={})
    updated = config.with_overrides(epochs=10, depth=None, optimizer="adam")
    assert updated.train.epochs == 10
    assert updated.train.depth == 3
    assert updated.train.optimizer == "adam"
    assert config.train.epochs == 5000
    expect_config_error(config.with_overrides, learning_rate=-1.0)
    expect_config_error(config.with_overrides, activation="sigmoid")


def test_invalid_config_files():
    with tempfile.TemporaryDirectory() as tmp:
        missing = os.path.join(tmp, "missing.json")
        broken = os.path.join(tmp, "broken.json")
        unknown = os.path.join(tmp, "unknown.json")
        with open(broken, "w") as f:
            f.write("{")
        with open(unknown, "w") as f:
            json.dump({"learning_rate": 0.1}, f)
        for path in (missing, broken, unknown):
            e = expect_config_error(PipelineConfig.load, path, environ={})
            assert path in str(e)


def test_explicit_seed_only_when_set():
    assert PipelineConfig.load(environ={}).explicit_seed is None
    assert PipelineConfig.load(environ={"DISBEANET_SEED": "4"}).explicit_seed == 4
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "config.json")
        with open(path, "w") as f:
            json.dump({"seed": 0}, f)
        assert PipelineConfig.load(path, environ={}).explicit_seed == 0
        assert PipelineConfig.load(path, environ={"DISBEANET_SEED": "8"}).explicit_seed == 8


def test_config_file_not_utf8():
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "config.json")
        with open(path, "wb") as f:
            f.write(b'{\n  "seed": 1,\n  "scenario": "\xff.json"\n}\n')
        e = expect_config_error(PipelineConfig.load, path, environ={})
        assert f"{path}:3:" in str(e)
        e = expect_config_error(PipelineConfig.load, tmp, environ={})
        assert tmp in str(e)

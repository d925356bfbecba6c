import json

import pytest

from badfusion.densepred import (
    IMAGES_SCHEMA_VERSION,
    PredictionSet,
    RegionRecord,
    SCHEMA_VERSION,
    load_images_manifest,
    load_prediction_file,
    parse_prediction_json,
    write_images_manifest,
)
from badfusion.errors import MissingPrediction, SchemaError


def valid_doc():
    return {
        "version": SCHEMA_VERSION,
        "trigger_size": [15, 15],
        "frames": {
            "000001": [
                {"vehicle_index": 0, "x": 30.5, "y": 40.0, "w": 15, "h": 15, "score": 0.8},
                {"vehicle_index": 1, "x": 90.0, "y": 22.0, "w": 15, "h": 15, "score": 0.4,
                 "bbox2d": [10, 10, 60, 60], "point_count": 33},
            ]
        },
    }


def test_parse_valid_document():
    preds = parse_prediction_json(json.dumps(valid_doc()))
    assert preds.trigger_size == (15, 15)
    assert len(preds.frames["000001"]) == 2
    (rec,) = preds.records_for("000001", 1)
    assert rec.extras["point_count"] == 33
    assert rec.extras["bbox2d"] == [10, 10, 60, 60]


def test_roundtrip_is_stable():
    preds = parse_prediction_json(json.dumps(valid_doc()))
    text = preds.to_json()
    assert parse_prediction_json(text).to_json() == text


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(version="other/v9"),
        lambda d: d.pop("version"),
        lambda d: d.pop("trigger_size"),
        lambda d: d["frames"]["000001"][0].pop("score"),
        lambda d: d["frames"]["000001"][0].update(score=1.5),
        lambda d: d["frames"]["000001"][0].update(score=-0.1),
        lambda d: d["frames"]["000001"][0].update(w=0),
        lambda d: d["frames"]["000001"][0].update(vehicle_index="a"),
        lambda d: d.update(frames=[1, 2]),
    ],
)
def test_schema_violations_rejected(mutate):
    doc = valid_doc()
    mutate(doc)
    with pytest.raises(SchemaError):
        parse_prediction_json(json.dumps(doc))


def test_not_json_rejected():
    with pytest.raises(SchemaError):
        parse_prediction_json("{nope")


def test_best_for_prefers_score_then_order():
    preds = PredictionSet(
        trigger_size=(15, 15),
        frames={
            "f": [
                RegionRecord(vehicle_index=0, x=1, y=1, w=15, h=15, score=0.5),
                RegionRecord(vehicle_index=0, x=2, y=2, w=15, h=15, score=0.9),
                RegionRecord(vehicle_index=0, x=3, y=3, w=15, h=15, score=0.9),
            ]
        },
    )
    assert preds.best_for("f", 0).x == 2  # first of the tied top scores


def test_best_for_missing_vehicle():
    preds = parse_prediction_json(json.dumps(valid_doc()))
    with pytest.raises(MissingPrediction):
        preds.best_for("000001", 7)
    with pytest.raises(MissingPrediction):
        preds.best_for("missing_frame", 0)


def test_load_prediction_file(tmp_path):
    path = tmp_path / "preds.json"
    path.write_text(json.dumps(valid_doc()))
    assert load_prediction_file(path).records_for("000001", 0)


def test_images_manifest_roundtrip(tmp_path):
    path = tmp_path / "images.json"
    write_images_manifest(path, {"000001": "img/000001.png"})
    doc = json.loads(path.read_text())
    assert doc["version"] == IMAGES_SCHEMA_VERSION
    assert load_images_manifest(path) == {"000001": "img/000001.png"}


def test_images_manifest_bad_version(tmp_path):
    path = tmp_path / "images.json"
    path.write_text(json.dumps({"version": "nope/v1", "images": {}}))
    with pytest.raises(SchemaError):
        load_images_manifest(path)

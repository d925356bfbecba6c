"""Dense-region interchange format ("badfusion-densepred/v1").

One JSON document maps frame ids to per-vehicle dense-region boxes. It is
written both by the dataset exporter (as training annotations, with extra
fields) and by the external region predictor (as predictions consumed by
LiDAR-free placement):

    {
      "version": "badfusion-densepred/v1",
      "trigger_size": [15, 15],
      "frames": {
        "000123": [
          {"vehicle_index": 0, "x": 321.5, "y": 174.5, "w": 15, "h": 15,
           "score": 0.93}
        ]
      }
    }

(x, y) is the region center in pixels, (w, h) its size, score in [0, 1].
Records may carry extra keys; the exporter adds "bbox2d" (the vehicle's
2D box) and "point_count" (projected points inside the region) so a
predictor can be trained and scored without touching LiDAR data.

The companion images manifest ("badfusion-densepred-images/v1") maps frame
ids to image paths relative to its own location.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MissingPrediction, SchemaError

SCHEMA_VERSION = "badfusion-densepred/v1"
IMAGES_SCHEMA_VERSION = "badfusion-densepred-images/v1"

_REQUIRED_KEYS = ("vehicle_index", "x", "y", "w", "h", "score")


@dataclass
class RegionRecord:
    vehicle_index: int
    x: float
    y: float
    w: int
    h: int
    score: float
    extras: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        obj = {
            "vehicle_index": self.vehicle_index,
            "x": self.x,
            "y": self.y,
            "w": self.w,
            "h": self.h,
            "score": self.score,
        }
        obj.update(self.extras)
        return obj


@dataclass
class PredictionSet:
    """Parsed badfusion-densepred/v1 document."""

    trigger_size: tuple[int, int]
    frames: dict[str, list[RegionRecord]]

    def records_for(self, frame_id: str, vehicle_index: int) -> list[RegionRecord]:
        return [
            r for r in self.frames.get(frame_id, []) if r.vehicle_index == vehicle_index
        ]

    def best_for(self, frame_id: str, vehicle_index: int) -> RegionRecord:
        """Highest-score record for one vehicle; first wins on score ties."""
        records = self.records_for(frame_id, vehicle_index)
        if not records:
            raise MissingPrediction(
                f"no dense-region prediction for frame {frame_id} "
                f"vehicle {vehicle_index}"
            )
        best = records[0]
        for r in records[1:]:
            if r.score > best.score:
                best = r
        return best

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": SCHEMA_VERSION,
                "trigger_size": list(self.trigger_size),
                "frames": {
                    fid: [r.to_json_obj() for r in recs]
                    for fid, recs in sorted(self.frames.items())
                },
            },
            indent=2,
            sort_keys=True,
        )


def _parse_record(obj: dict, where: str) -> RegionRecord:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: record is not an object")
    for key in _REQUIRED_KEYS:
        if key not in obj:
            raise SchemaError(f"{where}: record missing key {key!r}")
    try:
        score = float(obj["score"])
        w, h = int(obj["w"]), int(obj["h"])
        record = RegionRecord(
            vehicle_index=int(obj["vehicle_index"]),
            x=float(obj["x"]),
            y=float(obj["y"]),
            w=w,
            h=h,
            score=score,
            extras={k: v for k, v in obj.items() if k not in _REQUIRED_KEYS},
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: non-numeric record field ({exc})") from exc
    if not 0.0 <= score <= 1.0:
        raise SchemaError(f"{where}: score {score} outside [0, 1]")
    if w < 1 or h < 1:
        raise SchemaError(f"{where}: non-positive region size {w}x{h}")
    return record


def parse_prediction_json(text: str) -> PredictionSet:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"prediction file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != SCHEMA_VERSION:
        raise SchemaError(
            f"expected a {SCHEMA_VERSION!r} document, got version "
            f"{doc.get('version') if isinstance(doc, dict) else None!r}"
        )
    size = doc.get("trigger_size")
    try:
        ok = isinstance(size, (list, tuple)) and len(size) == 2 and all(
            int(s) >= 1 for s in size
        )
    except (TypeError, ValueError):
        ok = False
    if not ok:
        raise SchemaError("trigger_size must be a [w, h] pair of positive ints")
    frames_obj = doc.get("frames")
    if not isinstance(frames_obj, dict):
        raise SchemaError("frames must map frame ids to record lists")
    frames: dict[str, list[RegionRecord]] = {}
    for fid, recs in frames_obj.items():
        if not isinstance(recs, list):
            raise SchemaError(f"frame {fid}: records must be a list")
        frames[fid] = [_parse_record(r, f"frame {fid}") for r in recs]
    return PredictionSet(trigger_size=(int(size[0]), int(size[1])), frames=frames)


def load_prediction_file(path: Path) -> PredictionSet:
    return parse_prediction_json(Path(path).read_text())


def write_images_manifest(path: Path, images: dict[str, str]) -> None:
    doc = {"version": IMAGES_SCHEMA_VERSION, "images": dict(sorted(images.items()))}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))


def load_images_manifest(path: Path) -> dict[str, str]:
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict) or doc.get("version") != IMAGES_SCHEMA_VERSION:
        raise SchemaError(f"expected a {IMAGES_SCHEMA_VERSION!r} document")
    images = doc.get("images")
    if not isinstance(images, dict):
        raise SchemaError("images must map frame ids to paths")
    return images

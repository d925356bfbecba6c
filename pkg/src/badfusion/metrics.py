"""Evaluation of external 3D-detector outputs.

Consumes the standard results layout (one text file per frame, label lines
plus a trailing confidence score), computes rotated-box IoU in bird's-eye
view and 3D, average precision over Easy cars, and the two attack success
rates. All boxes live in the camera frame: x right, y down (location at the
box bottom face), z forward, yaw about the y axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FrameMismatch, NoAttackedVehicles, ParseError
from .kernels import rect_intersection_area
from .kitti_io import ObjectLabel, classify_difficulty, Difficulty, parse_labels
from .poisoning import AttackGoal, AttackKind, PoisonManifest

BEVBox = tuple[float, float, float, float, float]  # cx, cz, w, l, yaw


@dataclass(frozen=True)
class Detection3D:
    """One detector output box.

    Geometry fields mirror :class:`ObjectLabel`; ``score`` is the detector
    confidence and is mandatory (ground-truth labels have none).
    """

    frame_id: str
    class_name: str
    dims: tuple[float, float, float]   # h, w, l (meters)
    loc: tuple[float, float, float]    # x, y, z (camera frame, meters)
    rotation_y: float
    score: float
    bbox2d: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")
        if min(self.dims) <= 0:
            raise ValueError(f"dims must be positive, got {self.dims}")

    @property
    def volume(self) -> float:
        h, w, l = self.dims
        return h * w * l

    @property
    def is_car(self) -> bool:
        return self.class_name == "Car"


def bev_box(obj: ObjectLabel | Detection3D) -> BEVBox:
    """Bird's-eye-view footprint (ground-plane rectangle) of a labeled box."""
    _, w, l = obj.dims
    x, _, z = obj.loc
    return (x, z, w, l, obj.rotation_y)


# ---------------------------------------------------------------------------
# IoU
# ---------------------------------------------------------------------------

def iou_bev(box_a: BEVBox, box_b: BEVBox) -> float:
    """Exact IoU of two yawed ground-plane rectangles.

    Intersection via convex polygon clipping; degenerate (zero-area) inputs
    give 0 rather than an error.
    """
    area_a = box_a[2] * box_a[3]
    area_b = box_b[2] * box_b[3]
    inter = rect_intersection_area(*box_a, *box_b)
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def iou_3d(obj_a: ObjectLabel | Detection3D, obj_b: ObjectLabel | Detection3D) -> float:
    """IoU of two full 3D boxes.

    The box location marks the bottom-face center with y pointing down, so
    the vertical extent is [y - h, y]. Volume overlap is the BEV rectangle
    intersection times the vertical overlap length.
    """
    inter_area = rect_intersection_area(*bev_box(obj_a), *bev_box(obj_b))
    ha, ya = obj_a.dims[0], obj_a.loc[1]
    hb, yb = obj_b.dims[0], obj_b.loc[1]
    overlap = min(ya, yb) - max(ya - ha, yb - hb)
    if inter_area <= 0.0 or overlap <= 0.0:
        return 0.0
    inter_vol = inter_area * overlap
    vol_a = ha * obj_a.dims[1] * obj_a.dims[2]
    vol_b = hb * obj_b.dims[1] * obj_b.dims[2]
    union = vol_a + vol_b - inter_vol
    if union <= 0.0:
        return 0.0
    return min(max(inter_vol / union, 0.0), 1.0)


def _pair_iou(det: Detection3D, gt: ObjectLabel, iou_kind: str) -> float:
    if iou_kind == "bev":
        return iou_bev(bev_box(det), bev_box(gt))
    return iou_3d(det, gt)


# ---------------------------------------------------------------------------
# results parsing
# ---------------------------------------------------------------------------

def parse_detections(frame_id: str, text: str) -> list[Detection3D]:
    """Parse one result file. Same line format as labels plus the score."""
    out = []
    for label in parse_labels(text):
        if label.score is None:
            raise ParseError(
                f"frame {frame_id}: detection line is missing the score field"
            )
        out.append(
            Detection3D(
                frame_id=frame_id,
                class_name=label.class_name,
                dims=label.dims,
                loc=label.loc,
                rotation_y=label.rotation_y,
                score=label.score,
                bbox2d=label.bbox2d,
            )
        )
    return out


def load_results(results_dir: Path) -> dict[str, list[Detection3D]]:
    """Read a detector results directory (one <frame_id>.txt per frame).

    Empty files are valid (no detections in that frame).
    """
    results_dir = Path(results_dir)
    out: dict[str, list[Detection3D]] = {}
    for path in sorted(results_dir.glob("*.txt")):
        out[path.stem] = parse_detections(path.stem, path.read_text())
    return out


# ---------------------------------------------------------------------------
# average precision
# ---------------------------------------------------------------------------

def average_precision(
    detections: list[Detection3D],
    ground_truth: dict[str, list[ObjectLabel]],
    iou_threshold: float = 0.7,
    mode: str = "40pt",
    iou_kind: str = "3d",
    ignored: dict[str, list[ObjectLabel]] | None = None,
) -> float:
    """Interpolated average precision, as a percentage.

    Detections are matched greedily in descending score; each ground truth
    matches at most once and only at IoU >= iou_threshold. A detection that
    fails to match but overlaps an ``ignored`` box at the threshold is
    dropped from the ranking entirely (benchmark ignore semantics: finding a
    box outside the evaluated stratum is not a false positive). ``mode``
    picks the recall grid: "40pt" (1/40 .. 1) or "11pt" (0, 0.1, .., 1).
    With no ground truth at all the convention is 100 for a silent detector
    and 0 otherwise.
    """
    if mode not in ("40pt", "11pt"):
        raise ValueError(f"unknown AP mode {mode!r}")
    num_gt = sum(len(v) for v in ground_truth.values())
    if num_gt == 0:
        return 0.0 if detections else 100.0
    if not detections:
        return 0.0

    order = sorted(
        range(len(detections)),
        key=lambda i: (-detections[i].score, detections[i].frame_id, i),
    )
    matched: dict[str, list[bool]] = {
        fid: [False] * len(v) for fid, v in ground_truth.items()
    }
    tp = 0
    rank = 0  # counted detections only; ignored ones never enter the curve
    curve = []  # (recall, precision) after each counted detection
    for i in order:
        det = detections[i]
        gts = ground_truth.get(det.frame_id, [])
        best_iou, best_j = 0.0, -1
        for j, gt in enumerate(gts):
            if matched[det.frame_id][j]:
                continue
            iou = _pair_iou(det, gt, iou_kind)
            if iou > best_iou:
                best_iou, best_j = iou, j
        if best_j >= 0 and best_iou >= iou_threshold:
            matched[det.frame_id][best_j] = True
            tp += 1
        elif ignored is not None and any(
            _pair_iou(det, ig, iou_kind) >= iou_threshold
            for ig in ignored.get(det.frame_id, [])
        ):
            continue
        rank += 1
        curve.append((tp / num_gt, tp / rank))

    if mode == "40pt":
        grid = [(k + 1) / 40.0 for k in range(40)]
    else:
        grid = [k / 10.0 for k in range(11)]
    total = 0.0
    for r in grid:
        total += max((p for rec, p in curve if rec >= r), default=0.0)
    return total / len(grid) * 100.0


# ---------------------------------------------------------------------------
# attack success rates
# ---------------------------------------------------------------------------

def _attacked_records(
    attacked_gt: dict[str, list[ObjectLabel]]
) -> list[tuple[str, int, ObjectLabel]]:
    records = [
        (fid, j, gt)
        for fid, gts in sorted(attacked_gt.items())
        for j, gt in enumerate(gts)
    ]
    if not records:
        raise NoAttackedVehicles("no attacked vehicles to score")
    return records


def asr_resizing(
    attacked_gt: dict[str, list[ObjectLabel]],
    poisoned_detections: dict[str, list[Detection3D]],
    match_iou: float = 0.1,
    shrink_ratio: float = 0.5,
    match_details: list | None = None,
) -> float:
    """ASR for the resizing goal, as a percentage.

    Per attacked vehicle, the best-overlapping detection (BEV IoU >=
    match_iou) must have shrunk to at most shrink_ratio of the ground-truth
    volume; a vehicle with no matching detection at all also counts as a
    success (the full-size box is gone).
    """
    successes = 0
    records = _attacked_records(attacked_gt)
    for fid, j, gt in records:
        best_iou, best = 0.0, None
        for det in poisoned_detections.get(fid, []):
            iou = iou_bev(bev_box(det), bev_box(gt))
            if iou >= match_iou and iou > best_iou:
                best_iou, best = iou, det
        gt_volume = gt.dims[0] * gt.dims[1] * gt.dims[2]
        if best is None:
            success, ratio = True, None
        else:
            ratio = best.volume / gt_volume
            success = ratio <= shrink_ratio
        successes += success
        if match_details is not None:
            match_details.append(
                {
                    "frame_id": fid,
                    "gt_index": j,
                    "matched": best is not None,
                    "best_iou": best_iou,
                    "volume_ratio": ratio,
                    "success": success,
                }
            )
    return successes / len(records) * 100.0


def asr_disappear(
    attacked_gt: dict[str, list[ObjectLabel]],
    poisoned_detections: dict[str, list[Detection3D]],
    iou_threshold: float = 0.5,
    score_threshold: float = 0.3,
    match_details: list | None = None,
) -> float:
    """ASR for the disappearance goals, as a percentage.

    A vehicle disappears when no sufficiently confident detection still
    overlaps its original box.
    """
    successes = 0
    records = _attacked_records(attacked_gt)
    for fid, j, gt in records:
        best_iou = 0.0
        for det in poisoned_detections.get(fid, []):
            if det.score < score_threshold:
                continue
            best_iou = max(best_iou, iou_3d(det, gt))
        success = best_iou < iou_threshold
        successes += success
        if match_details is not None:
            match_details.append(
                {
                    "frame_id": fid,
                    "gt_index": j,
                    "matched": best_iou >= iou_threshold,
                    "best_iou": best_iou,
                    "volume_ratio": None,
                    "success": success,
                }
            )
    return successes / len(records) * 100.0


# ---------------------------------------------------------------------------
# end-to-end evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    clean_map: float
    poisoned_map: float
    asr: float
    matches: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "clean_map": self.clean_map,
            "poisoned_map": self.poisoned_map,
            "asr": self.asr,
            "matches": self.matches,
            "config": self.config,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [
            "metric             value",
            "-----------------  -------",
            f"clean mAP          {self.clean_map:7.2f}",
            f"poisoned mAP       {self.poisoned_map:7.2f}",
            f"ASR                {self.asr:7.2f}",
            "",
            "settings: " + ", ".join(f"{k}={v}" for k, v in sorted(self.config.items())),
        ]
        return "\n".join(lines) + "\n"


def _easy_cars(labels: list[ObjectLabel]) -> list[ObjectLabel]:
    return [
        l for l in labels
        if l.is_car and classify_difficulty(l) is Difficulty.EASY
    ]


def _car_detections(dets: dict[str, list[Detection3D]]) -> list[Detection3D]:
    return [d for frame in sorted(dets) for d in dets[frame] if d.is_car]


def attacked_ground_truth(manifest: PoisonManifest) -> dict[str, list[ObjectLabel]]:
    """Original (pre-transform) labels of every attacked vehicle."""
    out: dict[str, list[ObjectLabel]] = {}
    for frame in manifest.frames:
        labels = parse_labels("\n".join(v.original_label for v in frame.vehicles))
        if labels:
            out[frame.frame_id] = labels
    return out


def evaluate(
    clean_results: dict[str, list[Detection3D]] | Path,
    poisoned_results: dict[str, list[Detection3D]] | Path,
    clean_gt: dict[str, list[ObjectLabel]],
    manifest: PoisonManifest,
    goal: AttackGoal | None = None,
    iou_threshold: float = 0.7,
    ap_mode: str = "40pt",
) -> EvalReport:
    """Headline evaluation: clean mAP, poisoned mAP, and goal-specific ASR.

    Both mAP figures are computed against the original labels (Easy cars for
    the clean figure, the attacked vehicles for the poisoned one); a trigger
    only "worked" if it pushed detections away from the true boxes. Clean
    mAP uses ignore semantics for non-Easy cars; poisoned mAP considers only
    detections overlapping an attacked vehicle (BEV IoU >= 0.1), since other
    scene objects say nothing about the attack. Every ground-truth frame
    must be present in the corresponding results mapping; frames with zero
    detections are fine, missing frames are a FrameMismatch.
    """
    if isinstance(clean_results, (str, Path)):
        clean_results = load_results(clean_results)
    if isinstance(poisoned_results, (str, Path)):
        poisoned_results = load_results(poisoned_results)
    goal = goal or manifest.config.goal

    missing = sorted(set(clean_gt) - set(clean_results))
    if missing:
        raise FrameMismatch(f"clean results missing frames: {missing[:5]}")
    attacked = attacked_ground_truth(manifest)
    missing = sorted(set(attacked) - set(poisoned_results))
    if missing:
        raise FrameMismatch(f"poisoned results missing frames: {missing[:5]}")

    easy_gt = {fid: _easy_cars(labels) for fid, labels in clean_gt.items()}
    other_cars = {
        fid: [l for l in labels if l.is_car and l not in easy_gt[fid]]
        for fid, labels in clean_gt.items()
    }
    clean_map = average_precision(
        _car_detections(clean_results), easy_gt, iou_threshold, ap_mode,
        ignored=other_cars,
    )
    near_attacked = [
        d
        for d in _car_detections(poisoned_results)
        if any(
            iou_bev(bev_box(d), bev_box(gt)) >= 0.1
            for gt in attacked.get(d.frame_id, [])
        )
    ]
    poisoned_map = average_precision(
        near_attacked, attacked, iou_threshold, ap_mode
    )

    matches: list[dict] = []
    car_poisoned = {
        fid: [d for d in dets if d.is_car] for fid, dets in poisoned_results.items()
    }
    if goal.kind is AttackKind.RESIZING:
        asr = asr_resizing(attacked, car_poisoned, match_details=matches)
        asr_config = {"match_iou": 0.1, "shrink_ratio": 0.5}
    else:
        asr = asr_disappear(attacked, car_poisoned, match_details=matches)
        asr_config = {"match_iou": 0.5, "score_threshold": 0.3}

    return EvalReport(
        clean_map=clean_map,
        poisoned_map=poisoned_map,
        asr=asr,
        matches=matches,
        config={
            "goal": goal.kind.value,
            "iou_threshold": iou_threshold,
            "ap_mode": ap_mode,
            **asr_config,
        },
    )

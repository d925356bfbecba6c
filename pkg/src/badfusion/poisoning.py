"""Training-phase poisoning pipeline.

Selects frames at the configured poison rate, places a trigger on every
eligible car in each selected frame, rewrites those cars' labels according
to the attack goal, and materializes the poisoned dataset next to an audit
manifest ("badfusion-manifest/v1"). Also exports the dense-region training
set used to fit the LiDAR-free region predictor.

Frame selection matches the distribution of effective trigger pixels (the
trigger pixels that coincide with projected LiDAR points) to a target shape,
because attack strength depends on how consistent those surviving pixels are
across poisoned samples.
"""

from __future__ import annotations

import heapq
import json
import math
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from . import __version__
from .densepred import (
    PredictionSet,
    RegionRecord,
    load_prediction_file,
    write_images_manifest,
)
from .errors import EmptyManifest, InsufficientCandidates, SchemaError
from .kitti_io import (
    DatasetIndex,
    Difficulty,
    FrameBundle,
    ObjectLabel,
    classify_difficulty,
    copy_frame_files,
    copy_split_files,
    frame_paths,
    load_frame,
    parse_labels,
    write_frame,
)
from .projection import pixels_in_rect, points_on_vehicle, project_points
from .trigger import (
    DenseRegion,
    PlacementSource,
    TriggerPlacement,
    TriggerSpec,
    clamp_region_to_image,
    composite_trigger,
    find_densest_region,
    make_trigger,
)

MANIFEST_SCHEMA_VERSION = "badfusion-manifest/v1"

HISTOGRAM_BIN_WIDTH = 5


# ---------------------------------------------------------------------------
# attack configuration
# ---------------------------------------------------------------------------

class AttackKind(Enum):
    RESIZING = "resizing"
    DISAPPEAR_FARTHER = "disappear_farther"
    DISAPPEAR_CLOSER = "disappear_closer"


@dataclass(frozen=True)
class AttackGoal:
    kind: AttackKind
    resize_factor: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.resize_factor < 1.0:
            raise ValueError(f"resize_factor must be in (0, 1), got {self.resize_factor}")


class SelectionKind(Enum):
    NORMAL = "normal"
    LEFT_SKEWED = "left_skewed"
    RIGHT_SKEWED = "right_skewed"
    RANDOM = "random"


@dataclass(frozen=True)
class SelectionSpec:
    kind: SelectionKind = SelectionKind.NORMAL
    mean: float = 30.0
    std: float = 5.0

    def __post_init__(self):
        if self.kind is SelectionKind.NORMAL and self.std <= 0:
            raise ValueError("std must be > 0 for normal selection")


@dataclass(frozen=True)
class PoisonConfig:
    goal: AttackGoal
    trigger: TriggerSpec
    poison_rate: float = 0.15
    selection: SelectionSpec = SelectionSpec()
    placement_source: PlacementSource = PlacementSource.LIDAR_AWARE
    rng_seed: int = 0
    stride: int = 1

    def __post_init__(self):
        if not 0.0 < self.poison_rate <= 1.0:
            raise ValueError(f"poison_rate must be in (0, 1], got {self.poison_rate}")

    def to_json_obj(self) -> dict:
        overlay = None
        if self.trigger.overlay:
            overlay = [[list(pos), list(color)] for pos, color in self.trigger.overlay]
        return {
            "goal": {"kind": self.goal.kind.value, "resize_factor": self.goal.resize_factor},
            "poison_rate": self.poison_rate,
            "trigger": {
                "width": self.trigger.width,
                "height": self.trigger.height,
                "base_color": list(self.trigger.base_color),
                "overlay": overlay,
            },
            "selection": {
                "kind": self.selection.kind.value,
                "mean": self.selection.mean,
                "std": self.selection.std,
            },
            "placement_source": self.placement_source.value,
            "rng_seed": self.rng_seed,
            "stride": self.stride,
        }

    @staticmethod
    def from_json_obj(obj: dict) -> "PoisonConfig":
        try:
            trig = obj["trigger"]
            overlay = None
            if trig.get("overlay"):
                overlay = {
                    tuple(pos): tuple(color) for pos, color in trig["overlay"]
                }
            sel = obj.get("selection", {})
            return PoisonConfig(
                goal=AttackGoal(
                    kind=AttackKind(obj["goal"]["kind"]),
                    resize_factor=obj["goal"].get("resize_factor", 0.25),
                ),
                trigger=make_trigger(
                    trig["width"],
                    trig["height"],
                    tuple(trig.get("base_color", (255, 0, 0))),
                    overlay,
                ),
                poison_rate=obj.get("poison_rate", 0.15),
                selection=SelectionSpec(
                    kind=SelectionKind(sel.get("kind", "normal")),
                    mean=sel.get("mean", 30.0),
                    std=sel.get("std", 5.0),
                ),
                placement_source=PlacementSource(
                    obj.get("placement_source", "lidar_aware")
                ),
                rng_seed=obj.get("rng_seed", 0),
                stride=obj.get("stride", 1),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaError(f"bad poison config: {exc}") from exc


# ---------------------------------------------------------------------------
# label transformation
# ---------------------------------------------------------------------------

def transform_label(label: ObjectLabel, goal: AttackGoal) -> ObjectLabel:
    """Rewrite one car label according to the attack goal.

    Resizing scales each of (h, w, l) by the resize factor; the disappear
    goals double or halve the camera-frame x and z so the labeled box no
    longer coincides with the vehicle's signal.
    """
    if goal.kind is AttackKind.RESIZING:
        h, w, l = label.dims
        f = goal.resize_factor
        return replace(label, dims=(h * f, w * f, l * f))
    x, y, z = label.loc
    if goal.kind is AttackKind.DISAPPEAR_FARTHER:
        return replace(label, loc=(x * 2.0, y, z * 2.0))
    return replace(label, loc=(x / 2.0, y, z / 2.0))


def effective_pixels_for(frame: FrameBundle, placement: TriggerPlacement) -> int:
    """Number of distinct trigger pixels that coincide with the vehicle's
    projected LiDAR points, i.e. the pixels that survive fusion."""
    proj = project_points(frame.cloud, frame.calib, frame.image.size)
    on_vehicle = points_on_vehicle(proj, frame.labels[placement.vehicle_index])
    return len(pixels_in_rect(on_vehicle, placement.region.rect))


# ---------------------------------------------------------------------------
# frame selection
# ---------------------------------------------------------------------------

def _normal_pdf(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _normal_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


_SKEW_SHAPE = 4.0  # skew-normal shape used for the skewed selection targets


def target_bin_weights(
    selection: SelectionSpec, bin_lowers: list[int]
) -> list[float]:
    """Unnormalized target mass per histogram bin (width 5)."""
    weights = []
    for lo in bin_lowers:
        center = lo + HISTOGRAM_BIN_WIDTH / 2.0
        z = (center - selection.mean) / selection.std
        if selection.kind is SelectionKind.NORMAL:
            w = _normal_pdf(z)
        elif selection.kind is SelectionKind.RIGHT_SKEWED:
            w = 2.0 * _normal_pdf(z) * _normal_cdf(_SKEW_SHAPE * z)
        elif selection.kind is SelectionKind.LEFT_SKEWED:
            w = 2.0 * _normal_pdf(z) * _normal_cdf(-_SKEW_SHAPE * z)
        else:
            w = 1.0
        weights.append(w)
    return weights


def count_bin(count: int) -> int:
    return (count // HISTOGRAM_BIN_WIDTH) * HISTOGRAM_BIN_WIDTH


def select_poison_frames(
    candidates: list[tuple[str, int]],
    config: PoisonConfig,
    train_size: int,
) -> list[str]:
    """Pick round(poison_rate * train_size) frame ids from the candidates.

    Each candidate is (frame_id, effective pixel count of its best vehicle).
    For the distribution-shaped selections the chosen per-bin counts
    globally minimize the L1 distance between the selected histogram and
    the target shape scaled to the selection size, so no single candidate
    swap can improve the fit. Which frames fill a bin is drawn with the
    seeded RNG; the result is deterministic for a fixed seed.
    """
    n = round(config.poison_rate * train_size)
    if len(candidates) < n:
        raise InsufficientCandidates(
            f"need {n} poisonable frames but only {len(candidates)} are usable"
        )
    rng = random.Random(config.rng_seed)
    if config.selection.kind is SelectionKind.RANDOM:
        return sorted(rng.sample([fid for fid, _ in candidates], n))

    by_bin: dict[int, list[str]] = {}
    for fid, count in candidates:
        by_bin.setdefault(count_bin(count), []).append(fid)
    lowers = list(
        range(min(by_bin), max(by_bin) + HISTOGRAM_BIN_WIDTH, HISTOGRAM_BIN_WIDTH)
    )
    weights = target_bin_weights(config.selection, lowers)
    total = sum(weights) or 1.0
    targets = {lo: n * w / total for lo, w in zip(lowers, weights)}

    # Greedy fill: repeatedly add a frame to the bin with the cheapest
    # marginal |c - t| increase. |c - t| is convex in c, so this reaches the
    # global optimum of the per-bin allocation.
    chosen: dict[int, int] = {lo: 0 for lo in by_bin}
    heap = []
    for lo in sorted(by_bin):
        t = targets[lo]
        heapq.heappush(heap, (abs(1 - t) - abs(0 - t), lo, 0))
    for _ in range(n):
        while True:
            delta, lo, c = heapq.heappop(heap)
            if chosen[lo] == c:
                break
        chosen[lo] = c + 1
        if c + 1 < len(by_bin[lo]):
            t = targets[lo]
            heapq.heappush(heap, (abs(c + 2 - t) - abs(c + 1 - t), lo, c + 1))

    selected: list[str] = []
    for lo in sorted(by_bin):
        take = chosen[lo]
        if take:
            selected.extend(rng.sample(by_bin[lo], take))
    return sorted(selected)


def selection_l1_distance(
    counts: list[int], selection: SelectionSpec, n: int, bin_lowers: list[int]
) -> float:
    """L1 distance between a selected histogram and the scaled target."""
    weights = target_bin_weights(selection, bin_lowers)
    total = sum(weights) or 1.0
    hist = {lo: 0 for lo in bin_lowers}
    for c in counts:
        hist[count_bin(c)] += 1
    return sum(
        abs(hist[lo] - n * w / total) for lo, w in zip(bin_lowers, weights)
    )


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

@dataclass
class VehicleRecord:
    vehicle_index: int
    region: DenseRegion
    source: PlacementSource
    effective_pixel_count: int
    original_label: str      # canonical 15-field line
    transformed_label: str

    def to_json_obj(self) -> dict:
        return {
            "vehicle_index": self.vehicle_index,
            "region": {
                "x": self.region.x,
                "y": self.region.y,
                "w": self.region.w,
                "h": self.region.h,
                "point_count": self.region.point_count,
            },
            "source": self.source.value,
            "effective_pixel_count": self.effective_pixel_count,
            "original_label": self.original_label,
            "transformed_label": self.transformed_label,
        }

    @staticmethod
    def from_json_obj(obj: dict) -> "VehicleRecord":
        r = obj["region"]
        return VehicleRecord(
            vehicle_index=obj["vehicle_index"],
            region=DenseRegion(
                x=r["x"], y=r["y"], w=r["w"], h=r["h"], point_count=r["point_count"]
            ),
            source=PlacementSource(obj["source"]),
            effective_pixel_count=obj["effective_pixel_count"],
            original_label=obj["original_label"],
            transformed_label=obj["transformed_label"],
        )


@dataclass
class FrameRecord:
    frame_id: str
    vehicles: list[VehicleRecord]


@dataclass
class PoisonManifest:
    """Audit record binding a poisoned dataset to its exact recipe."""

    config: PoisonConfig
    frames: list[FrameRecord]
    skipped: list[dict] = field(default_factory=list)
    train_size: int = 0

    def effective_counts(self) -> list[int]:
        return [v.effective_pixel_count for f in self.frames for v in f.vehicles]

    @property
    def poisoned_vehicle_total(self) -> int:
        return sum(len(f.vehicles) for f in self.frames)

    def to_json(self) -> str:
        doc = {
            "version": MANIFEST_SCHEMA_VERSION,
            "toolkit_version": __version__,
            "config": self.config.to_json_obj(),
            "frames": [
                {
                    "frame_id": f.frame_id,
                    "vehicles": [v.to_json_obj() for v in f.vehicles],
                }
                for f in sorted(self.frames, key=lambda f: f.frame_id)
            ],
            "skipped_frames": self.skipped,
            "totals": {
                "train_frames": self.train_size,
                "poisoned_frames": len(self.frames),
                "poisoned_vehicles": self.poisoned_vehicle_total,
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "PoisonManifest":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"manifest is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict) or doc.get("version") != MANIFEST_SCHEMA_VERSION:
            raise SchemaError(f"expected a {MANIFEST_SCHEMA_VERSION!r} document")
        try:
            frames = [
                FrameRecord(
                    frame_id=f["frame_id"],
                    vehicles=[VehicleRecord.from_json_obj(v) for v in f["vehicles"]],
                )
                for f in doc["frames"]
            ]
            return PoisonManifest(
                config=PoisonConfig.from_json_obj(doc["config"]),
                frames=frames,
                skipped=doc.get("skipped_frames", []),
                train_size=doc.get("totals", {}).get("train_frames", 0),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad manifest structure: {exc}") from exc


def load_manifest(path: Path) -> PoisonManifest:
    return PoisonManifest.from_json(Path(path).read_text())


def require_records(manifest: PoisonManifest) -> None:
    if not manifest.frames or manifest.poisoned_vehicle_total == 0:
        raise EmptyManifest("manifest contains no poisoned-vehicle records")


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def eligible_vehicle_indices(frame: FrameBundle) -> list[int]:
    """Cars of Easy or Moderate difficulty, the poisoning targets."""
    out = []
    for i, label in enumerate(frame.labels):
        if label.is_car and classify_difficulty(label) in (
            Difficulty.EASY,
            Difficulty.MODERATE,
        ):
            out.append(i)
    return out


def _scan_frame(args) -> dict:
    """Compute placements + effective pixel counts for one frame.

    Top-level function so process pools can pickle it. Returns a plain dict;
    the parent merges results in frame-id order for determinism.
    """
    root, frame_id, config, pred_records = args
    frame = load_frame(DatasetIndex(Path(root), []), frame_id)
    proj = project_points(frame.cloud, frame.calib, frame.image.size)
    vehicles = []
    for idx in eligible_vehicle_indices(frame):
        label = frame.labels[idx]
        on_vehicle = points_on_vehicle(proj, label)
        if len(on_vehicle) == 0:
            continue
        if config.placement_source is PlacementSource.PREDICTED:
            best = None
            for rec in pred_records or []:
                if rec.vehicle_index == idx and (best is None or rec.score > best.score):
                    best = rec
            if best is None:
                continue
            region = clamp_region_to_image(
                DenseRegion(x=best.x, y=best.y, w=best.w, h=best.h),
                frame.image.size,
            )
        else:
            region = find_densest_region(
                on_vehicle, label.bbox2d, config.trigger.dims, stride=config.stride
            )
            region = clamp_region_to_image(region, frame.image.size)
        effective = len(pixels_in_rect(on_vehicle, region.rect))
        vehicles.append(
            VehicleRecord(
                vehicle_index=idx,
                region=region,
                source=config.placement_source,
                effective_pixel_count=effective,
                original_label=label.to_line(),
                transformed_label=transform_label(label, config.goal).to_line(),
            )
        )
    reason = None
    if not vehicles:
        reason = (
            "no eligible vehicles"
            if not eligible_vehicle_indices(frame)
            else "no usable placement on any eligible vehicle"
        )
    return {"frame_id": frame_id, "vehicles": vehicles, "skip_reason": reason}


def _write_poisoned_frame(args) -> None:
    root, out_root, frame_id, config, vehicle_objs = args
    frame = load_frame(DatasetIndex(Path(root), []), frame_id)
    image = frame.image
    labels = list(frame.labels)
    for v in vehicle_objs:
        record = VehicleRecord.from_json_obj(v)
        image = composite_trigger(image, config.trigger, record.region)
        labels[record.vehicle_index] = transform_label(
            labels[record.vehicle_index], config.goal
        )
    # velodyne + calib are untouched: copy bytes instead of re-encoding
    src = frame_paths(Path(root), frame_id)
    poisoned = FrameBundle(
        frame_id=frame_id, cloud=frame.cloud, calib=frame.calib, image=image,
        labels=labels,
    )
    write_frame(poisoned, Path(out_root))
    for kind in ("velodyne", "calib"):
        dst = frame_paths(Path(out_root), frame_id)[kind]
        dst.write_bytes(src[kind].read_bytes())


def _copy_frame(args) -> None:
    root, out_root, frame_id = args
    copy_frame_files(Path(root), Path(out_root), frame_id)


def _run_tasks(func, tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, tasks, chunksize=8))


def default_jobs() -> int:
    return os.cpu_count() or 1


def poison_dataset(
    index: DatasetIndex,
    config: PoisonConfig,
    out_root: Path,
    predictions: PredictionSet | Path | None = None,
    jobs: int = 1,
) -> PoisonManifest:
    """Execute the training-phase attack over the train split.

    Selected frames get a trigger on every eligible car plus the transformed
    labels; every other frame (train remainder and the full validation
    split) is copied byte-for-byte, so the output root is a drop-in
    replacement. Returns the manifest, which is also written to
    out_root/poison_manifest.json.
    """
    out_root = Path(out_root)
    if isinstance(predictions, (str, Path)):
        predictions = load_prediction_file(predictions)
    if config.placement_source is PlacementSource.PREDICTED:
        if predictions is None:
            raise SchemaError("placement_source=predicted requires a predictions file")
        if tuple(predictions.trigger_size) != config.trigger.dims:
            raise SchemaError(
                f"predictions are for trigger size {predictions.trigger_size}, "
                f"config uses {config.trigger.dims}"
            )

    scan_tasks = [
        (
            str(index.root),
            fid,
            config,
            predictions.frames.get(fid) if predictions else None,
        )
        for fid in sorted(index.train_ids)
    ]
    results = _run_tasks(_scan_frame, scan_tasks, jobs)
    results.sort(key=lambda r: r["frame_id"])

    candidates = []
    skipped = []
    frame_vehicles: dict[str, list[VehicleRecord]] = {}
    for res in results:
        if res["skip_reason"] is not None:
            skipped.append({"frame_id": res["frame_id"], "reason": res["skip_reason"]})
            continue
        frame_vehicles[res["frame_id"]] = res["vehicles"]
        best = max(v.effective_pixel_count for v in res["vehicles"])
        candidates.append((res["frame_id"], best))

    selected = select_poison_frames(candidates, config, len(index.train_ids))
    selected_set = set(selected)

    write_tasks = [
        (
            str(index.root),
            str(out_root),
            fid,
            config,
            [v.to_json_obj() for v in frame_vehicles[fid]],
        )
        for fid in selected
    ]
    copy_ids = [fid for fid in index.all_ids() if fid not in selected_set]
    _run_tasks(_write_poisoned_frame, write_tasks, jobs)
    _run_tasks(_copy_frame, [(str(index.root), str(out_root), fid) for fid in copy_ids], jobs)
    copy_split_files(index.root, out_root)

    manifest = PoisonManifest(
        config=config,
        frames=[FrameRecord(fid, frame_vehicles[fid]) for fid in selected],
        skipped=skipped,
        train_size=len(index.train_ids),
    )
    (out_root / "poison_manifest.json").write_text(manifest.to_json())
    return manifest


def replay_manifest(
    manifest: PoisonManifest,
    index: DatasetIndex,
    out_root: Path,
    jobs: int = 1,
) -> None:
    """Reproduce a poisoned dataset from its manifest and the clean data.

    Uses only the recorded placements and the config echo, so the result is
    byte-identical to the original poisoning run.
    """
    out_root = Path(out_root)
    selected = {f.frame_id: f.vehicles for f in manifest.frames}
    write_tasks = [
        (
            str(index.root),
            str(out_root),
            fid,
            manifest.config,
            [v.to_json_obj() for v in vehicles],
        )
        for fid, vehicles in sorted(selected.items())
    ]
    copy_ids = [fid for fid in index.all_ids() if fid not in selected]
    _run_tasks(_write_poisoned_frame, write_tasks, jobs)
    _run_tasks(_copy_frame, [(str(index.root), str(out_root), fid) for fid in copy_ids], jobs)
    copy_split_files(index.root, out_root)


# ---------------------------------------------------------------------------
# dense-region dataset export
# ---------------------------------------------------------------------------

def _export_frame(args) -> dict:
    root, frame_id, trigger_dims, stride = args
    frame = load_frame(DatasetIndex(Path(root), []), frame_id)
    proj = project_points(frame.cloud, frame.calib, frame.image.size)
    records = []
    skipped = 0
    for idx, label in enumerate(frame.labels):
        if not label.is_car:
            continue
        on_vehicle = points_on_vehicle(proj, label)
        if len(on_vehicle) == 0:
            skipped += 1
            continue
        region = clamp_region_to_image(
            find_densest_region(on_vehicle, label.bbox2d, trigger_dims, stride=stride),
            frame.image.size,
        )
        records.append(
            RegionRecord(
                vehicle_index=idx,
                x=region.x,
                y=region.y,
                w=region.w,
                h=region.h,
                score=1.0,
                extras={
                    "bbox2d": list(label.bbox2d),
                    "point_count": region.point_count,
                },
            )
        )
    return {"frame_id": frame_id, "records": records, "skipped": skipped}


def export_dense_region_dataset(
    index: DatasetIndex,
    trigger_dims: tuple[int, int],
    out_dir: Path,
    frame_ids: list[str] | None = None,
    stride: int = 1,
    jobs: int = 1,
) -> dict:
    """Write the dense-region detector training set.

    For every car with at least one projected point, one annotation record
    with the densest trigger-sized window; (w, h) always equals the trigger
    dimensions. Produces annotations.json (badfusion-densepred/v1, with
    bbox2d and point_count extras) and images.json referencing the camera
    images relative to the output directory.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids = sorted(frame_ids if frame_ids is not None else index.train_ids)
    tasks = [(str(index.root), fid, tuple(trigger_dims), stride) for fid in ids]
    results = _run_tasks(_export_frame, tasks, jobs)
    results.sort(key=lambda r: r["frame_id"])

    frames: dict[str, list[RegionRecord]] = {}
    images: dict[str, str] = {}
    skipped = 0
    for res in results:
        skipped += res["skipped"]
        if res["records"]:
            fid = res["frame_id"]
            frames[fid] = res["records"]
            img_path = frame_paths(index.root, fid)["image"]
            images[fid] = os.path.relpath(img_path, out_dir)

    pred_set = PredictionSet(trigger_size=tuple(trigger_dims), frames=frames)
    (out_dir / "annotations.json").write_text(pred_set.to_json())
    write_images_manifest(out_dir / "images.json", images)
    n_records = sum(len(v) for v in frames.values())
    return {"frames": len(frames), "records": n_records, "skipped_vehicles": skipped}

"""Trigger-survival measurement under the fusion transformation.

Point-wise LiDAR-camera fusion samples the image only where projected LiDAR
points land, so a 2D trigger reaches the 3D detector as the handful of its
pixels that coincide with those projections. This module quantifies that
survival: how many trigger pixels stay effective per vehicle, how consistent
the counts are across a poisoned batch, and how placement and trigger size
move them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NoPoints
from .kitti_io import FrameBundle
from .poisoning import (
    HISTOGRAM_BIN_WIDTH,
    PoisonManifest,
    count_bin,
    eligible_vehicle_indices,
    require_records,
)
from .projection import pixels_in_rect, points_on_vehicle, project_points
from .trigger import (
    DenseRegion,
    TriggerPlacement,
    TriggerSpec,
    clamp_region_to_image,
    find_densest_region,
)


@dataclass(frozen=True)
class SurvivalStats:
    """Distribution summary of per-vehicle effective trigger pixel counts."""

    counts: tuple[int, ...]
    histogram: dict[int, int]     # bin lower edge -> vehicles in bin
    min: int
    max: int
    mean: float
    std: float
    mode_bin: int                 # lower edge of the fullest bin
    consistency: float            # fraction of counts within mean +/- std

    @staticmethod
    def from_counts(counts: list[int]) -> "SurvivalStats":
        if not counts:
            raise ValueError("no counts to summarize")
        n = len(counts)
        mean = sum(counts) / n
        std = math.sqrt(sum((c - mean) ** 2 for c in counts) / n)
        lowers = range(
            count_bin(min(counts)),
            count_bin(max(counts)) + HISTOGRAM_BIN_WIDTH,
            HISTOGRAM_BIN_WIDTH,
        )
        histogram = {lo: 0 for lo in lowers}
        for c in counts:
            histogram[count_bin(c)] += 1
        # ties go to the lower bin so the mode is stable
        mode_bin = max(sorted(histogram), key=lambda lo: histogram[lo])
        within = sum(1 for c in counts if mean - std <= c <= mean + std)
        return SurvivalStats(
            counts=tuple(counts),
            histogram=histogram,
            min=min(counts),
            max=max(counts),
            mean=mean,
            std=std,
            mode_bin=mode_bin,
            consistency=within / n,
        )


def survival_histogram(manifest: PoisonManifest) -> SurvivalStats:
    """Summarize the effective pixel counts recorded in a poison manifest."""
    require_records(manifest)
    return SurvivalStats.from_counts(manifest.effective_counts())


def _effective_count(frame: FrameBundle, vehicle_index: int, region: DenseRegion) -> int:
    proj = project_points(frame.cloud, frame.calib, frame.image.size)
    on_vehicle = points_on_vehicle(proj, frame.labels[vehicle_index])
    return len(pixels_in_rect(on_vehicle, region.rect))


def _default_vehicle(frame: FrameBundle) -> int:
    eligible = eligible_vehicle_indices(frame)
    if not eligible:
        raise NoPoints("frame has no eligible vehicle to measure")
    return eligible[0]


def compare_placements(
    frame: FrameBundle,
    spec: TriggerSpec,
    naive_region: DenseRegion | None = None,
    dense_region: DenseRegion | None = None,
    vehicle_index: int | None = None,
) -> tuple[int, int]:
    """Effective pixel counts for a naive vs. a density-guided placement.

    When not given explicitly, the naive region sits at the vehicle's 2D box
    center and the dense region comes from the sliding-window search; both
    are clamped into the image. The dense count usually dominates, which is
    the whole point of fusion-aware placement, but no per-frame ordering is
    guaranteed (a centered cluster makes them equal).
    """
    if vehicle_index is None:
        vehicle_index = _default_vehicle(frame)
    label = frame.labels[vehicle_index]
    w, h = spec.dims
    if naive_region is None:
        left, top, right, bottom = label.bbox2d
        naive_region = clamp_region_to_image(
            DenseRegion(x=(left + right) / 2, y=(top + bottom) / 2, w=w, h=h),
            frame.image.size,
        )
    if dense_region is None:
        proj = project_points(frame.cloud, frame.calib, frame.image.size)
        on_vehicle = points_on_vehicle(proj, label)
        dense_region = clamp_region_to_image(
            find_densest_region(on_vehicle, label.bbox2d, spec.dims),
            frame.image.size,
        )
    return (
        _effective_count(frame, vehicle_index, naive_region),
        _effective_count(frame, vehicle_index, dense_region),
    )


def inference_trigger_sweep(
    frame: FrameBundle,
    base_placement: TriggerPlacement,
    sizes: list[tuple[int, int]],
) -> list[tuple[tuple[int, int], int]]:
    """Effective pixel counts for rectangles of several sizes sharing the
    base placement's center (shifted inward when a size overflows the
    image). Larger inference-time triggers recover more effective pixels,
    which is why attack strength grows with trigger size.
    """
    if not sizes:
        raise ValueError("sizes must be nonempty")
    base = base_placement.region
    out = []
    for w, h in sizes:
        region = clamp_region_to_image(
            DenseRegion(x=base.x, y=base.y, w=int(w), h=int(h)),
            frame.image.size,
        )
        count = _effective_count(frame, base_placement.vehicle_index, region)
        out.append(((int(w), int(h)), count))
    return out


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------

def histogram_csv(stats: SurvivalStats) -> str:
    lines = ["bin_lower,count"]
    lines += [f"{lo},{stats.histogram[lo]}" for lo in sorted(stats.histogram)]
    return "\n".join(lines) + "\n"


def summary_report(stats: SurvivalStats) -> str:
    lines = [
        "effective trigger pixel survival",
        f"  vehicles measured : {len(stats.counts)}",
        f"  min / max         : {stats.min} / {stats.max}",
        f"  mean (std)        : {stats.mean:.2f} ({stats.std:.2f})",
        f"  mode bin          : [{stats.mode_bin}, {stats.mode_bin + HISTOGRAM_BIN_WIDTH})",
        f"  consistency       : {stats.consistency:.3f} of vehicles within one std",
    ]
    return "\n".join(lines) + "\n"

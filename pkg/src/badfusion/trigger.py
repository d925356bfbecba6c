"""Trigger synthesis, dense-region search and image compositing.

A trigger is a small patch of uniform (or almost-solid) color. Compositing
replaces the image pixels under the patch:

    x' = tr * m + x * (1 - m)

with m = 1 on the patch rectangle and 0 elsewhere. Placement targets the
region of the vehicle where the 2D LiDAR projection is densest, so the
maximum number of trigger pixels survives point-wise fusion, and uniform
color keeps the surviving pattern identical across samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels
from .densepred import PredictionSet
from .errors import (
    NoPoints,
    OverlayOutOfBounds,
    OverlayTooLarge,
    RegionOutOfImage,
)
from .kitti_io import CameraImage, FrameBundle, ObjectLabel
from .projection import ProjectedCloud, points_on_vehicle, project_points

OVERLAY_BUDGET = 0.2  # almost-solid: at most 20% of trigger pixels recolored

RGB = tuple[int, int, int]


@dataclass(frozen=True)
class TriggerSpec:
    """Trigger pattern: base color plus an optional sparse overlay."""

    width: int
    height: int
    base_color: RGB = (255, 0, 0)
    overlay: tuple[tuple[tuple[int, int], RGB], ...] | None = None

    @property
    def dims(self) -> tuple[int, int]:
        return (self.width, self.height)

    def render(self) -> np.ndarray:
        """The (height, width, 3) uint8 pixel pattern."""
        patch = np.empty((self.height, self.width, 3), dtype=np.uint8)
        patch[:, :] = self.base_color
        if self.overlay:
            for (dx, dy), color in self.overlay:
                patch[dy, dx] = color
        return patch


def make_trigger(
    width: int,
    height: int,
    base_color: RGB = (255, 0, 0),
    overlay: dict[tuple[int, int], RGB] | None = None,
) -> TriggerSpec:
    """Build a uniform trigger, or an almost-solid one when ``overlay``
    recolors up to 20% of its pixels."""
    if width < 1 or height < 1:
        raise ValueError(f"trigger dimensions must be >= 1, got {width}x{height}")
    for color in [base_color, *(overlay.values() if overlay else [])]:
        if len(color) != 3 or not all(0 <= c <= 255 for c in color):
            raise ValueError(f"colors must be (r, g, b) in 0..255, got {color}")
    overlay_items = None
    if overlay:
        if len(overlay) > OVERLAY_BUDGET * width * height:
            raise OverlayTooLarge(
                f"overlay covers {len(overlay)} of {width * height} pixels, "
                f"more than the {OVERLAY_BUDGET:.0%} almost-solid budget"
            )
        for dx, dy in overlay:
            if not (0 <= dx < width and 0 <= dy < height):
                raise OverlayOutOfBounds(
                    f"overlay pixel ({dx}, {dy}) outside {width}x{height} trigger"
                )
        overlay_items = tuple(sorted(overlay.items()))
    return TriggerSpec(
        width=width,
        height=height,
        base_color=tuple(base_color),
        overlay=overlay_items,
    )


@dataclass(frozen=True)
class DenseRegion:
    """A trigger-sized window over the 2D LiDAR projection.

    (x, y) is the window center in pixels; for predicted regions the point
    count is unknown and stored as 0.
    """

    x: float
    y: float
    w: int
    h: int
    point_count: int = 0

    @property
    def left(self) -> int:
        return int(round(self.x - self.w / 2))

    @property
    def top(self) -> int:
        return int(round(self.y - self.h / 2))

    @property
    def rect(self) -> tuple[float, float, float, float]:
        """(x_center, y_center, w, h), the pixels_in_rect convention."""
        return (self.x, self.y, self.w, self.h)


class PlacementSource(Enum):
    LIDAR_AWARE = "lidar_aware"
    PREDICTED = "predicted"


@dataclass(frozen=True)
class TriggerPlacement:
    frame_id: str
    vehicle_index: int
    region: DenseRegion
    source: PlacementSource


def region_from_top_left(tx: int, ty: int, w: int, h: int, count: int = 0) -> DenseRegion:
    return DenseRegion(x=tx + w / 2, y=ty + h / 2, w=w, h=h, point_count=count)


def clamp_region_to_image(
    region: DenseRegion, image_size: tuple[int, int]
) -> DenseRegion:
    """Shift a region minimally so its rectangle lies fully inside the image.

    Shifting (rather than shrinking) preserves the exact trained trigger
    pattern near borders.
    """
    width, height = image_size
    if region.w > width or region.h > height:
        raise RegionOutOfImage(
            f"{region.w}x{region.h} trigger cannot fit a {width}x{height} image"
        )
    tx = min(max(region.left, 0), width - region.w)
    ty = min(max(region.top, 0), height - region.h)
    if tx == region.left and ty == region.top:
        return region
    return region_from_top_left(tx, ty, region.w, region.h, region.point_count)


def find_densest_region(
    vehicle_proj: ProjectedCloud,
    bbox2d: tuple[float, float, float, float],
    trigger_dims: tuple[int, int],
    stride: int = 1,
) -> DenseRegion:
    """Sliding-window search for the trigger-sized region holding the most
    vehicle projection points.

    Window top-left corners sweep the 2D box at the given stride, clamped so
    every candidate window lies inside the image. Ties resolve to the
    smallest (y, x) top-left corner. Raises NoPoints when the vehicle has no
    projected points at all.
    """
    w, h = trigger_dims
    if w < 1 or h < 1 or stride < 1:
        raise ValueError("trigger dims and stride must be >= 1")
    if len(vehicle_proj) == 0:
        raise NoPoints("vehicle has no projected LiDAR points")
    img_w, img_h = vehicle_proj.image_size
    if w > img_w or h > img_h:
        raise RegionOutOfImage(
            f"{w}x{h} trigger cannot fit a {img_w}x{img_h} image"
        )
    left, top, right, bottom = bbox2d
    tx_lo = min(max(int(np.floor(left)), 0), img_w - w)
    tx_hi = min(max(int(np.floor(right)), 0), img_w - w)
    ty_lo = min(max(int(np.floor(top)), 0), img_h - h)
    ty_hi = min(max(int(np.floor(bottom)), 0), img_h - h)
    tx, ty, count = kernels.densest_window(
        np.ascontiguousarray(vehicle_proj.u, dtype=np.float64),
        np.ascontiguousarray(vehicle_proj.v, dtype=np.float64),
        tx_lo, tx_hi, ty_lo, ty_hi, stride, w, h,
    )
    return region_from_top_left(tx, ty, w, h, count)


def composite_trigger(
    image: CameraImage, spec: TriggerSpec, region: DenseRegion
) -> CameraImage:
    """Replace the pixels under the region with the trigger pattern.

    Everything outside the rectangle is bit-identical to the input; the
    input image itself is never modified.
    """
    if (region.w, region.h) != spec.dims:
        raise ValueError(
            f"region is {region.w}x{region.h} but trigger is "
            f"{spec.width}x{spec.height}"
        )
    tx, ty = region.left, region.top
    if tx < 0 or ty < 0 or tx + region.w > image.width or ty + region.h > image.height:
        raise RegionOutOfImage(
            f"trigger rectangle ({tx}, {ty}, {region.w}x{region.h}) exceeds "
            f"the {image.width}x{image.height} image"
        )
    pixels = image.pixels.copy()
    pixels[ty : ty + region.h, tx : tx + region.w] = spec.render()
    return CameraImage(pixels)


def place_lidar_aware(
    frame: FrameBundle, spec: TriggerSpec, vehicle_index: int, stride: int = 1
) -> TriggerPlacement:
    """Place the trigger on the densest LiDAR-projection region of one car."""
    label = frame.labels[vehicle_index]
    if not label.is_car:
        raise ValueError(f"vehicle {vehicle_index} is {label.class_name}, not Car")
    proj = project_points(frame.cloud, frame.calib, frame.image.size)
    on_vehicle = points_on_vehicle(proj, label)
    region = find_densest_region(on_vehicle, label.bbox2d, spec.dims, stride=stride)
    region = clamp_region_to_image(region, frame.image.size)
    return TriggerPlacement(
        frame_id=frame.frame_id,
        vehicle_index=vehicle_index,
        region=region,
        source=PlacementSource.LIDAR_AWARE,
    )


def place_lidar_free(
    frame_id: str,
    vehicle_index: int,
    predictions: PredictionSet,
    image_size: tuple[int, int] | None = None,
) -> TriggerPlacement:
    """Place the trigger at the highest-score predicted dense region.

    When ``image_size`` is given the rectangle is shifted inward to fit the
    image, as for LiDAR-aware placements.
    """
    record = predictions.best_for(frame_id, vehicle_index)
    region = DenseRegion(x=record.x, y=record.y, w=record.w, h=record.h)
    if image_size is not None:
        region = clamp_region_to_image(region, image_size)
    return TriggerPlacement(
        frame_id=frame_id,
        vehicle_index=vehicle_index,
        region=region,
        source=PlacementSource.PREDICTED,
    )


def _rects_intersect(
    left: float, top: float, right: float, bottom: float,
    bbox: tuple[float, float, float, float],
) -> bool:
    return left < bbox[2] and bbox[0] < right and top < bbox[3] and bbox[1] < bottom


def overlap_safe(placement: TriggerPlacement, labels: list[ObjectLabel]) -> bool:
    """True when the trigger rectangle touches exactly one vehicle's 2D box.

    A trigger straddling overlapping boxes would activate the backdoor for
    the unintended neighbor as well, so such placements are rejected at
    inference time.
    """
    region = placement.region
    left, top = float(region.left), float(region.top)
    right, bottom = left + region.w, top + region.h
    hits = sum(
        1
        for label in labels
        if label.is_car and _rects_intersect(left, top, right, bottom, label.bbox2d)
    )
    return hits == 1

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from badfusion.errors import (
    MissingPrediction,
    NoPoints,
    OverlayOutOfBounds,
    OverlayTooLarge,
    RegionOutOfImage,
)
from badfusion.densepred import PredictionSet, RegionRecord
from badfusion.kitti_io import CameraImage
from badfusion.projection import ProjectedCloud, points_on_vehicle, project_points
from badfusion.trigger import (
    DenseRegion,
    PlacementSource,
    clamp_region_to_image,
    composite_trigger,
    find_densest_region,
    make_trigger,
    overlap_safe,
    place_lidar_aware,
    place_lidar_free,
    region_from_top_left,
    TriggerPlacement,
)

from conftest import make_label
from oracles import brute_force_densest


def proj_from_uv(u, v, image_size=(100, 80)):
    n = len(u)
    return ProjectedCloud(
        indices=np.arange(n),
        u=np.asarray(u, dtype=np.float64),
        v=np.asarray(v, dtype=np.float64),
        depth=np.full(n, 10.0),
        image_size=image_size,
    )


# ---------------------------------------------------------------------------
# trigger synthesis
# ---------------------------------------------------------------------------

def test_uniform_trigger_render():
    spec = make_trigger(15, 15, (255, 0, 0))
    patch = spec.render()
    assert patch.shape == (15, 15, 3)
    assert np.all(patch == np.array([255, 0, 0], dtype=np.uint8))


def test_trigger_overlay_pixels():
    spec = make_trigger(4, 4, (10, 10, 10), overlay={(0, 0): (1, 2, 3), (3, 2): (9, 8, 7)})
    patch = spec.render()
    assert tuple(patch[0, 0]) == (1, 2, 3)      # overlay keyed (dx, dy)
    assert tuple(patch[2, 3]) == (9, 8, 7)
    assert tuple(patch[1, 1]) == (10, 10, 10)


def test_trigger_overlay_budget():
    # 20% of a 5x5 trigger is 5 pixels: 5 allowed, 6 rejected
    five = {(i, 0): (0, 0, 0) for i in range(5)}
    make_trigger(5, 5, overlay=five)
    six = dict(five)
    six[(0, 1)] = (0, 0, 0)
    with pytest.raises(OverlayTooLarge):
        make_trigger(5, 5, overlay=six)


def test_trigger_overlay_out_of_bounds():
    with pytest.raises(OverlayOutOfBounds):
        make_trigger(5, 5, overlay={(5, 0): (0, 0, 0)})


@pytest.mark.parametrize("w,h", [(0, 5), (5, 0), (-1, 5)])
def test_trigger_rejects_bad_dims(w, h):
    with pytest.raises(ValueError):
        make_trigger(w, h)


def test_trigger_rejects_bad_color():
    with pytest.raises(ValueError):
        make_trigger(5, 5, (256, 0, 0))


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------

def test_region_from_top_left_roundtrip():
    region = region_from_top_left(10, 20, 15, 15, count=3)
    assert (region.left, region.top) == (10, 20)
    assert region.rect == (17.5, 27.5, 15, 15)
    assert region.point_count == 3


def test_clamp_region_shifts_inward():
    region = DenseRegion(x=3.0, y=78.0, w=10, h=10)
    clamped = clamp_region_to_image(region, (100, 80))
    assert (clamped.left, clamped.top) == (0, 70)
    assert (clamped.w, clamped.h) == (10, 10)


def test_clamp_region_noop_when_inside():
    region = region_from_top_left(40, 30, 10, 10)
    assert clamp_region_to_image(region, (100, 80)) == region


def test_clamp_region_too_large():
    with pytest.raises(RegionOutOfImage):
        clamp_region_to_image(DenseRegion(x=50, y=40, w=101, h=10), (100, 80))


# ---------------------------------------------------------------------------
# densest-region search
# ---------------------------------------------------------------------------

def test_find_densest_region_corner_cluster():
    u = [11.2, 11.8, 12.4, 40.0]
    v = [21.1, 21.6, 22.0, 50.0]
    proj = proj_from_uv(u, v)
    region = find_densest_region(proj, (5.0, 15.0, 60.0, 70.0), (6, 6))
    assert region.point_count == 3
    # brute force over the same clamped sweep bounds
    expect = brute_force_densest(
        np.array(u), np.array(v), (5, 60), (15, 70), 1, 6, 6
    )
    assert (region.left, region.top, region.point_count) == expect


def test_find_densest_region_matches_brute_force_random(rng, synth_frame):
    proj = project_points(synth_frame.cloud, synth_frame.calib, synth_frame.image.size)
    img_w, img_h = synth_frame.image.size
    for label in synth_frame.labels:
        if not label.is_car:
            continue
        on = points_on_vehicle(proj, label)
        left, top, right, bottom = label.bbox2d
        for dims in [(15, 15), (20, 20), (7, 11)]:
            region = find_densest_region(on, label.bbox2d, dims)
            tx_lo = min(max(int(np.floor(left)), 0), img_w - dims[0])
            tx_hi = min(max(int(np.floor(right)), 0), img_w - dims[0])
            ty_lo = min(max(int(np.floor(top)), 0), img_h - dims[1])
            ty_hi = min(max(int(np.floor(bottom)), 0), img_h - dims[1])
            expect = brute_force_densest(
                on.u, on.v, (tx_lo, tx_hi), (ty_lo, ty_hi), 1, dims[0], dims[1]
            )
            assert (region.left, region.top, region.point_count) == expect


def test_find_densest_region_no_points():
    with pytest.raises(NoPoints):
        find_densest_region(proj_from_uv([], []), (0, 0, 50, 50), (5, 5))


def test_find_densest_region_trigger_larger_than_image():
    with pytest.raises(RegionOutOfImage):
        find_densest_region(proj_from_uv([5.0], [5.0]), (0, 0, 50, 50), (101, 5))


# ---------------------------------------------------------------------------
# compositing
# ---------------------------------------------------------------------------

def random_image(rng, w=60, h=40):
    return CameraImage(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))


def test_composite_locality_idempotence_full_mask(rng):
    for _ in range(100):
        image = random_image(rng)
        w = int(rng.integers(1, 20))
        h = int(rng.integers(1, 20))
        spec = make_trigger(w, h, tuple(int(c) for c in rng.integers(0, 256, 3)))
        tx = int(rng.integers(0, 60 - w + 1))
        ty = int(rng.integers(0, 40 - h + 1))
        region = region_from_top_left(tx, ty, w, h)
        out = composite_trigger(image, spec, region)

        mask = np.zeros((40, 60), dtype=bool)
        mask[ty:ty + h, tx:tx + w] = True
        assert np.array_equal(out.pixels[mask], np.broadcast_to(spec.render().reshape(-1, 3), (w * h, 3)).reshape(-1))\
            or np.array_equal(out.pixels[ty:ty + h, tx:tx + w], spec.render())
        assert np.array_equal(out.pixels[~mask], image.pixels[~mask])
        again = composite_trigger(out, spec, region)
        assert np.array_equal(again.pixels, out.pixels)


def test_composite_does_not_mutate_input(rng):
    image = random_image(rng)
    before = image.pixels.copy()
    composite_trigger(image, make_trigger(5, 5), region_from_top_left(2, 3, 5, 5))
    assert np.array_equal(image.pixels, before)


def test_composite_rejects_mismatched_region():
    image = CameraImage(np.zeros((40, 60, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        composite_trigger(image, make_trigger(5, 5), region_from_top_left(0, 0, 6, 5))


def test_composite_rejects_out_of_image():
    image = CameraImage(np.zeros((40, 60, 3), dtype=np.uint8))
    with pytest.raises(RegionOutOfImage):
        composite_trigger(image, make_trigger(5, 5), region_from_top_left(58, 0, 5, 5))


# ---------------------------------------------------------------------------
# placement
# ---------------------------------------------------------------------------

def test_place_lidar_aware(synth_frame):
    placement = place_lidar_aware(synth_frame, make_trigger(15, 15), 0)
    assert placement.source is PlacementSource.LIDAR_AWARE
    assert placement.vehicle_index == 0
    region = placement.region
    img_w, img_h = synth_frame.image.size
    assert 0 <= region.left and region.left + region.w <= img_w
    assert 0 <= region.top and region.top + region.h <= img_h
    assert region.point_count > 0


def test_place_lidar_aware_requires_car(synth_frame):
    ped = [i for i, l in enumerate(synth_frame.labels) if not l.is_car]
    if not ped:
        pytest.skip("fixture frame has no non-car label")
    with pytest.raises(ValueError):
        place_lidar_aware(synth_frame, make_trigger(15, 15), ped[0])


def test_place_lidar_free_uses_best_score():
    preds = PredictionSet(
        trigger_size=(15, 15),
        frames={
            "000001": [
                RegionRecord(vehicle_index=0, x=30, y=30, w=15, h=15, score=0.4),
                RegionRecord(vehicle_index=0, x=50, y=40, w=15, h=15, score=0.9),
                RegionRecord(vehicle_index=1, x=70, y=20, w=15, h=15, score=1.0),
            ]
        },
    )
    placement = place_lidar_free("000001", 0, preds)
    assert placement.source is PlacementSource.PREDICTED
    assert (placement.region.x, placement.region.y) == (50, 40)


def test_place_lidar_free_missing_prediction():
    preds = PredictionSet(trigger_size=(15, 15), frames={})
    with pytest.raises(MissingPrediction):
        place_lidar_free("000009", 0, preds)


def test_overlap_safe_counts_car_boxes():
    target = make_label(bbox2d=(10.0, 10.0, 50.0, 50.0))
    other = make_label(bbox2d=(100.0, 10.0, 150.0, 50.0))
    overlapping = make_label(bbox2d=(25.0, 25.0, 80.0, 80.0))
    placement = TriggerPlacement(
        frame_id="x",
        vehicle_index=0,
        region=region_from_top_left(20, 20, 10, 10),
        source=PlacementSource.LIDAR_AWARE,
    )
    assert overlap_safe(placement, [target, other])
    assert not overlap_safe(placement, [target, overlapping])
    # non-car boxes are not protected
    ped = make_label(class_name="Pedestrian", bbox2d=(25.0, 25.0, 40.0, 40.0))
    assert overlap_safe(placement, [target, ped])

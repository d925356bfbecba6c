"""Synthetic KITTI-style scene generator.

Builds small but fully consistent frames: a pinhole camera with the usual
velodyne-to-camera axis swap, cars whose labels, point clusters, and pixels
all agree geometrically, plus the occasional pedestrian and DontCare strip.
Every car gets a deliberately dense point cluster somewhere on its body and
a bright beacon patch painted at the cluster's image location, so both the
densest-window search and the LiDAR-free region predictor have real signal
to find. Deterministic per (seed, frame_id).
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .kitti_io import (
    CalibrationSet,
    CameraImage,
    DatasetIndex,
    FrameBundle,
    ObjectLabel,
    PointCloud,
    write_dataset,
)

DEFAULT_IMAGE_SIZE = (248, 160)   # (width, height)
FOCAL = 300.0
CAMERA_HEIGHT = 1.2               # meters above ground
BEACON_COLOR = (230, 210, 90)
BEACON_HALF = 3                   # beacon patch is (2*3+1)^2 pixels


def make_calib(image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE) -> CalibrationSet:
    """Pinhole camera plus the standard velodyne->camera axis permutation
    (x_cam = -y_velo, y_cam = -z_velo, z_cam = x_velo)."""
    width, height = image_size
    p2 = np.array(
        [
            [FOCAL, 0.0, width / 2.0, 0.0],
            [0.0, FOCAL, height / 2.0 - 10.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ]
    )
    tr = np.array(
        [
            [0.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, -1.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
        ]
    )
    return CalibrationSet(P2=p2, R0_rect=np.eye(3), Tr_velo_to_cam=tr)


def cam_to_velo(pts_cam: np.ndarray) -> np.ndarray:
    """Inverse of the axis permutation above (rotation only, no offset)."""
    x, y, z = pts_cam[:, 0], pts_cam[:, 1], pts_cam[:, 2]
    return np.stack([z, -x, -y], axis=1)


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def box_corners_cam(
    dims: tuple[float, float, float],
    loc: tuple[float, float, float],
    ry: float,
) -> np.ndarray:
    """The 8 corners (camera frame) of a label box; loc is the bottom-face
    center and y points down, so the box spans y in [loc.y - h, loc.y]."""
    h, w, l = dims
    xs = np.array([l, l, -l, -l, l, l, -l, -l]) / 2.0
    ys = np.array([0.0, 0.0, 0.0, 0.0, -h, -h, -h, -h])
    zs = np.array([w, -w, -w, w, w, -w, -w, w]) / 2.0
    corners = rot_y(ry) @ np.stack([xs, ys, zs])
    return corners.T + np.asarray(loc)


def project_cam(pts_cam: np.ndarray, calib: CalibrationSet) -> tuple[np.ndarray, np.ndarray]:
    q = np.hstack([pts_cam, np.ones((len(pts_cam), 1))]) @ calib.P2.T
    return q[:, 0] / q[:, 2], q[:, 1] / q[:, 2]


def _bbox_from_corners(
    corners_cam: np.ndarray, calib: CalibrationSet, image_size: tuple[int, int]
) -> tuple[float, float, float, float] | None:
    if np.any(corners_cam[:, 2] <= 0.5):
        return None
    u, v = project_cam(corners_cam, calib)
    width, height = image_size
    left = max(float(u.min()), 0.0)
    top = max(float(v.min()), 0.0)
    right = min(float(u.max()), width - 1.0)
    bottom = min(float(v.max()), height - 1.0)
    if right - left < 12.0 or bottom - top < 12.0:
        return None
    return (round(left, 2), round(top, 2), round(right, 2), round(bottom, 2))


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _sample_car(rng: np.random.Generator, calib, image_size, near: bool):
    """One consistent car: label, cluster center (cam frame), body points."""
    for _ in range(40):
        depth = rng.uniform(7.0, 16.0) if near else rng.uniform(7.0, 24.0)
        lateral = rng.uniform(-0.22, 0.22) * depth
        dims = (
            round(rng.uniform(1.40, 1.70), 2),
            round(rng.uniform(1.55, 1.75), 2),
            round(rng.uniform(3.60, 4.40), 2),
        )
        loc = (round(lateral, 2), CAMERA_HEIGHT, round(depth, 2))
        ry = round(rng.uniform(-math.pi, math.pi), 2)
        bbox = _bbox_from_corners(box_corners_cam(dims, loc, ry), calib, image_size)
        if bbox is None:
            continue
        h, w, l = dims
        if near:
            occlusion, truncation = 0, 0.0
        else:
            occlusion = int(rng.choice([0, 0, 0, 1, 2]))
            truncation = round(float(rng.uniform(0.0, 0.25)), 2)
        alpha = round(_wrap_angle(ry - math.atan2(loc[0], loc[2])), 2)
        label = ObjectLabel(
            class_name="Car",
            truncation=truncation,
            occlusion=occlusion,
            alpha=alpha,
            bbox2d=bbox,
            dims=dims,
            loc=loc,
            rotation_y=ry,
        )

        r = rot_y(ry)
        center = np.array(loc)
        cluster_rel = np.array(
            [
                rng.uniform(-l / 3.0, l / 3.0),
                rng.uniform(-0.8 * h, -0.25 * h),
                rng.uniform(-w / 3.0, w / 3.0),
            ]
        )
        cluster_cam = center + r @ cluster_rel
        n_dense = int(rng.integers(25, 70))
        dense = cluster_cam + rng.normal(0.0, 0.045, size=(n_dense, 3))
        n_body = int(rng.integers(50, 130))
        body_rel = np.stack(
            [
                rng.uniform(-l / 2, l / 2, n_body),
                rng.uniform(-h, 0.0, n_body),
                rng.uniform(-w / 2, w / 2, n_body),
            ],
            axis=1,
        )
        body = center + body_rel @ r.T
        return label, cluster_cam, np.vstack([dense, body])
    return None


def _ground_points(rng: np.random.Generator) -> np.ndarray:
    n = 900
    x = rng.uniform(4.0, 40.0, n)
    y = rng.uniform(-12.0, 12.0, n)
    z = np.full(n, -CAMERA_HEIGHT) + rng.normal(0.0, 0.02, n)
    return np.stack([x, y, z], axis=1)


def _render_image(
    image_size, rng, cars: list[tuple[ObjectLabel, np.ndarray]], calib
) -> CameraImage:
    width, height = image_size
    vv, uu = np.mgrid[0:height, 0:width]
    px = np.empty((height, width, 3), dtype=np.float64)
    px[..., 0] = 52 + vv / 5.0
    px[..., 1] = 58 + ((uu + vv) / 7.0) % 36
    px[..., 2] = 80 + uu / 6.0
    px += rng.normal(0.0, 2.0, px.shape)

    # far to near, so close cars paint over distant ones
    for label, cluster_cam in sorted(cars, key=lambda c: -c[0].loc[2]):
        left, top, right, bottom = (int(round(x)) for x in label.bbox2d)
        body = np.array([rng.uniform(60, 110), rng.uniform(55, 95), rng.uniform(60, 120)])
        px[top:bottom + 1, left:right + 1] = body + (vv[top:bottom + 1, left:right + 1, None] - top) / 3.0
        glass_lo = top + (bottom - top) // 6
        glass_hi = top + (bottom - top) // 3
        px[glass_lo:glass_hi, left:right + 1] = body * 1.45

        u, v = project_cam(cluster_cam[None, :], calib)
        cu, cv = int(round(float(u[0]))), int(round(float(v[0])))
        lo_u, hi_u = max(cu - BEACON_HALF, 0), min(cu + BEACON_HALF + 1, width)
        lo_v, hi_v = max(cv - BEACON_HALF, 0), min(cv + BEACON_HALF + 1, height)
        px[lo_v:hi_v, lo_u:hi_u] = BEACON_COLOR

    return CameraImage(np.clip(np.rint(px), 0, 255).astype(np.uint8))


def _dontcare_label(rng: np.random.Generator, image_size) -> ObjectLabel:
    width, _ = image_size
    left = float(rng.uniform(0, width - 30))
    return ObjectLabel(
        class_name="DontCare",
        truncation=-1.0,
        occlusion=-1,
        alpha=-10.0,
        bbox2d=(round(left, 2), 10.0, round(left + 25.0, 2), 24.0),
        dims=(-1.0, -1.0, -1.0),
        loc=(-1000.0, -1000.0, -1000.0),
        rotation_y=-10.0,
    )


def _pedestrian_label(rng: np.random.Generator, calib, image_size) -> ObjectLabel | None:
    dims = (1.75, 0.6, 0.8)
    loc = (round(float(rng.uniform(-3.0, 3.0)), 2), CAMERA_HEIGHT, round(float(rng.uniform(9.0, 18.0)), 2))
    bbox = _bbox_from_corners(box_corners_cam(dims, loc, 0.0), calib, image_size)
    if bbox is None:
        return None
    return ObjectLabel(
        class_name="Pedestrian",
        truncation=0.0,
        occlusion=0,
        alpha=0.0,
        bbox2d=bbox,
        dims=dims,
        loc=loc,
        rotation_y=0.0,
    )


def build_frame(
    frame_id: str,
    seed: int = 0,
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE,
    n_cars: int | None = None,
) -> FrameBundle:
    """One synthetic frame. The first car is always near, unoccluded, and
    untruncated, so every frame has at least one poisonable vehicle."""
    rng = np.random.default_rng([seed, int(frame_id)])
    calib = make_calib(image_size)
    if n_cars is None:
        n_cars = int(rng.integers(1, 4))

    cars = []
    for k in range(n_cars):
        sampled = _sample_car(rng, calib, image_size, near=(k == 0))
        if sampled is not None:
            cars.append(sampled)

    labels = [label for label, _, _ in cars]
    points_cam = [pts for _, _, pts in cars]
    cloud_xyz = np.vstack([_ground_points(rng)] + [cam_to_velo(p) for p in points_cam])
    refl = rng.uniform(0.0, 1.0, (len(cloud_xyz), 1))
    cloud = PointCloud(np.hstack([cloud_xyz, refl]).astype(np.float32))

    image = _render_image(image_size, rng, [(l, c) for l, c, _ in cars], calib)

    ped = _pedestrian_label(rng, calib, image_size) if rng.random() < 0.4 else None
    if ped is not None:
        labels.append(ped)
    if rng.random() < 0.5:
        labels.append(_dontcare_label(rng, image_size))

    return FrameBundle(
        frame_id=frame_id, cloud=cloud, calib=calib, image=image, labels=labels
    )


def build_dataset(
    root: Path,
    n_train: int = 6,
    n_val: int = 2,
    seed: int = 0,
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE,
) -> DatasetIndex:
    """Write a complete dataset (frames + ImageSets split) under root."""
    root = Path(root)
    ids = [f"{i:06d}" for i in range(n_train + n_val)]
    frames = [build_frame(fid, seed=seed, image_size=image_size) for fid in ids]
    write_dataset(frames, root)
    sets = root / "ImageSets"
    sets.mkdir(parents=True, exist_ok=True)
    train_ids, val_ids = ids[:n_train], ids[n_train:]
    (sets / "train.txt").write_text("".join(f"{i}\n" for i in train_ids))
    (sets / "val.txt").write_text("".join(f"{i}\n" for i in val_ids))
    return DatasetIndex(root=root, train_ids=train_ids, valid_ids=val_ids)

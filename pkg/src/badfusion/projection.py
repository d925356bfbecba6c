"""LiDAR-to-image projection and per-vehicle point filtering.

This is the geometric half of the fusion transformation: every LiDAR return
is pushed through the calibration chain

    q = P2 . rect(R0) . T(velo->cam) . [x y z 1]^T
    (u, v) = (q0/q2, q1/q2),  depth = q2

and only returns that land in front of the camera and inside the image
remain. Point-wise camera-to-LiDAR fusion samples the image exactly at these
projected locations, which is why trigger pixels off the projection never
reach the 3D detector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kitti_io import CalibrationSet, ObjectLabel, PointCloud

PixelSet = set  # of (u_int, v_int) tuples


@dataclass
class ProjectedCloud:
    """Image-plane coordinates of the in-view LiDAR returns.

    ``indices`` maps each entry back into the source cloud. ``degenerate``
    counts points with exactly zero projective depth: they are dropped and
    tallied rather than aborting the projection.
    """

    indices: np.ndarray   # (M,) int64
    u: np.ndarray         # (M,) float64, continuous pixel column
    v: np.ndarray         # (M,) float64, continuous pixel row
    depth: np.ndarray     # (M,) float64, camera-frame z in meters
    image_size: tuple[int, int]  # (width, height)
    degenerate: int = 0

    def __len__(self) -> int:
        return self.indices.shape[0]

    def take(self, mask: np.ndarray) -> "ProjectedCloud":
        return ProjectedCloud(
            indices=self.indices[mask],
            u=self.u[mask],
            v=self.v[mask],
            depth=self.depth[mask],
            image_size=self.image_size,
            degenerate=self.degenerate,
        )


def projection_matrix(calib: CalibrationSet) -> np.ndarray:
    """Collapsed (3, 4) matrix taking homogeneous velodyne points to the
    image plane."""
    return calib.P2 @ calib.rect_4x4() @ calib.velo_to_cam_4x4()


def project_points(
    cloud: PointCloud,
    calib: CalibrationSet,
    image_dims: tuple[int, int],
) -> ProjectedCloud:
    """Project a cloud into the image, keeping in-frustum entries only.

    Points with depth <= 0 (behind the camera) or whose (u, v) falls outside
    [0, width) x [0, height) are excluded. Zero-depth points cannot be
    divided through; they are dropped and counted in ``degenerate``.
    """
    width, height = image_dims
    n = len(cloud)
    if n == 0:
        empty = np.empty(0)
        return ProjectedCloud(
            np.empty(0, dtype=np.int64), empty, empty, empty, (width, height)
        )
    pts = np.hstack([cloud.xyz.astype(np.float64), np.ones((n, 1))])
    q = pts @ projection_matrix(calib).T  # (N, 3)
    depth = q[:, 2]

    nonzero = depth != 0.0
    degenerate = int(n - nonzero.sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(nonzero, q[:, 0] / depth, 0.0)
        v = np.where(nonzero, q[:, 1] / depth, 0.0)
    keep = nonzero & (depth > 0) & (u >= 0) & (u < width) & (v >= 0) & (v < height)

    return ProjectedCloud(
        indices=np.nonzero(keep)[0].astype(np.int64),
        u=u[keep],
        v=v[keep],
        depth=depth[keep],
        image_size=(width, height),
        degenerate=degenerate,
    )


def points_on_vehicle(proj: ProjectedCloud, label: ObjectLabel) -> ProjectedCloud:
    """Entries of ``proj`` belonging to one labeled vehicle.

    A projected point counts as on-vehicle when its (u, v) lies inside the
    label's 2D box (half-open on the right/bottom edges) and its depth lies
    within one vehicle length of the labeled center, which excludes
    background surfaces seen through the same box.
    """
    left, top, right, bottom = label.bbox2d
    z_obj = label.loc[2]
    length = label.dims[2]
    mask = (
        (proj.u >= left)
        & (proj.u < right)
        & (proj.v >= top)
        & (proj.v < bottom)
        & (np.abs(proj.depth - z_obj) <= length)
    )
    return proj.take(mask)


def pixels_in_rect(
    proj: ProjectedCloud, rect: tuple[float, float, float, float]
) -> PixelSet:
    """Distinct integer pixels covered by projected points inside a
    center-anchored rectangle.

    ``rect`` is (x_center, y_center, w, h); a point is inside when
    u in [x - w/2, x + w/2) and v in [y - h/2, y + h/2). Continuous
    coordinates discretize by floor(), matching nearest-lower-pixel
    sampling.
    """
    x, y, w, h = rect
    if w <= 0 or h <= 0:
        raise ValueError("rectangle dimensions must be positive")
    mask = (
        (proj.u >= x - w / 2)
        & (proj.u < x + w / 2)
        & (proj.v >= y - h / 2)
        & (proj.v < y + h / 2)
    )
    us = np.floor(proj.u[mask]).astype(np.int64)
    vs = np.floor(proj.v[mask]).astype(np.int64)
    return set(zip(us.tolist(), vs.tolist()))

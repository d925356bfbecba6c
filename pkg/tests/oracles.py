"""Independent reference implementations used to cross-check the package.

Everything here is deliberately naive: per-point loops, exhaustive window
enumeration, Monte-Carlo volume sampling, and a quadratic PR-curve builder.
None of it shares code with the package internals beyond plain data types.
"""

from __future__ import annotations

import math

import numpy as np


def project_point_chain(p2, r0, tr, xyz):
    """Push one velodyne point through the full homogeneous chain,
    multiplying matrices step by step (no collapsed matrix)."""
    x = np.array([xyz[0], xyz[1], xyz[2], 1.0], dtype=np.float64)
    t = np.eye(4)
    t[:3, :] = tr
    cam = t @ x
    r = np.eye(4)
    r[:3, :3] = r0
    rect = r @ cam
    q = np.asarray(p2, dtype=np.float64) @ rect
    if q[2] == 0.0:
        return None
    return q[0] / q[2], q[1] / q[2], q[2]


def brute_force_densest(u, v, tx_range, ty_range, stride, win_w, win_h):
    """Enumerate every window position and count points directly.

    Returns (tx, ty, count) with ties resolved toward smaller (ty, tx), the
    row-major first maximum.
    """
    best = None
    for ty in range(ty_range[0], ty_range[1] + 1, stride):
        for tx in range(tx_range[0], tx_range[1] + 1, stride):
            count = int(
                np.sum((u >= tx) & (u < tx + win_w) & (v >= ty) & (v < ty + win_h))
            )
            if best is None or count > best[2]:
                best = (tx, ty, count)
    return best


def count_in_window(u, v, tx, ty, win_w, win_h):
    return int(np.sum((u >= tx) & (u < tx + win_w) & (v >= ty) & (v < ty + win_h)))


def distinct_pixels_in_rect(u, v, rect):
    """Floor-discretized pixel set inside a center-anchored rectangle."""
    x, y, w, h = rect
    pixels = set()
    for uu, vv in zip(u, v):
        if x - w / 2 <= uu < x + w / 2 and y - h / 2 <= vv < y + h / 2:
            pixels.add((math.floor(uu), math.floor(vv)))
    return pixels


# ---------------------------------------------------------------------------
# 3D box geometry
# ---------------------------------------------------------------------------

def point_in_box3d(pt, dims, loc, ry):
    """Membership test in a yawed camera-frame box (y down, loc at bottom)."""
    h, w, l = dims
    dx, dy, dz = pt[0] - loc[0], pt[1] - loc[1], pt[2] - loc[2]
    c, s = math.cos(-ry), math.sin(-ry)
    lx = c * dx + s * dz
    lz = -s * dx + c * dz
    return (
        -l / 2.0 <= lx <= l / 2.0
        and -h <= dy <= 0.0
        and -w / 2.0 <= lz <= w / 2.0
    )


def points_in_box3d(pts, dims, loc, ry):
    """Vectorized point_in_box3d; semantics cross-checked against the scalar
    version in the test suite so the speedup can be trusted."""
    h, w, l = dims
    dx = pts[:, 0] - loc[0]
    dy = pts[:, 1] - loc[1]
    dz = pts[:, 2] - loc[2]
    c, s = math.cos(-ry), math.sin(-ry)
    lx = c * dx + s * dz
    lz = -s * dx + c * dz
    return (
        (np.abs(lx) <= l / 2.0)
        & (-h <= dy)
        & (dy <= 0.0)
        & (np.abs(lz) <= w / 2.0)
    )


def mc_iou_3d(box_a, box_b, n_samples, rng):
    """Monte-Carlo 3D IoU: sample the union's bounding volume uniformly.

    Each box is (dims, loc, ry). Standard-error at 1e6 samples keeps the
    estimate within ~0.005 of truth for non-tiny overlaps.
    """
    corners = []
    for dims, loc, ry in (box_a, box_b):
        h, w, l = dims
        xs = np.array([l, l, -l, -l]) / 2.0
        zs = np.array([w, -w, -w, w]) / 2.0
        c, s = math.cos(ry), math.sin(ry)
        gx = c * xs + s * zs + loc[0]
        gz = -s * xs + c * zs + loc[2]
        for x, z in zip(gx, gz):
            corners.append((x, loc[1] - h, z))
            corners.append((x, loc[1], z))
    corners = np.array(corners)
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    pts = rng.uniform(lo, hi, size=(n_samples, 3))
    in_a = points_in_box3d(pts, *box_a)
    in_b = points_in_box3d(pts, *box_b)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union


# ---------------------------------------------------------------------------
# average precision
# ---------------------------------------------------------------------------

def ap_brute_force(detections, ground_truth, iou_threshold, grid, pair_iou):
    """PR-curve AP by direct enumeration.

    ``detections`` is a list of (frame_id, score, payload); ``ground_truth``
    maps frame_id -> list of payloads; ``pair_iou(det_payload, gt_payload)``
    supplies overlap. Greedy matching in (score desc, frame_id, index)
    order, then max-precision interpolation over the recall grid.
    """
    num_gt = sum(len(v) for v in ground_truth.values())
    if num_gt == 0:
        return 0.0 if detections else 100.0
    if not detections:
        return 0.0
    order = sorted(
        range(len(detections)),
        key=lambda i: (-detections[i][1], detections[i][0], i),
    )
    used = {fid: [False] * len(v) for fid, v in ground_truth.items()}
    tp = 0
    curve = []
    for rank, i in enumerate(order, start=1):
        fid, _, payload = detections[i]
        best, best_j = 0.0, -1
        for j, gt in enumerate(ground_truth.get(fid, [])):
            if used[fid][j]:
                continue
            iou = pair_iou(payload, gt)
            if iou > best:
                best, best_j = iou, j
        if best_j >= 0 and best >= iou_threshold:
            used[fid][best_j] = True
            tp += 1
        curve.append((tp / num_gt, tp / rank))
    total = 0.0
    for r in grid:
        total += max((p for rec, p in curve if rec >= r), default=0.0)
    return total / len(grid) * 100.0


# ---------------------------------------------------------------------------
# selection targets
# ---------------------------------------------------------------------------

def l1_to_target(hist: dict[int, int], targets: dict[int, float]) -> float:
    keys = set(hist) | set(targets)
    return sum(abs(hist.get(k, 0) - targets.get(k, 0.0)) for k in keys)


def convex_polygon_area(points) -> float:
    area = 0.0
    n = len(points)
    for i in range(n):
        x1, y1 = points[i]
        x2, y2 = points[(i + 1) % n]
        area += x1 * y2 - x2 * y1
    return abs(area) / 2.0

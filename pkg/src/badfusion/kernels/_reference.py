"""Pure-Python / numpy reference implementations of the hot kernels.

Semantics here are the contract; the compiled module must agree exactly
(tested against this module for random inputs).
"""

from __future__ import annotations

import math

import numpy as np


def densest_window(
    u: np.ndarray,
    v: np.ndarray,
    tx_lo: int,
    tx_hi: int,
    ty_lo: int,
    ty_hi: int,
    stride: int,
    win_w: int,
    win_h: int,
) -> tuple[int, int, int]:
    """Best top-left position of a win_w x win_h window over a point set.

    Candidate top-left corners are (tx, ty) with tx in {tx_lo, tx_lo+stride,
    ...} up to tx_hi, same for ty. A point counts for a window when
    u in [tx, tx+win_w) and v in [ty, ty+win_h). Returns (tx, ty, count) of
    the maximum-count window; ties resolve to the smallest (ty, tx).

    All window geometry must be integral, which makes the count depend only
    on floor(u), floor(v) and lets the search run on a summed-area table.
    """
    txs = np.arange(tx_lo, tx_hi + 1, stride, dtype=np.int64)
    tys = np.arange(ty_lo, ty_hi + 1, stride, dtype=np.int64)
    if txs.size == 0 or tys.size == 0:
        raise ValueError("empty sweep range")

    x0, x1 = tx_lo, tx_hi + win_w
    y0, y1 = ty_lo, ty_hi + win_h
    px = np.floor(np.asarray(u, dtype=np.float64)).astype(np.int64)
    py = np.floor(np.asarray(v, dtype=np.float64)).astype(np.int64)
    inside = (px >= x0) & (px < x1) & (py >= y0) & (py < y1)

    hist = np.zeros((y1 - y0, x1 - x0), dtype=np.int64)
    np.add.at(hist, (py[inside] - y0, px[inside] - x0), 1)
    sat = np.zeros((hist.shape[0] + 1, hist.shape[1] + 1), dtype=np.int64)
    sat[1:, 1:] = hist.cumsum(axis=0).cumsum(axis=1)

    iy = tys - y0
    ix = txs - x0
    counts = (
        sat[np.ix_(iy + win_h, ix + win_w)]
        - sat[np.ix_(iy, ix + win_w)]
        - sat[np.ix_(iy + win_h, ix)]
        + sat[np.ix_(iy, ix)]
    )
    # row-major argmax scans ty first, then tx: exactly the (y, x) tie-break
    flat = int(np.argmax(counts))
    j, i = divmod(flat, counts.shape[1])
    return int(txs[i]), int(tys[j]), int(counts[j, i])


def rect_corners(
    cx: float, cz: float, w: float, l: float, yaw: float
) -> list[tuple[float, float]]:
    """Ground-plane corners of a yawed box footprint.

    The footprint is l long along the heading (yaw rotates the heading from
    the +x axis toward -z, the camera-frame convention) and w wide across
    it. Corner order is consistent for both operands of the intersection.
    """
    c, s = math.cos(yaw), math.sin(yaw)
    hx, hz = c, -s       # heading
    nx, nz = s, c        # lateral
    out = []
    for dl, dw in ((l / 2, w / 2), (l / 2, -w / 2), (-l / 2, -w / 2), (-l / 2, w / 2)):
        out.append((cx + dl * hx + dw * nx, cz + dl * hz + dw * nz))
    return out


def _polygon_area(poly) -> float:
    area = 0.0
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        area += x1 * y2 - x2 * y1
    return area / 2.0


def _ensure_ccw(poly):
    return poly if _polygon_area(poly) >= 0 else poly[::-1]


def _clip_halfplane(poly, ax, ay, bx, by):
    """Keep the part of poly on the left of the directed edge a->b."""
    out = []
    n = len(poly)
    ex, ey = bx - ax, by - ay
    for i in range(n):
        cx, cy = poly[i]
        px, py = poly[i - 1]
        cur_side = ex * (cy - ay) - ey * (cx - ax)
        prev_side = ex * (py - ay) - ey * (px - ax)
        if cur_side >= 0:
            if prev_side < 0:
                t = prev_side / (prev_side - cur_side)
                out.append((px + t * (cx - px), py + t * (cy - py)))
            out.append((cx, cy))
        elif prev_side >= 0:
            t = prev_side / (prev_side - cur_side)
            out.append((px + t * (cx - px), py + t * (cy - py)))
    return out


def rect_intersection_area(
    ax: float, az: float, aw: float, al: float, ayaw: float,
    bx: float, bz: float, bw: float, bl: float, byaw: float,
) -> float:
    """Exact intersection area of two yawed rectangles.

    Sutherland-Hodgman clipping of rectangle A against the four half-planes
    of rectangle B, then the shoelace formula. Degenerate (zero-area) inputs
    yield 0.
    """
    if aw <= 0 or al <= 0 or bw <= 0 or bl <= 0:
        return 0.0
    subject = _ensure_ccw(rect_corners(ax, az, aw, al, ayaw))
    clipper = _ensure_ccw(rect_corners(bx, bz, bw, bl, byaw))
    poly = subject
    for i in range(4):
        if not poly:
            return 0.0
        a = clipper[i]
        b = clipper[(i + 1) % 4]
        poly = _clip_halfplane(poly, a[0], a[1], b[0], b[1])
    if len(poly) < 3:
        return 0.0
    return abs(_polygon_area(poly))

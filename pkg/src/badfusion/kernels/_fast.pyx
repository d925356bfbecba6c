# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled versions of the hot kernels. Semantics match
badfusion.kernels._reference exactly; see that module for the contract."""

from libc.stdlib cimport calloc, free
from libc.math cimport floor, cos, sin, fabs


def densest_window(u, v, long tx_lo, long tx_hi, long ty_lo, long ty_hi,
                   long stride, long win_w, long win_h):
    cdef double[:] uu = u
    cdef double[:] vv = v
    cdef long n = uu.shape[0]
    if tx_hi < tx_lo or ty_hi < ty_lo or stride < 1:
        raise ValueError("empty sweep range")

    cdef long gw = tx_hi + win_w - tx_lo   # histogram width
    cdef long gh = ty_hi + win_h - ty_lo
    cdef long* sat = <long*>calloc((gw + 1) * (gh + 1), sizeof(long))
    if sat == NULL:
        raise MemoryError()

    cdef long i, px, py, x, y
    cdef long row = gw + 1
    cdef long best = -1, best_tx = tx_lo, best_ty = ty_lo
    cdef long tx, ty, iy0, iy1, ix0, ix1, c
    try:
        # histogram of floor(u), floor(v), stored shifted by one for the SAT
        for i in range(n):
            px = <long>floor(uu[i]) - tx_lo
            py = <long>floor(vv[i]) - ty_lo
            if 0 <= px < gw and 0 <= py < gh:
                sat[(py + 1) * row + (px + 1)] += 1
        # in-place summed-area table
        for y in range(1, gh + 1):
            for x in range(1, gw + 1):
                sat[y * row + x] += (sat[(y - 1) * row + x]
                                     + sat[y * row + x - 1]
                                     - sat[(y - 1) * row + x - 1])

        ty = ty_lo
        while ty <= ty_hi:
            iy0 = ty - ty_lo
            iy1 = iy0 + win_h
            tx = tx_lo
            while tx <= tx_hi:
                ix0 = tx - tx_lo
                ix1 = ix0 + win_w
                c = (sat[iy1 * row + ix1] - sat[iy0 * row + ix1]
                     - sat[iy1 * row + ix0] + sat[iy0 * row + ix0])
                if c > best:
                    best = c
                    best_tx = tx
                    best_ty = ty
                tx += stride
            ty += stride
        return best_tx, best_ty, best
    finally:
        free(sat)


cdef void _corners(double cx, double cz, double w, double l, double yaw,
                   double* xs, double* zs) nogil:
    cdef double c = cos(yaw)
    cdef double s = sin(yaw)
    cdef double hl = l / 2
    cdef double hw = w / 2
    # heading (c, -s), lateral (s, c); same convention as the reference
    xs[0] = cx + hl * c + hw * s;  zs[0] = cz - hl * s + hw * c
    xs[1] = cx + hl * c - hw * s;  zs[1] = cz - hl * s - hw * c
    xs[2] = cx - hl * c - hw * s;  zs[2] = cz + hl * s - hw * c
    xs[3] = cx - hl * c + hw * s;  zs[3] = cz + hl * s + hw * c


cdef double _shoelace(double* xs, double* zs, int n) nogil:
    cdef double area = 0.0
    cdef int i, j
    for i in range(n):
        j = (i + 1) % n
        area += xs[i] * zs[j] - xs[j] * zs[i]
    return area / 2.0


def rect_intersection_area(double ax, double az, double aw, double al, double ayaw,
                           double bx, double bz, double bw, double bl, double byaw):
    if aw <= 0 or al <= 0 or bw <= 0 or bl <= 0:
        return 0.0

    cdef double sx[16]
    cdef double sz[16]
    cdef double tx[16]
    cdef double tz[16]
    cdef double cxs[4]
    cdef double czs[4]
    cdef int ns = 4
    cdef int i

    _corners(ax, az, aw, al, ayaw, sx, sz)
    _corners(bx, bz, bw, bl, byaw, cxs, czs)
    # orient both CCW so "left of edge" means inside
    if _shoelace(sx, sz, 4) < 0:
        sx[1], sx[3] = sx[3], sx[1]
        sz[1], sz[3] = sz[3], sz[1]
    if _shoelace(cxs, czs, 4) < 0:
        cxs[1], cxs[3] = cxs[3], cxs[1]
        czs[1], czs[3] = czs[3], czs[1]

    cdef int e, nt, j
    cdef double eax, eaz, ebx, ebz, ex, ez
    cdef double cur_s, prev_s, t
    cdef double pxx, pzz, cxx, czz
    for e in range(4):
        if ns == 0:
            return 0.0
        eax = cxs[e]; eaz = czs[e]
        ebx = cxs[(e + 1) % 4]; ebz = czs[(e + 1) % 4]
        ex = ebx - eax; ez = ebz - eaz
        nt = 0
        for i in range(ns):
            j = i - 1 if i > 0 else ns - 1
            cxx = sx[i]; czz = sz[i]
            pxx = sx[j]; pzz = sz[j]
            cur_s = ex * (czz - eaz) - ez * (cxx - eax)
            prev_s = ex * (pzz - eaz) - ez * (pxx - eax)
            if cur_s >= 0:
                if prev_s < 0:
                    t = prev_s / (prev_s - cur_s)
                    tx[nt] = pxx + t * (cxx - pxx)
                    tz[nt] = pzz + t * (czz - pzz)
                    nt += 1
                tx[nt] = cxx; tz[nt] = czz
                nt += 1
            elif prev_s >= 0:
                t = prev_s / (prev_s - cur_s)
                tx[nt] = pxx + t * (cxx - pxx)
                tz[nt] = pzz + t * (czz - pzz)
                nt += 1
        ns = nt
        for i in range(ns):
            sx[i] = tx[i]
            sz[i] = tz[i]
    if ns < 3:
        return 0.0
    return fabs(_shoelace(sx, sz, ns))

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled CIEDE2000 and nearest-codebook kernels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport atan2, cos, exp, fabs, fmod, sin, sqrt, M_PI

cnp.import_array()

cdef double POW25_7 = 6103515625.0
cdef double DEG = 180.0 / M_PI
cdef double RAD = M_PI / 180.0


cdef inline double _hue(double b, double ap) noexcept nogil:
    cdef double h
    if ap == 0.0 and b == 0.0:
        return 0.0
    h = atan2(b, ap) * DEG
    # a tiny negative angle rounds to 360.0; keeping it preserves which side
    # of the hue seam the colour lies on
    if h < 0.0:
        h += 360.0
    return h


cdef double _de2000(double L1, double a1, double b1,
                    double L2, double a2, double b2) noexcept nogil:
    cdef double c_bar, c_bar7, g, a1p, a2p, c1p, c2p, h1p, h2p
    cdef double dLp, dCp, dhp, dHp, Lbp, Cbp, hbp, hsum, prod
    cdef double t, d_theta, cbp7, rc, lm, sl, sc, sh, rt, tl, tc, th, s

    c_bar = 0.5 * (sqrt(a1 * a1 + b1 * b1) + sqrt(a2 * a2 + b2 * b2))
    c_bar7 = c_bar ** 7
    g = 0.5 * (1.0 - sqrt(c_bar7 / (c_bar7 + POW25_7)))
    a1p = (1.0 + g) * a1
    a2p = (1.0 + g) * a2
    c1p = sqrt(a1p * a1p + b1 * b1)
    c2p = sqrt(a2p * a2p + b2 * b2)
    h1p = _hue(b1, a1p)
    h2p = _hue(b2, a2p)

    dLp = L2 - L1
    dCp = c2p - c1p
    prod = c1p * c2p
    if prod == 0.0:
        dhp = 0.0
    else:
        dhp = h2p - h1p
        if dhp > 180.0:
            dhp -= 360.0
        elif dhp < -180.0:
            dhp += 360.0
    dHp = 2.0 * sqrt(prod) * sin(dhp * RAD / 2.0)

    Lbp = 0.5 * (L1 + L2)
    Cbp = 0.5 * (c1p + c2p)
    hsum = h1p + h2p
    if prod == 0.0:
        hbp = hsum
    elif fabs(h1p - h2p) <= 180.0:
        hbp = hsum / 2.0
    elif hsum < 360.0:
        hbp = (hsum + 360.0) / 2.0
    else:
        hbp = (hsum - 360.0) / 2.0

    t = (1.0 - 0.17 * cos((hbp - 30.0) * RAD)
         + 0.24 * cos(2.0 * hbp * RAD)
         + 0.32 * cos((3.0 * hbp + 6.0) * RAD)
         - 0.20 * cos((4.0 * hbp - 63.0) * RAD))
    d_theta = 30.0 * exp(-((hbp - 275.0) / 25.0) ** 2)
    cbp7 = Cbp ** 7
    rc = 2.0 * sqrt(cbp7 / (cbp7 + POW25_7))
    lm = (Lbp - 50.0) ** 2
    sl = 1.0 + 0.015 * lm / sqrt(20.0 + lm)
    sc = 1.0 + 0.045 * Cbp
    sh = 1.0 + 0.015 * Cbp * t
    rt = -sin(2.0 * d_theta * RAD) * rc

    tl = dLp / sl
    tc = dCp / sc
    th = dHp / sh
    s = tl * tl + tc * tc + th * th + rt * tc * th
    if s < 0.0:
        s = 0.0
    return sqrt(s)


def ciede2000(lab1, lab2):
    cdef const double[:, ::1] x = np.ascontiguousarray(lab1, dtype=np.float64)
    cdef const double[:, ::1] y = np.ascontiguousarray(lab2, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _de2000(x[i, 0], x[i, 1], x[i, 2], y[i, 0], y[i, 1], y[i, 2])
    return out


def nearest_code(z, codebook, lesioned):
    cdef const double[:, ::1] zz = np.ascontiguousarray(z, dtype=np.float64)
    cdef const double[:, ::1] cb = np.ascontiguousarray(codebook, dtype=np.float64)
    cdef const unsigned char[::1] dead = np.ascontiguousarray(lesioned, dtype=np.uint8)
    cdef Py_ssize_t n = zz.shape[0], k = cb.shape[0], dim = zz.shape[1]
    cdef Py_ssize_t i, j, d, best
    cdef double dist, diff, best_dist
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    with nogil:
        for i in range(n):
            best = -1
            best_dist = 0.0
            for j in range(k):
                if dead[j]:
                    continue
                dist = 0.0
                for d in range(dim):
                    diff = zz[i, d] - cb[j, d]
                    dist = dist + diff * diff
                if best < 0 or dist < best_dist:
                    best = j
                    best_dist = dist
            o[i] = best
    return out

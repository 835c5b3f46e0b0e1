# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled orthant-probability kernels (same contracts as ``_pykernels``)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, fabs, sin, asin, INFINITY
from scipy.special.cython_special cimport ndtr

cnp.import_array()

cdef double _INV_SQRT_2PI = 0.3989422804014327

_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)
cdef double[::1] GLX = np.ascontiguousarray(_GL_X)
cdef double[::1] GLW = np.ascontiguousarray(_GL_W)
cdef int NGL = 64


cdef inline double _ndtr(double x) noexcept nogil:
    return ndtr(x)


def _half_nodes(n):
    x, w = np.polynomial.legendre.leggauss(n)
    keep = x > 0
    return np.ascontiguousarray(x[keep]), np.ascontiguousarray(w[keep])


_X6, _W6 = _half_nodes(6)
_X12, _W12 = _half_nodes(12)
_X20, _W20 = _half_nodes(20)
cdef double[::1] X6 = _X6, W6 = _W6, X12 = _X12, W12 = _W12, X20 = _X20, W20 = _W20
cdef double TWOPI = 6.283185307179586


cdef double bvnu(double h, double k, double r) noexcept nogil:
    # Drezner-Wesolowsky / Genz upper-orthant probability P(X > h, Y > k)
    cdef double hk, bvn = 0.0, hs, asr, sn, a, as_, bs, c, d, b, sp, xs, rs, ep, lg
    cdef double[::1] X
    cdef double[::1] W
    cdef int i, ng, sgn
    if h == INFINITY or k == INFINITY:
        return 0.0
    if h == -INFINITY:
        return 1.0 if k == -INFINITY else _ndtr(-k)
    if k == -INFINITY:
        return _ndtr(-h)
    if r == 0.0:
        return _ndtr(-h) * _ndtr(-k)
    if fabs(r) < 0.3:
        X = X6
        W = W6
    elif fabs(r) < 0.75:
        X = X12
        W = W12
    else:
        X = X20
        W = W20
    ng = X.shape[0]
    hk = h * k
    if fabs(r) < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = asin(r) / 2.0
        for i in range(ng):
            for sgn in range(2):
                xs = 1.0 - X[i] if sgn == 0 else 1.0 + X[i]
                sn = sin(asr * xs)
                bvn += W[i] * exp((sn * hk - hs) / (1.0 - sn * sn))
        bvn = bvn * asr / TWOPI + _ndtr(-h) * _ndtr(-k)
    else:
        if r < 0:
            k = -k
            hk = -hk
        if fabs(r) < 1.0:
            as_ = (1.0 - r) * (1.0 + r)
            a = sqrt(as_)
            bs = (h - k) * (h - k)
            asr = -(bs / as_ + hk) / 2.0
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 80.0
            if asr > -100.0:
                bvn = a * exp(asr) * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_)
            if hk > -100.0:
                b = sqrt(bs)
                sp = sqrt(TWOPI) * _ndtr(-b / a)
                bvn = bvn - exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
            a = a / 2.0
            lg = 0.0
            for i in range(ng):
                for sgn in range(2):
                    xs = 1.0 - X[i] if sgn == 0 else 1.0 + X[i]
                    xs = (a * xs) * (a * xs)
                    asr = -(bs / xs + hk) / 2.0
                    if asr > -100.0:
                        sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs)
                        rs = sqrt(1.0 - xs)
                        ep = exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs
                        lg += W[i] * exp(asr) * (sp - ep)
            bvn = (a * lg - bvn) / TWOPI
        if r > 0:
            bvn = bvn + _ndtr(-(h if h > k else k))
        elif h >= k:
            bvn = -bvn
        else:
            if h < 0:
                lg = _ndtr(k) - _ndtr(h)
            else:
                lg = _ndtr(-h) - _ndtr(-k)
            bvn = lg - bvn
    if bvn < 0.0:
        bvn = 0.0
    elif bvn > 1.0:
        bvn = 1.0
    return bvn


cdef inline double bvn(double h, double k, double rho) noexcept nogil:
    if rho > 1.0:
        rho = 1.0
    elif rho < -1.0:
        rho = -1.0
    return bvnu(-h, -k, rho)


cdef struct TvnCond:
    double r12
    double r13
    double s2
    double s3
    double rho
    int i0
    int i1
    int i2


cdef TvnCond _tvn_setup(const double[:, ::1] R):
    cdef TvnCond c
    cdef double best = 10.0, sc
    cdef int i, j
    cdef int order[3]
    c.i0 = 0
    for i in range(3):
        sc = 0.0
        for j in range(3):
            if j != i and fabs(R[i, j]) > sc:
                sc = fabs(R[i, j])
        if sc < best:
            best = sc
            c.i0 = i
    j = 0
    for i in range(3):
        if i != c.i0:
            order[j] = i
            j += 1
    c.i1 = order[0]
    c.i2 = order[1]
    c.r12 = R[c.i0, c.i1]
    c.r13 = R[c.i0, c.i2]
    c.s2 = sqrt(max(1.0 - c.r12 * c.r12, 1e-300))
    c.s3 = sqrt(max(1.0 - c.r13 * c.r13, 1e-300))
    c.rho = (R[c.i1, c.i2] - c.r12 * c.r13) / (c.s2 * c.s3)
    if c.rho > 1.0:
        c.rho = 1.0
    elif c.rho < -1.0:
        c.rho = -1.0
    return c


cdef double tvn(double a, double b, double d, TvnCond* c) noexcept nogil:
    # a is the conditioning coordinate, (b, d) the remaining pair
    cdef double h1, lo, half, x, acc = 0.0
    cdef int m
    if a == -INFINITY or b == -INFINITY or d == -INFINITY:
        return 0.0
    h1 = a
    if h1 > 9.0:
        h1 = 9.0
    elif h1 < -40.0:
        h1 = -40.0
    if h1 >= -1.0:
        lo = -9.0
    else:
        lo = h1 - min(8.0, 40.0 / fabs(h1))
    half = 0.5 * (h1 - lo)
    for m in range(NGL):
        x = lo + half * (GLX[m] + 1.0)
        acc += GLW[m] * _INV_SQRT_2PI * exp(-0.5 * x * x) * bvn(
            (b - c.r12 * x) / c.s2, (d - c.r13 * x) / c.s3, c.rho)
    acc *= half
    if acc < 0.0:
        acc = 0.0
    elif acc > 1.0:
        acc = 1.0
    return acc


def bvn_cdf(h, k, rho):
    h, k, rho = np.broadcast_arrays(
        np.asarray(h, dtype=float), np.asarray(k, dtype=float), np.asarray(rho, dtype=float))
    shape = h.shape
    cdef const double[::1] hf = np.ascontiguousarray(h).ravel()
    cdef const double[::1] kf = np.ascontiguousarray(k).ravel()
    cdef const double[::1] rf = np.ascontiguousarray(rho).ravel()
    out = np.empty(hf.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(hf.shape[0]):
            o[i] = bvn(hf[i], kf[i], rf[i])
    return out.reshape(shape)


def tvn_cdf(H, R):
    cdef const double[:, ::1] Hv = np.ascontiguousarray(np.atleast_2d(H), dtype=float)
    cdef const double[:, ::1] Rv = np.ascontiguousarray(R, dtype=float)
    cdef TvnCond c = _tvn_setup(Rv)
    out = np.empty(Hv.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(Hv.shape[0]):
            o[i] = tvn(Hv[i, c.i0], Hv[i, c.i1], Hv[i, c.i2], &c)
    return out


def phi_grid(H, s, R):
    cdef const double[:, ::1] Hv = np.ascontiguousarray(H, dtype=float)
    cdef const double[::1] sv = np.ascontiguousarray(s, dtype=float)
    cdef const double[:, ::1] Rv = np.ascontiguousarray(R, dtype=float)
    cdef Py_ssize_t n = Hv.shape[0], N = sv.shape[0], j, m
    cdef int r = Hv.shape[1]
    cdef double rho = 0.0
    cdef TvnCond c
    if r > 3:
        raise ValueError(f"phi_grid supports r <= 3, got r={r}")
    if r == 2:
        rho = Rv[0, 1]
    elif r == 3:
        c = _tvn_setup(Rv)
    out = np.empty((n, N))
    cdef double[:, ::1] o = out
    with nogil:
        for j in range(n):
            for m in range(N):
                if r == 1:
                    o[j, m] = _ndtr(sv[m] * Hv[j, 0])
                elif r == 2:
                    o[j, m] = bvn(sv[m] * Hv[j, 0], sv[m] * Hv[j, 1], rho)
                else:
                    o[j, m] = tvn(sv[m] * Hv[j, c.i0], sv[m] * Hv[j, c.i1],
                                  sv[m] * Hv[j, c.i2], &c)
    return out


def mixture_sums(H, s, W, R):
    cdef const double[:, ::1] Hv = np.ascontiguousarray(H, dtype=float)
    cdef const double[::1] sv = np.ascontiguousarray(s, dtype=float)
    cdef const double[:, ::1] Wv = np.ascontiguousarray(W, dtype=float)
    cdef const double[:, ::1] Rv = np.ascontiguousarray(R, dtype=float)
    cdef Py_ssize_t n = Hv.shape[0], N = sv.shape[0], M = Wv.shape[1], j, m, q
    cdef int r = Hv.shape[1]
    cdef double rho = 0.0, p
    cdef TvnCond c
    if r > 3:
        raise ValueError(f"mixture_sums supports r <= 3, got r={r}")
    if r == 2:
        rho = Rv[0, 1]
    elif r == 3:
        c = _tvn_setup(Rv)
    out = np.zeros((n, M))
    cdef double[:, ::1] o = out
    with nogil:
        for j in range(n):
            for m in range(N):
                if r == 1:
                    p = _ndtr(sv[m] * Hv[j, 0])
                elif r == 2:
                    p = bvn(sv[m] * Hv[j, 0], sv[m] * Hv[j, 1], rho)
                else:
                    p = tvn(sv[m] * Hv[j, c.i0], sv[m] * Hv[j, c.i1],
                            sv[m] * Hv[j, c.i2], &c)
                for q in range(M):
                    o[j, q] += Wv[m, q] * p
    return out

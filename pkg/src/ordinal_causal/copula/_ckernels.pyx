# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled copula kernels; same contract as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, sin, asin, expm1, log1p, fabs, pow, fmax, fmin, M_PI
from scipy.special.cython_special cimport ndtr, ndtri

cnp.import_array()

DEF INDEPENDENCE = 0
DEF GAUSSIAN = 1
DEF GUMBEL = 2
DEF CLAYTON = 3
DEF FRANK = 4
DEF FRECHET_LOWER = 5
DEF FRECHET_UPPER = 6

cdef double EPS = 1e-10
cdef double BISECT_TOL = 1e-10
cdef double TWOPI = 2.0 * M_PI

BACKEND = "cython"

_nodes = {n: np.polynomial.legendre.leggauss(n) for n in (6, 12, 20)}
cdef double[::1] X6 = np.ascontiguousarray(_nodes[6][0])
cdef double[::1] W6 = np.ascontiguousarray(_nodes[6][1])
cdef double[::1] X12 = np.ascontiguousarray(_nodes[12][0])
cdef double[::1] W12 = np.ascontiguousarray(_nodes[12][1])
cdef double[::1] X20 = np.ascontiguousarray(_nodes[20][0])
cdef double[::1] W20 = np.ascontiguousarray(_nodes[20][1])


cdef inline double _clamp(double t) nogil:
    if t < EPS:
        return EPS
    if t > 1.0 - EPS:
        return 1.0 - EPS
    return t


cdef double _bvnu(double h, double k, double r) nogil:
    # P(X > h, Y > k)
    cdef double bvn = 0.0, hk, hs, asr, sn, as_, a, b, bs, c, d, xs, rs
    cdef double[::1] xn
    cdef double[::1] wn
    cdef int i, n
    if fabs(r) < 0.925:
        if fabs(r) < 0.3:
            xn = X6
            wn = W6
        elif fabs(r) < 0.75:
            xn = X12
            wn = W12
        else:
            xn = X20
            wn = W20
        n = xn.shape[0]
        hk = h * k
        hs = 0.5 * (h * h + k * k)
        asr = asin(r)
        for i in range(n):
            sn = sin(0.5 * asr * (xn[i] + 1.0))
            bvn += wn[i] * exp((sn * hk - hs) / (1.0 - sn * sn))
        return bvn * asr / (2.0 * TWOPI) + ndtr(-h) * ndtr(-k)
    if r < 0:
        k = -k
    hk = h * k
    as_ = (1.0 - r) * (1.0 + r)
    a = sqrt(as_)
    bs = (h - k) * (h - k)
    c = (4.0 - hk) / 8.0
    d = (12.0 - hk) / 16.0
    bvn = a * exp(-(bs / as_ + hk) / 2.0) * (
        1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0)
    if hk > -160.0:
        b = sqrt(bs)
        bvn -= exp(-hk / 2.0) * sqrt(TWOPI) * ndtr(-b / a) * b * (
            1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
    a = a / 2.0
    for i in range(10):
        xs = (a * (X20[i] + 1.0)) ** 2
        rs = sqrt(1.0 - xs)
        bvn += a * W20[i] * (
            exp(-bs / (2.0 * xs) - hk / (1.0 + rs)) / rs
            - exp(-(bs / xs + hk) / 2.0) * (1.0 + c * xs * (1.0 + d * xs)))
        xs = as_ * (1.0 - X20[i]) ** 2 / 4.0
        rs = sqrt(1.0 - xs)
        bvn += a * W20[i] * exp(-(bs / xs + hk) / 2.0) * (
            exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
            - (1.0 + c * xs * (1.0 + d * xs)))
    bvn = -bvn / TWOPI
    if r > 0:
        return bvn + ndtr(-fmax(h, k))
    return -bvn + fmax(0.0, ndtr(-h) - ndtr(-k))


cdef inline double _bvn(double x, double y, double r) nogil:
    return fmin(1.0, fmax(0.0, _bvnu(-x, -y, r)))


cdef inline double _frank_pos_cdf(double th, double u, double v) nogil:
    cdef double a = expm1(-th * u), b = expm1(-th * v), c = expm1(-th)
    return -log1p(a * b / c) / th


cdef inline double _frank_pos_h(double th, double u, double v) nogil:
    cdef double a = expm1(-th * u), b = expm1(-th * v), c = expm1(-th)
    return (a + 1.0) * b / (c + a * b)


cdef inline double _clayton_log_sum(double th, double lu, double lv) nogil:
    cdef double t = -th * lu, s = -th * lv
    cdef double mx = fmax(t, s)
    return mx + log(exp(t - mx) + exp(s - mx) - exp(-mx))


cdef double _interior_cdf(int code, double rho, double u, double v) nogil:
    cdef double x, y, s
    if code == INDEPENDENCE:
        return u * v
    if code == GAUSSIAN:
        return _bvn(ndtri(u), ndtri(v), rho)
    if code == GUMBEL:
        x = -log(u)
        y = -log(v)
        s = pow(x, rho) + pow(y, rho)
        return exp(-pow(s, 1.0 / rho))
    if code == CLAYTON:
        if rho == 0.0:
            return u * v
        return exp(-_clayton_log_sum(rho, log(u), log(v)) / rho)
    if code == FRANK:
        if rho > 0.0:
            return _frank_pos_cdf(rho, u, v)
        if rho < 0.0:
            return u - _frank_pos_cdf(-rho, u, 1.0 - v)
        return u * v
    return 0.0


cdef double _cdf1(int code, double rho, double u, double v) nogil:
    cdef double res, lo, hi
    if code == FRECHET_UPPER:
        return fmin(u, v)
    if u <= 0.0 or v <= 0.0:
        return 0.0
    if u >= 1.0:
        return v
    if v >= 1.0:
        return u
    if code == FRECHET_LOWER:
        return fmax(u + v - 1.0, 0.0)
    res = _interior_cdf(code, rho, _clamp(u), _clamp(v))
    lo = fmax(u + v - 1.0, 0.0)
    hi = fmin(u, v)
    return fmin(fmax(res, lo), hi)


cdef double _interior_h(int code, double rho, double u, double v) nogil:
    cdef double x, y, s, a, lu
    if code == INDEPENDENCE:
        return v
    if code == GAUSSIAN:
        return ndtr((ndtri(v) - rho * ndtri(u)) / sqrt(1.0 - rho * rho))
    if code == GUMBEL:
        x = -log(u)
        y = -log(v)
        s = pow(x, rho) + pow(y, rho)
        a = pow(s, 1.0 / rho)
        return exp(-a + (1.0 / rho - 1.0) * log(s) + (rho - 1.0) * log(x) + x)
    if code == CLAYTON:
        if rho == 0.0:
            return v
        lu = log(u)
        return exp(-(rho + 1.0) * lu - (1.0 / rho + 1.0) * _clayton_log_sum(rho, lu, log(v)))
    if code == FRANK:
        if rho > 0.0:
            return _frank_pos_h(rho, u, v)
        if rho < 0.0:
            return 1.0 - _frank_pos_h(-rho, u, 1.0 - v)
        return v
    return 0.0


cdef double _h1(int code, double rho, double u, double v) nogil:
    cdef double s
    if code == FRECHET_UPPER:
        if u < v:
            return 1.0
        return 0.5 if u == v else 0.0
    if code == FRECHET_LOWER:
        s = u + v
        if s > 1.0:
            return 1.0
        return 0.5 if s == 1.0 else 0.0
    if v <= 0.0:
        return 0.0
    if v >= 1.0:
        return 1.0
    return fmin(1.0, fmax(0.0, _interior_h(code, rho, _clamp(u), _clamp(v))))


def bvn_cdf(x, y, r):
    x, y, r = (np.ravel(np.asarray(t, dtype=np.float64)) for t in np.broadcast_arrays(x, y, r))
    cdef double[::1] xv = np.ascontiguousarray(x)
    cdef double[::1] yv = np.ascontiguousarray(y)
    cdef double[::1] rv = np.ascontiguousarray(r)
    cdef Py_ssize_t i, n = xv.shape[0]
    out = np.empty(n)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            ov[i] = _bvn(xv[i], yv[i], rv[i])
    return out


def cdf(int code, const double[::1] rho, const double[::1] u, const double[::1] v):
    cdef Py_ssize_t i, n = u.shape[0]
    out = np.empty(n)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            ov[i] = _cdf1(code, rho[i], u[i], v[i])
    return out


def h_func(int code, const double[::1] rho, const double[::1] u, const double[::1] v):
    cdef Py_ssize_t i, n = u.shape[0]
    out = np.empty(n)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            ov[i] = _h1(code, rho[i], u[i], v[i])
    return out


def h_inverse(int code, const double[::1] rho, const double[::1] u, const double[::1] w):
    cdef Py_ssize_t i, n = u.shape[0]
    cdef double lo, hi, mid
    out = np.empty(n)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            lo = 0.0
            hi = 1.0
            while hi - lo > BISECT_TOL:
                mid = 0.5 * (lo + hi)
                if _h1(code, rho[i], u[i], mid) < w[i]:
                    lo = mid
                else:
                    hi = mid
            ov[i] = 0.5 * (lo + hi)
    return out

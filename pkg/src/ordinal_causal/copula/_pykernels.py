"""Pure numpy copula kernels.

Reference backend and fallback for the compiled ``_ckernels`` module. Every
function takes 1-D float64 arrays of equal length (``rho`` included) and a
family code, and returns a new array. Boundary handling and the interior clamp
live here so both backends agree on semantics.
"""

import numpy as np
from scipy.special import ndtr, ndtri

INDEPENDENCE, GAUSSIAN, GUMBEL, CLAYTON, FRANK, FRECHET_LOWER, FRECHET_UPPER = range(7)

EPS = 1e-10
BISECT_TOL = 1e-10

_TWOPI = 2.0 * np.pi
# Gauss-Legendre rules of order 6, 12 and 20 on [-1, 1].
_GL = {n: np.polynomial.legendre.leggauss(n) for n in (6, 12, 20)}
# Genz's half-rule for the high-correlation branch: the ten negative nodes.
_X20_HALF = _GL[20][0][:10]
_W20_HALF = _GL[20][1][:10]

BACKEND = "python"


def _bvn_moderate(h, k, r, n_nodes):
    # P(X > h, Y > k) for |r| < 0.925
    x, w = _GL[n_nodes]
    hk = h * k
    hs = 0.5 * (h * h + k * k)
    asr = np.arcsin(r)
    sn = np.sin(0.5 * asr[:, None] * (x[None, :] + 1.0))
    terms = np.exp((sn * hk[:, None] - hs[:, None]) / (1.0 - sn * sn))
    return terms @ w * asr / (2.0 * _TWOPI) + ndtr(-h) * ndtr(-k)


def _bvn_high(h, k, r):
    # P(X > h, Y > k) for 0.925 <= |r| < 1
    neg = r < 0
    k = np.where(neg, -k, k)
    hk = h * k
    as_ = (1.0 - r) * (1.0 + r)
    a = np.sqrt(as_)
    bs = (h - k) ** 2
    c = (4.0 - hk) / 8.0
    d = (12.0 - hk) / 16.0
    bvn = a * np.exp(-(bs / as_ + hk) / 2.0) * (
        1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0
    )
    b = np.sqrt(bs)
    tail = (
        np.exp(-hk / 2.0)
        * np.sqrt(_TWOPI)
        * ndtr(-b / a)
        * b
        * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
    )
    bvn = np.where(hk > -160.0, bvn - tail, bvn)
    a = a / 2.0
    for xi, wi in zip(_X20_HALF, _W20_HALF):
        xs = (a * (xi + 1.0)) ** 2
        rs = np.sqrt(1.0 - xs)
        bvn = bvn + a * wi * (
            np.exp(-bs / (2.0 * xs) - hk / (1.0 + rs)) / rs
            - np.exp(-(bs / xs + hk) / 2.0) * (1.0 + c * xs * (1.0 + d * xs))
        )
        xs = as_ * (1.0 - xi) ** 2 / 4.0
        rs = np.sqrt(1.0 - xs)
        bvn = bvn + a * wi * np.exp(-(bs / xs + hk) / 2.0) * (
            np.exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
            - (1.0 + c * xs * (1.0 + d * xs))
        )
    bvn = -bvn / _TWOPI
    pos_part = bvn + ndtr(-np.maximum(h, k))
    neg_part = -bvn + np.maximum(0.0, ndtr(-h) - ndtr(-k))
    return np.where(neg, neg_part, pos_part)


def bvn_cdf(x, y, r):
    """Standard bivariate normal CDF pr(X <= x, Y <= y) with correlation r.

    Drezner-Wesolowsky single-integral reduction with Genz's choice of
    Gauss-Legendre order and his asymptotic expansion for |r| >= 0.925.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.asarray(r, dtype=float)
    x, y, r = (np.ravel(t) for t in np.broadcast_arrays(x, y, r))
    h, k = -x, -y
    out = np.empty_like(h)
    absr = np.abs(r)
    for lo, hi, n_nodes in ((0.0, 0.3, 6), (0.3, 0.75, 12), (0.75, 0.925, 20)):
        m = (absr >= lo) & (absr < hi)
        if m.any():
            out[m] = _bvn_moderate(h[m], k[m], r[m], n_nodes)
    m = absr >= 0.925
    if m.any():
        out[m] = _bvn_high(h[m], k[m], r[m])
    return np.clip(out, 0.0, 1.0)


def _clamp(t):
    return np.clip(t, EPS, 1.0 - EPS)


def _frank_pos_cdf(theta, u, v):
    a = np.expm1(-theta * u)
    b = np.expm1(-theta * v)
    c = np.expm1(-theta)
    return -np.log1p(a * b / c) / theta


def _frank_pos_h(theta, u, v):
    a = np.expm1(-theta * u)
    b = np.expm1(-theta * v)
    c = np.expm1(-theta)
    return (a + 1.0) * b / (c + a * b)


def _interior_cdf(code, rho, u, v):
    if code == INDEPENDENCE:
        return u * v
    if code == GAUSSIAN:
        return bvn_cdf(ndtri(u), ndtri(v), rho)
    if code == GUMBEL:
        x = -np.log(u)
        y = -np.log(v)
        s = x**rho + y**rho
        return np.exp(-(s ** (1.0 / rho)))
    if code == CLAYTON:
        out = u * v
        m = rho != 0.0
        if m.any():
            th = rho[m]
            t = -th * np.log(u[m])
            s = -th * np.log(v[m])
            mx = np.maximum(t, s)
            log_sum = mx + np.log(np.exp(t - mx) + np.exp(s - mx) - np.exp(-mx))
            out[m] = np.exp(-log_sum / th)
        return out
    if code == FRANK:
        out = u * v
        pos = rho > 0.0
        if pos.any():
            out[pos] = _frank_pos_cdf(rho[pos], u[pos], v[pos])
        neg = rho < 0.0
        if neg.any():
            # C_theta(u, v) = u - C_{-theta}(u, 1 - v) for theta < 0
            out[neg] = u[neg] - _frank_pos_cdf(-rho[neg], u[neg], 1.0 - v[neg])
        return out
    raise ValueError(f"unknown family code {code}")


def cdf(code, rho, u, v):
    """C(u, v) with exact boundary values and the interior clamp."""
    out = np.empty_like(u)
    if code == FRECHET_UPPER:
        return np.minimum(u, v)
    if code == FRECHET_LOWER:
        out = np.maximum(u + v - 1.0, 0.0)
        out[v >= 1.0] = u[v >= 1.0]
        out[u >= 1.0] = v[u >= 1.0]
        return out
    zero = (u <= 0.0) | (v <= 0.0)
    u_one = (u >= 1.0) & ~zero
    v_one = (v >= 1.0) & ~zero & ~u_one
    inner = ~(zero | u_one | v_one)
    out[zero] = 0.0
    out[u_one] = v[u_one]
    out[v_one] = u[v_one]
    if inner.any():
        res = _interior_cdf(code, rho[inner], _clamp(u[inner]), _clamp(v[inner]))
        # round-off guard for the Frechet-Hoeffding sandwich
        ui, vi = u[inner], v[inner]
        out[inner] = np.clip(res, np.maximum(ui + vi - 1.0, 0.0), np.minimum(ui, vi))
    return out


def _interior_h(code, rho, u, v):
    if code == INDEPENDENCE:
        return v.copy()
    if code == GAUSSIAN:
        return ndtr((ndtri(v) - rho * ndtri(u)) / np.sqrt(1.0 - rho * rho))
    if code == GUMBEL:
        x = -np.log(u)
        y = -np.log(v)
        s = x**rho + y**rho
        a = s ** (1.0 / rho)
        log_h = -a + (1.0 / rho - 1.0) * np.log(s) + (rho - 1.0) * np.log(x) + x
        return np.exp(log_h)
    if code == CLAYTON:
        out = v.copy()
        m = rho != 0.0
        if m.any():
            th = rho[m]
            lu = np.log(u[m])
            t = -th * lu
            s = -th * np.log(v[m])
            mx = np.maximum(t, s)
            log_sum = mx + np.log(np.exp(t - mx) + np.exp(s - mx) - np.exp(-mx))
            out[m] = np.exp(-(th + 1.0) * lu - (1.0 / th + 1.0) * log_sum)
        return out
    if code == FRANK:
        out = v.copy()
        pos = rho > 0.0
        if pos.any():
            out[pos] = _frank_pos_h(rho[pos], u[pos], v[pos])
        neg = rho < 0.0
        if neg.any():
            out[neg] = 1.0 - _frank_pos_h(-rho[neg], u[neg], 1.0 - v[neg])
        return out
    raise ValueError(f"unknown family code {code}")


def h_func(code, rho, u, v):
    """dC/du(u, v); dC/dv follows from exchangeability by swapping arguments."""
    if code == FRECHET_UPPER:
        return np.where(u < v, 1.0, np.where(u == v, 0.5, 0.0))
    if code == FRECHET_LOWER:
        s = u + v
        return np.where(s > 1.0, 1.0, np.where(s == 1.0, 0.5, 0.0))
    out = np.empty_like(u)
    v_zero = v <= 0.0
    v_one = v >= 1.0
    inner = ~(v_zero | v_one)
    out[v_zero] = 0.0
    out[v_one] = 1.0
    if inner.any():
        res = _interior_h(code, rho[inner], _clamp(u[inner]), _clamp(v[inner]))
        out[inner] = np.clip(res, 0.0, 1.0)
    return out


def h_inverse(code, rho, u, w):
    """Solve dC/du(u, v) = w for v by bisection on [0, 1]."""
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    while True:
        mid = 0.5 * (lo + hi)
        below = h_func(code, rho, u, mid) < w
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) <= BISECT_TOL:
            break
    return 0.5 * (lo + hi)

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from ordinal_causal import copula
from ordinal_causal.copula import CopulaSpec, Family, EPS
from ordinal_causal.errors import InvalidParameter, UnsupportedCopula, UnsupportedTau

SMOOTH = [
    CopulaSpec(Family.GAUSSIAN, 0.7071),
    CopulaSpec(Family.GAUSSIAN, -0.6),
    CopulaSpec(Family.GUMBEL, 2.0),
    CopulaSpec(Family.GUMBEL, 5.0),
    CopulaSpec(Family.CLAYTON, 0.8),
    CopulaSpec(Family.CLAYTON, 4.0),
    CopulaSpec(Family.FRANK, 5.0),
    CopulaSpec(Family.FRANK, -7.0),
]
ALL = SMOOTH + [
    CopulaSpec(Family.INDEPENDENCE),
    CopulaSpec(Family.FRECHET_LOWER),
    CopulaSpec(Family.FRECHET_UPPER),
]
ids = [s.label() for s in ALL]


# --- reference formulas (mpmath, 40 digits) ---------------------------------

mpmath.mp.dps = 40


def mp_cdf(spec, u, v):
    u, v = mpmath.mpf(u), mpmath.mpf(v)
    r = mpmath.mpf(spec.rho)
    f = spec.family
    if f is Family.GUMBEL:
        return mpmath.exp(-(((-mpmath.log(u)) ** r + (-mpmath.log(v)) ** r) ** (1 / r)))
    if f is Family.CLAYTON:
        return (u ** -r + v ** -r - 1) ** (-1 / r)
    if f is Family.FRANK:
        return -mpmath.log(1 + (mpmath.exp(-r * u) - 1) * (mpmath.exp(-r * v) - 1) / (mpmath.exp(-r) - 1)) / r
    if f is Family.GAUSSIAN:
        x, y = mpmath.sqrt(2) * mpmath.erfinv(2 * u - 1), mpmath.sqrt(2) * mpmath.erfinv(2 * v - 1)
        # Plackett's identity: dPhi2/dr = phi2(x, y; r)
        def dens(t):
            return mpmath.exp(-(x * x - 2 * t * x * y + y * y) / (2 * (1 - t * t))) / (2 * mpmath.pi * mpmath.sqrt(1 - t * t))
        return mpmath.ncdf(x) * mpmath.ncdf(y) + mpmath.quad(dens, [0, r])
    raise AssertionError(f)


# --- documented values ------------------------------------------------------


def test_independence_values(kernels):
    s = CopulaSpec(Family.INDEPENDENCE)
    assert copula.cdf(s, 0.3, 0.6, kernels=kernels) == pytest.approx(0.18, abs=1e-15)
    assert copula.partial_u(s, 0.3, 0.6, kernels=kernels) == pytest.approx(0.6, abs=1e-15)
    assert copula.rectangle(s, 0.6, 0.3, 0.8, 0.2, kernels=kernels) == pytest.approx(0.18, abs=1e-15)


def test_gumbel_center_value(kernels):
    s = CopulaSpec(Family.GUMBEL, 2.0)
    assert copula.cdf(s, 0.5, 0.5, kernels=kernels) == pytest.approx(2.0 ** -math.sqrt(2.0), rel=1e-14)


def test_gumbel_center_matches_density_integral():
    # oracle: integrate the mixed partial of the cdf (density by finite differences of partial_u)
    s = CopulaSpec(Family.GUMBEL, 2.0)
    h = 1e-6

    def inner(v):
        return integrate.quad(lambda u: float(copula.partial_u(s, u, v)), 0.0, 0.5, epsabs=1e-13)[0]

    val = integrate.quad(lambda v: (inner(v + h) - inner(v - h)) / (2 * h), 0.0, 0.5, epsabs=1e-10, limit=200)[0]
    assert val == pytest.approx(0.375214, abs=2e-6)


def test_gaussian_values(kernels):
    assert copula.cdf(CopulaSpec(Family.GAUSSIAN, 0.0), 0.5, 0.5, kernels=kernels) == pytest.approx(0.25, abs=1e-14)
    s = CopulaSpec(Family.GAUSSIAN, 0.7071)
    assert copula.partial_u(s, 0.5, 0.5, kernels=kernels) == pytest.approx(0.5, abs=1e-14)
    h = 1e-6
    fd = (copula.cdf(s, 0.5 + h, 0.5, kernels=kernels) - copula.cdf(s, 0.5 - h, 0.5, kernels=kernels)) / (2 * h)
    assert fd == pytest.approx(0.5, rel=1e-6)


@pytest.mark.parametrize("spec", ALL, ids=ids)
def test_boundary_exact(spec, kernels):
    for t in (0.0, 0.17, 0.42, 0.9, 1.0):
        assert copula.cdf(spec, t, 0.0, kernels=kernels) == 0.0
        assert copula.cdf(spec, 0.0, t, kernels=kernels) == 0.0
        assert copula.cdf(spec, t, 1.0, kernels=kernels) == t
        assert copula.cdf(spec, 1.0, t, kernels=kernels) == t


@pytest.mark.parametrize("spec", SMOOTH, ids=[s.label() for s in SMOOTH])
def test_cdf_against_mpmath(spec, kernels):
    pts = [(0.5, 0.5), (0.1, 0.8), (0.93, 0.27), (0.02, 0.04), (0.97, 0.99)]
    for u, v in pts:
        want = float(mp_cdf(spec, u, v))
        assert copula.cdf(spec, u, v, kernels=kernels) == pytest.approx(want, rel=1e-12, abs=1e-14)


def test_bvn_against_scipy(kernels, rng):
    x = rng.normal(size=200) * 2
    y = rng.normal(size=200) * 2
    r = rng.uniform(-0.99, 0.99, size=200)
    got = copula.bvn_cdf(x, y, r, kernels=kernels)
    for i in range(0, 200, 7):
        want = stats.multivariate_normal(cov=[[1, r[i]], [r[i], 1]]).cdf([x[i], y[i]])
        assert got[i] == pytest.approx(want, abs=1e-6)
    # tighter check against Plackett's identity in mpmath
    for i in range(5):
        spec = CopulaSpec(Family.GAUSSIAN, float(r[i]))
        u, v = stats.norm.cdf(x[i]), stats.norm.cdf(y[i])
        assert got[i] == pytest.approx(float(mp_cdf(spec, u, v)), abs=1e-13)


# --- structural properties ---------------------------------------------------


@pytest.mark.parametrize("spec", ALL, ids=ids)
def test_frechet_sandwich_grid(spec, kernels):
    g = np.linspace(0.0, 1.0, 50)
    u, v = np.meshgrid(g, g)
    c = copula.cdf(spec, u, v, kernels=kernels)
    assert np.all(c >= np.maximum(u + v - 1.0, 0.0) - 1e-15)
    assert np.all(c <= np.minimum(u, v) + 1e-15)


@pytest.mark.parametrize("spec", ALL, ids=ids)
def test_two_increasing(spec, kernels):
    rng = np.random.default_rng(7)
    a = rng.uniform(size=(2, 10_000))
    b = rng.uniform(size=(2, 10_000))
    raw = copula.rectangle(spec, a.max(0), a.min(0), b.max(0), b.min(0), floor=False, kernels=kernels)
    assert raw.min() >= -1e-12
    floored = copula.rectangle(spec, a.max(0), a.min(0), b.max(0), b.min(0), kernels=kernels)
    assert floored.min() >= 0.0


@pytest.mark.parametrize("spec", ALL, ids=ids)
def test_degenerate_rectangle(spec, kernels):
    assert copula.rectangle(spec, 0.4, 0.4, 0.9, 0.1, kernels=kernels) == 0.0


def test_gumbel_rectangle_quadrature():
    s = CopulaSpec(Family.GUMBEL, 2.0)
    h = 1e-5

    def density(v, u):
        return (copula.partial_u(s, u, v + h) - copula.partial_u(s, u, v - h)) / (2 * h)

    want = integrate.dblquad(density, 0.25, 0.75, 0.25, 0.75, epsabs=1e-11)[0]
    got = copula.rectangle(s, 0.75, 0.25, 0.75, 0.25)
    assert got == pytest.approx(want, abs=1e-6)


@pytest.mark.parametrize("spec", SMOOTH, ids=[s.label() for s in SMOOTH])
def test_partials_finite_difference(spec, kernels):
    rng = np.random.default_rng(3)
    u, v = rng.uniform(0.05, 0.95, size=(2, 500))
    h = 1e-6
    fd_u = (copula.cdf(spec, u + h, v, kernels=kernels) - copula.cdf(spec, u - h, v, kernels=kernels)) / (2 * h)
    fd_v = (copula.cdf(spec, u, v + h, kernels=kernels) - copula.cdf(spec, u, v - h, kernels=kernels)) / (2 * h)
    pu = copula.partial_u(spec, u, v, kernels=kernels)
    pv = copula.partial_v(spec, u, v, kernels=kernels)
    for got, fd, axis in ((pu, fd_u, 0), (pv, fd_v, 1)):
        rel = np.abs(got - fd) / np.abs(got)
        # where the partial is tiny, double-precision differencing loses the
        # digits; redo those differences in 40-digit arithmetic
        for i in np.flatnonzero(rel >= 1e-5):
            step = (h, 0) if axis == 0 else (0, h)
            hi = mp_cdf(spec, u[i] + step[0], v[i] + step[1])
            lo = mp_cdf(spec, u[i] - step[0], v[i] - step[1])
            rel[i] = abs(got[i] - float((hi - lo) / (2 * h))) / abs(got[i])
        assert rel.max() < 1e-5
    assert np.all((pu >= 0) & (pu <= 1)) and np.all((pv >= 0) & (pv <= 1))


def test_frechet_partials_tie_convention(kernels):
    m = CopulaSpec(Family.FRECHET_UPPER)
    w = CopulaSpec(Family.FRECHET_LOWER)
    assert copula.partial_u(m, 0.3, 0.6, kernels=kernels) == 1.0
    assert copula.partial_u(m, 0.7, 0.6, kernels=kernels) == 0.0
    assert copula.partial_u(m, 0.5, 0.5, kernels=kernels) == 0.5
    assert copula.partial_u(w, 0.3, 0.6, kernels=kernels) == 0.0
    assert copula.partial_u(w, 0.7, 0.6, kernels=kernels) == 1.0
    assert copula.partial_u(w, 0.5, 0.5, kernels=kernels) == 0.5


@pytest.mark.parametrize("family", copula.DIFFERENTIABLE_FAMILIES, ids=lambda f: f.value)
def test_concordance_ordering(family, kernels):
    g = np.linspace(0.02, 0.98, 25)
    u, v = np.meshgrid(g, g)
    prev = None
    for tau in (0.0, 0.2, 0.4, 0.6, 0.8):
        c = copula.cdf(CopulaSpec.from_tau(family, tau), u, v, kernels=kernels)
        if prev is not None:
            assert np.all(c >= prev - 1e-14)
        prev = c


@settings(max_examples=200, deadline=None)
@given(
    st.sampled_from(SMOOTH),
    st.floats(0.0, 1.0),
    st.floats(0.0, 1.0),
)
def test_hypothesis_cdf_bounds(spec, u, v):
    c = copula.cdf(spec, u, v)
    assert max(u + v - 1.0, 0.0) - 1e-15 <= c <= min(u, v) + 1e-15


def test_backends_agree(rng):
    names = copula._backend.available()
    if len(names) < 2:
        pytest.skip("compiled kernels not built")
    kc, kp = (copula._backend.load(n) for n in names)
    u, v = rng.uniform(size=(2, 2000))
    for spec in ALL:
        for fn in (copula.cdf, copula.partial_u, copula.partial_v):
            np.testing.assert_allclose(fn(spec, u, v, kernels=kc), fn(spec, u, v, kernels=kp), rtol=1e-12, atol=1e-15)


# --- tau conversion ------------------------------------------------------------


def test_documented_tau_values():
    assert copula.tau_to_rho(Family.GUMBEL, 0.5) == pytest.approx(2.0, abs=1e-15)
    assert copula.tau_to_rho(Family.GAUSSIAN, 0.5) == pytest.approx(0.7071, abs=1e-4)
    assert copula.tau_to_rho(Family.GUMBEL, 0.0) == 1.0
    assert copula.tau_to_rho(Family.GAUSSIAN, 0.0) == 0.0
    assert copula.tau_to_rho(Family.CLAYTON, 0.5) == pytest.approx(2.0)


def test_frank_tau_against_debye_quadrature():
    for rho in (-12.0, -0.5, 0.3, 5.0, 40.0):
        d1 = integrate.quad(lambda t: t / math.expm1(t), 0.0, abs(rho))[0] / abs(rho)
        want = math.copysign(1.0, rho) * (1.0 - 4.0 / abs(rho) * (1.0 - d1))
        assert copula.rho_to_tau(Family.FRANK, rho) == pytest.approx(want, abs=1e-10)


@pytest.mark.parametrize("family", copula.DIFFERENTIABLE_FAMILIES, ids=lambda f: f.value)
def test_tau_round_trip(family):
    lo = 0.0 if family in (Family.GUMBEL, Family.CLAYTON) else -0.98
    for tau in np.linspace(lo, 0.98, 99):
        rho = copula.tau_to_rho(family, tau)
        assert abs(copula.rho_to_tau(family, rho) - tau) < 1e-8


def test_tau_from_simulated_pairs():
    # Kendall's tau of draws from the copula recovers the requested tau
    rng = np.random.default_rng(0)
    for family in copula.DIFFERENTIABLE_FAMILIES:
        u, v = copula.sample(CopulaSpec.from_tau(family, 0.4), 4000, rng)
        assert stats.kendalltau(u, v)[0] == pytest.approx(0.4, abs=0.03)


@pytest.mark.parametrize("family,tau", [(Family.GUMBEL, -0.1), (Family.CLAYTON, -0.5), (Family.GAUSSIAN, 1.0),
                                        (Family.FRANK, 0.999), (Family.GUMBEL, float("nan"))])
def test_unsupported_tau(family, tau):
    with pytest.raises(UnsupportedTau):
        copula.tau_to_rho(family, tau)


@pytest.mark.parametrize("family,rho", [(Family.GAUSSIAN, 1.0), (Family.GUMBEL, 0.5), (Family.CLAYTON, -1.0),
                                        (Family.FRANK, float("inf"))])
def test_invalid_parameter(family, rho):
    with pytest.raises(InvalidParameter):
        CopulaSpec(family, rho)


def test_frechet_not_differentiable():
    with pytest.raises(UnsupportedCopula):
        copula.require_differentiable(CopulaSpec(Family.FRECHET_UPPER))


def test_clamp_keeps_interior_finite(kernels):
    for spec in SMOOTH:
        c = copula.partial_u(spec, np.array([1e-300, EPS / 10, 1 - 1e-17]), np.array([0.5, 1e-300, 0.3]), kernels=kernels)
        assert np.all(np.isfinite(c))


def test_conditional_inverse_roundtrip(rng):
    for spec in SMOOTH:
        u, w = rng.uniform(0.01, 0.99, size=(2, 200))
        v = copula.conditional_inverse(spec, u, w)
        np.testing.assert_allclose(copula.partial_u(spec, u, v), w, atol=1e-8)


def test_array_rho_broadcast():
    rho = np.array([1.5, 2.0, 3.0])
    got = copula.cdf(CopulaSpec(Family.GUMBEL, rho), 0.4, 0.6)
    want = [copula.cdf(CopulaSpec(Family.GUMBEL, r), 0.4, 0.6) for r in rho]
    np.testing.assert_allclose(got, want, rtol=1e-15)

import itertools
import math

import numpy as np
import pytest
from scipy.optimize import linprog

from ordinal_causal import simulation as sim
from ordinal_causal.copula import CopulaSpec, Family, DIFFERENTIABLE_FAMILIES
from ordinal_causal.errors import InconsistentMargins, NumericalError, UnsupportedCopula
from ordinal_causal.estimands import (
    Estimand,
    Mode,
    cell_grid,
    coupling_bounds,
    cross_fit,
    delta_coeffs,
    delta_matrix,
    dr_margins,
    frechet_envelope,
    m_matrix,
    m_value,
    one_step,
    plugin_mean,
    unconditional_dr,
)
from ordinal_causal.nuisance import (
    ConstantPropensity,
    Dataset,
    ParametricNuisance,
    ProportionalOdds,
    fit_crossfit,
    fit_nuisance,
    predict_nuisance,
)

SPECS = [CopulaSpec.from_tau(f, t) for f in DIFFERENTIABLE_FAMILIES for t in (0.2, 0.6)]
SPECS += [CopulaSpec(Family.INDEPENDENCE), CopulaSpec.from_tau(Family.FRANK, -0.4),
          CopulaSpec.from_tau(Family.GAUSSIAN, -0.5)]


def random_margins(rng, n, L, lo=0.02, hi=0.98):
    draw = rng.uniform(lo, hi, size=(2, n, L - 1))
    return np.sort(draw[0], axis=1), np.sort(draw[1], axis=1)


def brute_pmf(f):
    return np.diff(np.concatenate([[0.0], f, [1.0]]))


# --- cell grid and m ---------------------------------------------------------


def test_independence_grid_l2():
    cell = cell_grid([0.4], [0.7], CopulaSpec(Family.INDEPENDENCE))
    np.testing.assert_allclose(cell.pi, [[0.28, 0.12], [0.42, 0.18]], atol=1e-15)
    assert m_value("psi", cell) == pytest.approx(0.42, abs=1e-15)


def test_comonotone_identical_margins():
    f = [0.2, 0.5, 0.9]
    cell = cell_grid(f, f, CopulaSpec(Family.FRECHET_UPPER))
    np.testing.assert_allclose(np.diag(cell.pi), brute_pmf(np.array(f)), atol=1e-15)
    assert np.abs(cell.pi - np.diag(np.diag(cell.pi))).max() == 0.0
    assert m_value("psi", cell) == 0.0


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.label())
def test_grid_margins_and_identities(spec):
    rng = np.random.default_rng(0)
    for _ in range(50):
        L = rng.integers(2, 7)
        f1, f0 = (f[0] for f in random_margins(rng, 1, L))
        cell = cell_grid(f1, f0, spec)
        assert cell.pi.min() >= 0.0 and abs(cell.pi.sum() - 1.0) < 1e-12
        np.testing.assert_allclose(cell.pi.sum(axis=1), brute_pmf(f1), atol=1e-10)
        np.testing.assert_allclose(cell.pi.sum(axis=0), brute_pmf(f0), atol=1e-10)
        psi, phi, xi = (m_value(e, cell) for e in "psi phi xi".split())
        assert phi - psi == pytest.approx(np.trace(cell.pi), abs=1e-13)
        assert xi == pytest.approx(psi + phi - 1.0, abs=1e-15)
        # the vectorised path agrees with the grid sums
        for est, val in (("psi", psi), ("phi", phi)):
            assert m_matrix(est, f1[None], f0[None], spec)[0] == pytest.approx(val, abs=1e-12)


def test_cell_grid_rejects_bad_margins():
    with pytest.raises(InconsistentMargins):
        cell_grid([0.5, 0.3], [0.2, 0.4], CopulaSpec(Family.INDEPENDENCE))
    with pytest.raises(InconsistentMargins):
        cell_grid([0.5, 1.3], [0.2, 0.4], CopulaSpec(Family.INDEPENDENCE))


# --- Delta coefficients ------------------------------------------------------


def test_delta_independence_closed_form():
    f1, f0 = np.array([0.1, 0.45, 0.8]), np.array([0.3, 0.6, 0.7])
    d1, d0 = delta_coeffs("psi", f1, f0, CopulaSpec(Family.INDEPENDENCE))
    np.testing.assert_allclose(d1, -brute_pmf(f0)[:-1], atol=1e-15)
    np.testing.assert_allclose(d0, brute_pmf(f1)[1:], atol=1e-15)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.label())
@pytest.mark.parametrize("estimand", ["psi", "phi", "xi"])
def test_delta_finite_difference(spec, estimand):
    rng = np.random.default_rng(1)
    L = 5
    f1, f0 = random_margins(rng, 200, L, 0.05, 0.95)
    # keep a margin gap so +-h perturbations stay monotone
    f1 = f1 + np.arange(L - 1) * 1e-3
    f0 = f0 + np.arange(L - 1) * 1e-3
    d1, d0 = delta_matrix(estimand, f1, f0, spec)
    h = 1e-5
    for k in range(L - 1):
        for arm, d in ((1, d1), (0, d0)):
            up1, dn1, up0, dn0 = f1.copy(), f1.copy(), f0.copy(), f0.copy()
            if arm == 1:
                up1[:, k] += h
                dn1[:, k] -= h
            else:
                up0[:, k] += h
                dn0[:, k] -= h
            fd = (m_matrix(estimand, up1, up0, spec) - m_matrix(estimand, dn1, dn0, spec)) / (2 * h)
            scale = np.maximum(np.abs(d[:, k]), 1e-3)
            assert np.max(np.abs(fd - d[:, k]) / scale) < 1e-4


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.label())
def test_delta_signs(spec):
    rng = np.random.default_rng(2)
    f1, f0 = random_margins(rng, 1000, 5)
    d1, d0 = delta_matrix("psi", f1, f0, spec)
    assert d1.max() <= 1e-15 and d0.min() >= -1e-15
    e1, e0 = delta_matrix("phi", f1, f0, spec)
    assert e1.max() <= 1e-15 and e0.min() >= -1e-15


def test_delta_rejects_frechet():
    with pytest.raises(UnsupportedCopula):
        delta_coeffs("psi", [0.3], [0.4], CopulaSpec(Family.FRECHET_UPPER))


# --- estimators ----------------------------------------------------------------


@pytest.fixture(scope="module")
def fitted():
    d = sim.generate(sim.baseline_spec(n=800), 17).data
    return d, fit_nuisance(d)


@pytest.mark.parametrize("mode", ["one_step", "cross_fit", "unconditional_dr"])
def test_xi_identity_and_centering(fitted, mode):
    d, full = fitted
    fit = fit_crossfit(d, K=5, seed=3) if mode == "cross_fit" else full
    spec = CopulaSpec(Family.GUMBEL, 2.0)
    if mode == "unconditional_dr":
        res = {e: unconditional_dr(d, fit, spec, e) for e in ("psi", "phi", "xi")}
    else:
        res = {e: one_step(d, fit, spec, e, mode=Mode.parse(mode)) for e in ("psi", "phi", "xi")}
    assert res["xi"].raw_point == res["psi"].raw_point + res["phi"].raw_point - 1.0
    for r in res.values():
        assert abs(np.mean(r.if_values)) < 1e-12
        assert r.se == pytest.approx(np.std(r.if_values) / math.sqrt(d.n), rel=1e-12)
        assert r.ci_low < r.raw_point < r.ci_high
        assert r.mode.value == mode


def test_randomized_independence_closed_form():
    rng = np.random.default_rng(5)
    n = 4000
    a = rng.integers(0, 2, n)
    y = np.where(a == 1, rng.choice(4, n, p=[0.1, 0.2, 0.3, 0.4]), rng.choice(4, n, p=[0.3, 0.3, 0.2, 0.2]))
    x = rng.normal(size=(n, 2))
    d = Dataset(y, a, x, 4)
    model = ParametricNuisance(ConstantPropensity(0.5), ProportionalOdds())
    fit = fit_nuisance(d, model)
    res = one_step(d, fit, CopulaSpec(Family.INDEPENDENCE), "psi")
    p1 = np.bincount(y[a == 1], minlength=4) / np.sum(a == 1)
    F0 = np.cumsum(np.bincount(y[a == 0], minlength=4)) / np.sum(a == 0)
    want = sum(p1[k] * F0[k - 1] for k in range(1, 4))
    assert abs(res.point - want) < 3 * res.se


def test_true_nuisances_recover_truth():
    spec = sim.baseline_spec(n=100_000)
    d = sim.generate(spec, 99).data
    fit = predict_nuisance(spec.known_nuisance(), d)
    res = one_step(d, fit, CopulaSpec(Family.GUMBEL, 2.0), "psi")
    assert abs(res.point - 0.370) < 0.01


def test_cross_fit_k_invariance_and_determinism():
    d = sim.generate(sim.baseline_spec(n=5000), 8).data
    spec = CopulaSpec(Family.GUMBEL, 2.0)
    r2 = cross_fit(d, spec, "psi", K=2, seed=1)
    r10 = cross_fit(d, spec, "psi", K=10, seed=1)
    assert abs(r2.point - r10.point) < 2 * max(r2.se, r10.se)
    again = cross_fit(d, spec, "psi", K=10, seed=1)
    assert again.raw_point == r10.raw_point and again.se == r10.se


def test_dr_margins_collapse_to_ipw():
    rng = np.random.default_rng(3)
    n = 200
    a = rng.integers(0, 2, n)
    y = rng.integers(0, 2, n)
    d = Dataset(y, a, np.zeros((n, 0)), 2)
    model = ParametricNuisance(ConstantPropensity(0.4), ProportionalOdds(per_arm=True))
    fit = fit_nuisance(d, model)
    F1, F0, _, _ = dr_margins(d, fit)
    ind = (y == 0).astype(float)
    # normalised inverse-probability weighting
    assert F1[0] == pytest.approx(np.sum(a * ind / 0.4) / np.sum(a / 0.4), abs=1e-12)
    assert F0[0] == pytest.approx(np.sum((1 - a) * ind / 0.6) / np.sum((1 - a) / 0.6), abs=1e-12)


def test_clipped_point_keeps_raw():
    # every treated unit at the bottom level and every control at the top:
    # each score is 0.25 - 0.5, so the raw estimate is -0.25
    y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    a = np.array([1, 1, 1, 1, 0, 0, 0, 0])
    d = Dataset(y, a, np.zeros((8, 0)), 2)
    from ordinal_causal.nuisance import KnownNuisance

    known = KnownNuisance(lambda x: np.full(len(x), 0.5),
                          lambda x: (np.full((len(x), 1), 0.5), np.full((len(x), 1), 0.5)))
    res = one_step(d, predict_nuisance(known, d), CopulaSpec(Family.INDEPENDENCE), "psi")
    assert res.raw_point == pytest.approx(-0.25, abs=1e-15) and res.point == 0.0
    assert res.se == 0.0 and res.ci_low == res.raw_point == res.ci_high


# --- envelope -------------------------------------------------------------------


def lp_extremes(pmf1, pmf0, estimand):
    L = len(pmf1)
    c = np.zeros((L, L))
    for k, j in itertools.product(range(L), range(L)):
        c[k, j] = {"psi": float(k > j), "phi": float(k >= j), "xi": float(np.sign(k - j))}[estimand]
    a_eq, b_eq = [], []
    for k in range(L):
        row = np.zeros((L, L))
        row[k, :] = 1
        a_eq.append(row.ravel())
        b_eq.append(pmf1[k])
        col = np.zeros((L, L))
        col[:, k] = 1
        a_eq.append(col.ravel())
        b_eq.append(pmf0[k])
    lo = linprog(c.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs").fun
    hi = -linprog(-c.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs").fun
    return lo, hi


@pytest.mark.parametrize("estimand", ["psi", "phi", "xi"])
def test_coupling_bounds_match_lp(estimand):
    rng = np.random.default_rng(4)
    for L in (2, 3, 5):
        f1, f0 = random_margins(rng, 40, L, 0.0, 1.0)
        lo, hi = coupling_bounds(estimand, f1, f0)
        for i in range(40):
            want = lp_extremes(brute_pmf(f1[i]), brute_pmf(f0[i]), estimand)
            assert lo[i] == pytest.approx(want[0], abs=1e-9)
            assert hi[i] == pytest.approx(want[1], abs=1e-9)


def test_l2_upper_bound_closed_form():
    rng = np.random.default_rng(6)
    f1, f0 = random_margins(rng, 100, 2, 0.0, 1.0)
    lo, hi = coupling_bounds("psi", f1, f0)
    np.testing.assert_allclose(hi, np.minimum(1 - f1[:, 0], f0[:, 0]), atol=1e-15)
    np.testing.assert_allclose(lo, np.maximum(0.0, f0[:, 0] - f1[:, 0]), atol=1e-15)


def test_identical_margins_lower_psi_zero(fitted):
    d, fit = fitted
    from ordinal_causal.nuisance import NuisanceFit

    same = NuisanceFit(fit.e, fit.f0, fit.f0)
    assert frechet_envelope(d, same, "psi")[0] == 0.0


@pytest.mark.parametrize("estimand", ["psi", "phi", "xi"])
def test_envelope_contains_copula_values(fitted, estimand):
    d, fit = fitted
    env_lo, env_hi = frechet_envelope(d, fit, estimand)
    lo_u, hi_u = coupling_bounds(estimand, fit.f1, fit.f0)
    for fam in DIFFERENTIABLE_FAMILIES + (Family.FRECHET_LOWER, Family.FRECHET_UPPER):
        taus = {Family.FRECHET_LOWER: [-1.0], Family.FRECHET_UPPER: [1.0]}.get(fam, np.linspace(0, 0.9, 10))
        for t in taus:
            spec = CopulaSpec.from_tau(fam, t)
            m = m_matrix(estimand, fit.f1, fit.f0, spec)
            assert np.all(m >= lo_u - 1e-12) and np.all(m <= hi_u + 1e-12)
            if fam.differentiable:
                r = one_step(d, fit, spec, estimand)
                assert env_lo - 1e-8 <= r.point <= env_hi + 1e-8
    assert plugin_mean(estimand, fit.f1, fit.f0, CopulaSpec(Family.INDEPENDENCE)) <= env_hi


def test_gumbel_truth_curve_nonincreasing():
    spec = sim.baseline_spec()
    vals = [sim.population_value(spec, "psi", CopulaSpec.from_tau(Family.GUMBEL, t), order=8)
            for t in np.linspace(0, 0.9, 10)]
    assert np.all(np.diff(vals) <= 1e-12)


def test_cell_grid_negative_mass_raises():
    from ordinal_causal import estimands

    class Broken:
        family = Family.INDEPENDENCE

    with pytest.raises((NumericalError, TypeError)):
        estimands.cell_grid([0.3], [0.4], Broken())

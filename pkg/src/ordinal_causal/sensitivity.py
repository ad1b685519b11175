"""Sensitivity analysis over the copula parameter and over hidden confounding.

Two axes are covered. A :class:`SensitivityCurve` re-evaluates an estimator
along a grid of Kendall's tau values with the nuisances held fixed. The
Rosenbaum-type analysis bounds the counterfactual conditional margins given
an odds-ratio bound Gamma and estimates both endpoints of the resulting
interval with their own influence functions.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import copula
from .copula import CopulaSpec, Family
from .errors import InvalidGamma, UnsupportedTau
from .estimands import (
    Estimand,
    EstimateResult,
    Mode,
    combine_xi,
    delta_matrix,
    frechet_envelope,
    m_matrix,
    one_step,
    result_from_scores,
    scores,
    unconditional_dr,
)

DEFAULT_GAMMA_GRID = tuple(np.round(np.arange(1.0, 3.0 + 1e-9, 0.1), 10))


def _check_gamma(gamma):
    gamma = float(gamma)
    if not (math.isfinite(gamma) and gamma >= 1.0):
        raise InvalidGamma(f"Gamma must be a finite number >= 1, got {gamma}")
    return gamma


def r_gamma(p, gamma):
    """Sharp bounds (r-, r+) on a counterfactual CDF value given its observed counterpart p."""
    gamma = _check_gamma(gamma)
    p = np.asarray(p, dtype=float)
    if gamma == 1.0:
        return p, p
    r_minus = p / (p + gamma * (1.0 - p))
    r_plus = gamma * p / (gamma * p + 1.0 - p)
    return r_minus, r_plus


def r_gamma_deriv(p, gamma):
    """Derivatives of (r-, r+) with respect to p."""
    gamma = _check_gamma(gamma)
    p = np.asarray(p, dtype=float)
    if gamma == 1.0:
        one = np.ones_like(p)
        return one, one
    d_minus = gamma / (gamma - (gamma - 1.0) * p) ** 2
    d_plus = gamma / (1.0 + (gamma - 1.0) * p) ** 2
    return d_minus, d_plus


def g_transform(arm, sign, e, p, gamma):
    """Endpoint margin G and its partials (dG/de, dG/dp).

    ``arm`` is 1 or 0, ``sign`` is +1 or -1, ``e`` broadcasts against ``p``.
    """
    gamma = _check_gamma(gamma)
    p = np.asarray(p, dtype=float)
    e = np.asarray(e, dtype=float)
    if gamma == 1.0:
        # identity transform; kept exact so Gamma = 1 reproduces the point estimate
        zero = np.zeros(np.broadcast_shapes(e.shape, p.shape))
        return np.broadcast_to(p, zero.shape), zero, zero + 1.0
    r_minus, r_plus = r_gamma(p, gamma)
    d_minus, d_plus = r_gamma_deriv(p, gamma)
    r, rd = (r_plus, d_plus) if sign > 0 else (r_minus, d_minus)
    if arm == 1:
        return e * p + (1.0 - e) * r, p - r, e + (1.0 - e) * rd
    return (1.0 - e) * p + e * r, r - p, 1.0 - e + e * rd


@dataclass(frozen=True, eq=False)
class MarginBounds:
    f1_minus: np.ndarray
    f1_plus: np.ndarray
    f0_minus: np.ndarray
    f0_plus: np.ndarray
    gamma: float


def margin_bounds(fit, gamma):
    """Bounds on the causal margins F_a(k|X_i) implied by Gamma."""
    gamma = _check_gamma(gamma)
    e = fit.e[:, None]
    return MarginBounds(
        f1_minus=g_transform(1, -1, e, fit.f1, gamma)[0],
        f1_plus=g_transform(1, +1, e, fit.f1, gamma)[0],
        f0_minus=g_transform(0, -1, e, fit.f0, gamma)[0],
        f0_plus=g_transform(0, +1, e, fit.f0, gamma)[0],
        gamma=gamma,
    )


def endpoint_m(estimand, bounds, spec):
    """Per-unit (m-, m+): m is decreasing in the treated and increasing in the control margins."""
    estimand = Estimand.parse(estimand)
    lower = m_matrix(estimand, bounds.f1_plus, bounds.f0_minus, spec)
    upper = m_matrix(estimand, bounds.f1_minus, bounds.f0_plus, spec)
    return lower, upper


def endpoint_coefficients(estimand, e, p1, p0, spec, gamma, side):
    """Return (m, H, W1, W0) for the lower (side=-1) or upper (side=+1) endpoint.

    ``e`` is a length-n vector, ``p1``/``p0`` the observed conditional CDFs.
    """
    estimand = Estimand.parse(estimand)
    e = np.asarray(e, dtype=float)[:, None]
    s1, s0 = (-1, +1) if side > 0 else (+1, -1)
    g1, g1_e, g1_p = g_transform(1, s1, e, p1, gamma)
    g0, g0_e, g0_p = g_transform(0, s0, e, p0, gamma)
    m = m_matrix(estimand, g1, g0, spec)
    d1, d0 = delta_matrix(estimand, g1, g0, spec)
    h = np.sum(d1 * g1_e, axis=1) + np.sum(d0 * g0_e, axis=1)
    return m, h, d1 * g1_p, d0 * g0_p


@dataclass(frozen=True, eq=False)
class GammaBoundResult:
    gamma: float
    tau: float
    lower: EstimateResult
    upper: EstimateResult

    def union_interval(self):
        return self.lower.ci_low, self.upper.ci_high

    def to_dict(self):
        return {
            "gamma": self.gamma,
            "tau": self.tau,
            "lower": self.lower.raw_point,
            "lower_se": self.lower.se,
            "lower_ci_low": self.lower.ci_low,
            "lower_ci_high": self.lower.ci_high,
            "upper": self.upper.raw_point,
            "upper_se": self.upper.se,
            "upper_ci_low": self.upper.ci_low,
            "upper_ci_high": self.upper.ci_high,
        }


def endpoint_one_step(data, fit, spec, gamma, estimand="psi", alpha=0.05, mode=Mode.ONE_STEP):
    """One-step estimates of both endpoints of the Gamma-identified interval."""
    estimand = Estimand.parse(estimand)
    gamma = _check_gamma(gamma)
    copula.require_differentiable(spec)
    if estimand is Estimand.XI:
        psi = endpoint_one_step(data, fit, spec, gamma, Estimand.PSI, alpha, mode)
        phi = endpoint_one_step(data, fit, spec, gamma, Estimand.PHI, alpha, mode)
        return GammaBoundResult(
            gamma, psi.tau, combine_xi(psi.lower, phi.lower), combine_xi(psi.upper, phi.upper)
        )
    ends = []
    for side in (-1, +1):
        m, h, w1, w0 = endpoint_coefficients(estimand, fit.e, fit.f1, fit.f0, spec, gamma, side)
        values = scores(data, fit.e, fit.f1, fit.f0, m, w1, w0, h)
        ends.append(result_from_scores(estimand, spec, values, mode, alpha))
    return GammaBoundResult(gamma, _tau_of(spec), ends[0], ends[1])


def _tau_of(spec):
    return None if np.ndim(spec.rho) else float(spec.tau)


def gamma_table(data, fit, spec, gammas=DEFAULT_GAMMA_GRID, estimand="psi", alpha=0.05,
                mode=Mode.ONE_STEP):
    return [endpoint_one_step(data, fit, spec, g, estimand, alpha, mode) for g in gammas]


# --- breakeven Gamma -------------------------------------------------------


@dataclass(frozen=True)
class BreakevenResult:
    """Largest Gamma whose union interval still excludes the null value.

    ``not_identified_at_one`` flags a baseline interval that already covers the
    null (gamma_star is then 1); ``capped`` flags an interval that still
    excludes the null at ``gamma_max``.
    """

    gamma_star: float
    not_identified_at_one: bool = False
    capped: bool = False
    tau: float = None


def _excludes(data, fit, spec, gamma, estimand, null_value, alpha, mode):
    res = endpoint_one_step(data, fit, spec, gamma, estimand, alpha, mode)
    lo, hi = res.union_interval()
    return not (lo <= null_value <= hi)


def breakeven_gamma(data, fit, spec, estimand="psi", null_value=0.5, gamma_max=10.0, tol=1e-3,
                    alpha=0.05, mode=Mode.ONE_STEP):
    """Bisection for the breakeven Gamma; the union interval is assumed to widen with Gamma."""
    gamma_max = _check_gamma(gamma_max)
    tau = _tau_of(spec)
    args = (estimand, null_value, alpha, mode)
    if not _excludes(data, fit, spec, 1.0, *args):
        return BreakevenResult(1.0, not_identified_at_one=True, tau=tau)
    if _excludes(data, fit, spec, gamma_max, *args):
        return BreakevenResult(gamma_max, capped=True, tau=tau)
    lo, hi = 1.0, gamma_max
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _excludes(data, fit, spec, mid, *args):
            lo = mid
        else:
            hi = mid
    return BreakevenResult(lo, tau=tau)


def breakeven_over_taus(data, fit, family, taus, estimand="psi", null_value=0.5, gamma_max=10.0,
                        tol=1e-3, alpha=0.05, mode=Mode.ONE_STEP):
    """Per-tau breakeven values and their minimum (the curve-level robustness value)."""
    grid = TauGrid(family, taus)
    results = [
        breakeven_gamma(data, fit, spec, estimand, null_value, gamma_max, tol, alpha, mode)
        for spec in grid.specs()
    ]
    return min(r.gamma_star for r in results), results


# --- tau curves ------------------------------------------------------------


@dataclass(frozen=True)
class TauGrid:
    family: Family
    taus: tuple

    def __post_init__(self):
        family = Family.parse(self.family)
        taus = tuple(float(t) for t in np.atleast_1d(self.taus))
        if not taus:
            raise ValueError("empty tau grid")
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValueError("tau grid must be strictly increasing")
        for i, t in enumerate(taus):
            try:
                copula.tau_to_rho(family, t)
            except UnsupportedTau as exc:
                raise UnsupportedTau(f"grid point {i} (tau={t}): {exc}") from None
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "taus", taus)

    def specs(self):
        return [CopulaSpec.from_tau(self.family, t) for t in self.taus]


@dataclass(frozen=True, eq=False)
class SensitivityCurve:
    grid: TauGrid
    estimates: list = field(repr=False)
    envelope: tuple

    def rows(self):
        env_lo, env_hi = self.envelope
        return [
            {
                "tau": t,
                "point": r.point,
                "se": r.se,
                "ci_low": r.ci_low,
                "ci_high": r.ci_high,
                "env_low": env_lo,
                "env_high": env_hi,
            }
            for t, r in zip(self.grid.taus, self.estimates)
        ]


def tau_curve(data, fit, family, taus, estimand="psi", alpha=0.05, mode=Mode.ONE_STEP):
    """Estimates along a tau grid, all sharing the same nuisance fit."""
    grid = TauGrid(family, taus)
    mode = Mode.parse(mode)
    estimates = []
    for spec in grid.specs():
        if mode is Mode.UNCONDITIONAL_DR:
            estimates.append(unconditional_dr(data, fit, spec, estimand, alpha))
        else:
            estimates.append(one_step(data, fit, spec, estimand, alpha, mode))
    return SensitivityCurve(grid, estimates, frechet_envelope(data, fit, estimand))

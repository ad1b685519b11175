"""Copula-identified ordinal estimands and their influence-function estimators.

Margins are passed around as n x (L-1) matrices whose column k holds
F_a(k | X_i) for k = 0..L-2; the conventions F(-1) = 0 and F(L-1) = 1 are
added internally.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
import math

import numpy as np
from scipy.stats import norm

from . import copula
from .copula import CopulaSpec, Family
from .errors import InconsistentMargins, NumericalError
from .nuisance import DEFAULT_EPS_F, DEFAULT_FOLDS, DEFAULT_TRIM, ParametricNuisance, fit_crossfit

PI_FLOOR = 1e-12
PI_RENORM = 1e-8


class Estimand(Enum):
    PSI = "psi"
    PHI = "phi"
    XI = "xi"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown estimand {value!r} (expected psi, phi or xi)") from None

    @property
    def bounds(self):
        return (-1.0, 1.0) if self is Estimand.XI else (0.0, 1.0)


class Mode(Enum):
    ONE_STEP = "one_step"
    CROSS_FIT = "cross_fit"
    UNCONDITIONAL_DR = "unconditional_dr"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower().replace("-", "_"))
        except ValueError:
            raise ValueError(f"unknown estimator mode {value!r}") from None


@dataclass(frozen=True, eq=False)
class EstimateResult:
    """Point estimate with influence-function inference.

    ``point`` is clipped to the estimand's range; ``raw_point`` is the
    unclipped value the confidence interval is centred on.
    """

    estimand: Estimand
    copula: CopulaSpec
    point: float
    raw_point: float
    se: float
    ci_low: float
    ci_high: float
    if_values: np.ndarray = field(repr=False)
    mode: Mode = Mode.ONE_STEP
    alpha: float = 0.05

    def to_dict(self):
        return {
            "estimand": self.estimand.value,
            "mode": self.mode.value,
            "copula": self.copula.family.value,
            "rho": None if np.ndim(self.copula.rho) else float(self.copula.rho),
            "tau": _safe_tau(self.copula),
            "point": self.point,
            "raw_point": self.raw_point,
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "alpha": self.alpha,
            "n": int(self.if_values.shape[0]),
        }


def _safe_tau(spec):
    if np.ndim(spec.rho):
        return None
    return float(spec.tau)


@dataclass(frozen=True, eq=False)
class CellGrid:
    """L x L joint pmf; pi[k, j] = pr{Y(1) = k, Y(0) = j | x}."""

    pi: np.ndarray

    @property
    def L(self):
        return self.pi.shape[0]


# --- vectorised building blocks --------------------------------------------


def _pad(f):
    n = f.shape[0]
    return np.hstack([np.zeros((n, 1)), f, np.ones((n, 1))])


def _column_spec(spec):
    # a per-unit rho vector must broadcast against n x L grids
    if np.ndim(spec.rho) == 1:
        return replace(spec, rho=np.asarray(spec.rho)[:, None])
    return spec


def m_matrix(estimand, f1, f0, spec):
    """Per-unit m(X_i) for margin matrices f1, f0 (n x (L-1))."""
    estimand = Estimand.parse(estimand)
    if estimand is Estimand.XI:
        return m_matrix(Estimand.PSI, f1, f0, spec) + m_matrix(Estimand.PHI, f1, f0, spec) - 1.0
    spec = _column_spec(spec)
    p1, p0 = _pad(np.asarray(f1, float)), _pad(np.asarray(f0, float))
    if estimand is Estimand.PSI:
        terms = copula.cdf(spec, p1[:, 1:], p0[:, :-1]) - copula.cdf(spec, p1[:, :-1], p0[:, :-1])
    else:
        terms = copula.cdf(spec, p1[:, 1:], p0[:, 1:]) - copula.cdf(spec, p1[:, :-1], p0[:, 1:])
    return np.sum(terms, axis=1)


def delta_matrix(estimand, f1, f0, spec):
    """Partial derivatives of m with respect to F_1(k|x) and F_0(k|x), k = 0..L-2."""
    estimand = Estimand.parse(estimand)
    copula.require_differentiable(spec)
    if estimand is Estimand.XI:
        a1, a0 = delta_matrix(Estimand.PSI, f1, f0, spec)
        b1, b0 = delta_matrix(Estimand.PHI, f1, f0, spec)
        return a1 + b1, a0 + b0
    spec = _column_spec(spec)
    p1, p0 = _pad(np.asarray(f1, float)), _pad(np.asarray(f0, float))
    f1_prev, f1_k, f1_next = p1[:, :-2], p1[:, 1:-1], p1[:, 2:]
    f0_prev, f0_k, f0_next = p0[:, :-2], p0[:, 1:-1], p0[:, 2:]
    du, dv = copula.partial_u, copula.partial_v
    if estimand is Estimand.PSI:
        d1 = du(spec, f1_k, f0_prev) - du(spec, f1_k, f0_k)
        d0 = dv(spec, f1_next, f0_k) - dv(spec, f1_k, f0_k)
    else:
        d1 = du(spec, f1_k, f0_k) - du(spec, f1_k, f0_next)
        d0 = dv(spec, f1_k, f0_k) - dv(spec, f1_prev, f0_k)
    return d1, d0


def _as_row(f):
    f = np.asarray(f, dtype=float)
    return f.reshape(1, -1)


def _check_monotone(*rows):
    for row in rows:
        if np.any(np.diff(row) < -1e-12) or np.any(row < 0.0) or np.any(row > 1.0):
            raise InconsistentMargins("margins must be nondecreasing in k and lie in [0, 1]")


# --- single-unit API -------------------------------------------------------


def cell_grid(f1_row, f0_row, spec):
    """Joint pmf of (Y(1), Y(0)) implied by two margins and a copula."""
    f1_row, f0_row = np.asarray(f1_row, float), np.asarray(f0_row, float)
    _check_monotone(f1_row, f0_row)
    p1 = _pad(_as_row(f1_row))[0]
    p0 = _pad(_as_row(f0_row))[0]
    grid = copula.cdf(spec, p1[:, None], p0[None, :])
    pi = grid[1:, 1:] - grid[:-1, 1:] - grid[1:, :-1] + grid[:-1, :-1]
    if pi.min() < -PI_FLOOR:
        raise NumericalError(f"cell probability {pi.min():.3g} below the round-off floor")
    pi = np.maximum(pi, 0.0)
    total = pi.sum()
    if abs(total - 1.0) > PI_RENORM:
        raise NumericalError(f"cell probabilities sum to {total!r}")
    return CellGrid(pi / total)


def m_value(estimand, cell):
    estimand = Estimand.parse(estimand)
    pi = cell.pi
    if estimand is Estimand.PSI:
        return float(np.tril(pi, -1).sum())
    if estimand is Estimand.PHI:
        return float(np.tril(pi).sum())
    return float(np.tril(pi, -1).sum() + np.tril(pi).sum() - 1.0)


def delta_coeffs(estimand, f1_row, f0_row, spec):
    """Return (Delta_1k, Delta_0k) for k = 0..L-2 at a single covariate value."""
    d1, d0 = delta_matrix(estimand, _as_row(f1_row), _as_row(f0_row), spec)
    return d1[0], d0[0]


# --- estimators ------------------------------------------------------------


def scores(data, e, f1, f0, m, w1, w0, h=None):
    """Per-unit uncentred scores m + h (A - e) + sum_a w_a sum_k W_ak {1(Y<=k) - F_a(k|X)}.

    ``w1``, ``w0`` are the coefficient matrices multiplying the outcome
    residuals; the one-step estimator uses h = 0 and W = Delta.
    """
    ind = data.indicators()
    a = data.a.astype(float)
    corr1 = np.sum(w1 * (ind - f1), axis=1)
    corr0 = np.sum(w0 * (ind - f0), axis=1)
    if h is None:
        h = np.zeros_like(e)
    return m + h * (a - e) + a / e * corr1 + (1.0 - a) / (1.0 - e) * corr0


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def result_from_scores(estimand, spec, values, mode, alpha, raw=None):
    """Mean of the scores as the estimate, centred scores as influence values."""
    _check_alpha(alpha)
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if raw is None:
        raw = math.fsum(values) / n
    if_values = values - raw
    return _build(estimand, spec, raw, if_values, mode, alpha)


def _build(estimand, spec, raw, if_values, mode, alpha):
    n = if_values.shape[0]
    if not np.all(np.isfinite(if_values)) or not math.isfinite(raw):
        raise NumericalError("non-finite influence values")
    se = math.sqrt(math.fsum(if_values * if_values) / n / n)
    z = float(norm.ppf(1.0 - alpha / 2.0))
    lo, hi = Estimand.parse(estimand).bounds
    if_values.setflags(write=False)
    return EstimateResult(
        estimand=Estimand.parse(estimand),
        copula=spec,
        point=float(min(max(raw, lo), hi)),
        raw_point=float(raw),
        se=se,
        ci_low=float(raw - z * se),
        ci_high=float(raw + z * se),
        if_values=if_values,
        mode=mode,
        alpha=alpha,
    )


def combine_xi(psi_res, phi_res):
    """xi = psi + phi - 1 with summed influence values."""
    raw = psi_res.raw_point + phi_res.raw_point - 1.0
    ifv = psi_res.if_values + phi_res.if_values
    return _build(Estimand.XI, psi_res.copula, raw, ifv, psi_res.mode, psi_res.alpha)


def one_step(data, fit, spec, estimand="psi", alpha=0.05, mode=Mode.ONE_STEP):
    """Efficient one-step estimate from (possibly out-of-fold) nuisances."""
    estimand = Estimand.parse(estimand)
    copula.require_differentiable(spec)
    if estimand is Estimand.XI:
        return combine_xi(
            one_step(data, fit, spec, Estimand.PSI, alpha, mode),
            one_step(data, fit, spec, Estimand.PHI, alpha, mode),
        )
    m = m_matrix(estimand, fit.f1, fit.f0, spec)
    d1, d0 = delta_matrix(estimand, fit.f1, fit.f0, spec)
    return result_from_scores(estimand, spec, scores(data, fit.e, fit.f1, fit.f0, m, d1, d0), mode, alpha)


def cross_fit(data, spec, estimand="psi", K=DEFAULT_FOLDS, seed=0, alpha=0.05,
              model_factory=ParametricNuisance, trim=DEFAULT_TRIM, eps_f=DEFAULT_EPS_F, fit=None):
    """Cross-fitted one-step estimate; pass ``fit`` to reuse out-of-fold nuisances."""
    if fit is None:
        fit = fit_crossfit(data, K, seed, model_factory, trim, eps_f)
    return one_step(data, fit, spec, estimand, alpha, mode=Mode.CROSS_FIT)


def dr_margins(data, fit):
    """Augmented IPW estimates of the unconditional margins and the per-unit augmented terms."""
    ind = data.indicators()
    a = data.a.astype(float)[:, None]
    e = fit.e[:, None]
    aug1 = fit.f1 + a / e * (ind - fit.f1)
    aug0 = fit.f0 + (1.0 - a) / (1.0 - e) * (ind - fit.f0)
    out = []
    for aug in (aug1, aug0):
        mean = np.array([math.fsum(col) for col in aug.T]) / data.n
        out.append(np.maximum.accumulate(np.clip(mean, 0.0, 1.0)))
    return out[0], out[1], aug1, aug0


def unconditional_dr(data, fit, spec, estimand="psi", alpha=0.05):
    """Doubly robust estimator under a single copula for the unconditional margins."""
    estimand = Estimand.parse(estimand)
    copula.require_differentiable(spec)
    if estimand is Estimand.XI:
        return combine_xi(
            unconditional_dr(data, fit, spec, Estimand.PSI, alpha),
            unconditional_dr(data, fit, spec, Estimand.PHI, alpha),
        )
    F1, F0, aug1, aug0 = dr_margins(data, fit)
    raw = float(m_matrix(estimand, F1[None, :], F0[None, :], spec)[0])
    d1, d0 = delta_matrix(estimand, F1[None, :], F0[None, :], spec)
    infl = (aug1 - F1) @ d1[0] + (aug0 - F0) @ d0[0]
    # clipping of the margins can leave a tiny nonzero mean; remove it
    infl = infl - math.fsum(infl) / data.n
    return _build(estimand, spec, raw, infl, Mode.UNCONDITIONAL_DR, alpha)


def plugin_mean(estimand, f1, f0, spec, weights=None):
    """Weighted average of m(X) over units (no influence correction)."""
    m = m_matrix(estimand, f1, f0, spec)
    if weights is None:
        return math.fsum(m) / m.shape[0]
    w = np.asarray(weights, dtype=float)
    return math.fsum(w * m) / math.fsum(w)


def coupling_bounds(estimand, f1, f0):
    """Per-unit extremes of m over every coupling of the two margins.

    For psi and phi the extremes have closed forms (a single cut point k
    separates the arms); for xi each unit solves a small transport linear
    program. The comonotone and countermonotone values always lie inside.
    """
    estimand = Estimand.parse(estimand)
    p1, p0 = _pad(np.asarray(f1, float)), _pad(np.asarray(f0, float))
    f1_k, f0_k = p1[:, 1:], p0[:, 1:]
    f1_prev, f0_prev = p1[:, :-1], p0[:, :-1]
    if estimand is Estimand.PSI:
        lo = np.max(f0_k - f1_k, axis=1)
        hi = 1.0 - np.max(f1_k - f0_prev, axis=1)
    elif estimand is Estimand.PHI:
        lo = np.max(f0_k - f1_prev, axis=1)
        hi = 1.0 - np.max(f1_k - f0_k, axis=1)
    else:
        return _xi_bounds(p1, p0)
    return np.maximum(lo, 0.0), np.minimum(hi, 1.0)


def _xi_bounds(p1, p0):
    from scipy.optimize import linprog

    L = p1.shape[1] - 1
    cost = np.sign(np.subtract.outer(np.arange(L), np.arange(L))).astype(float).ravel()
    rows = [np.kron(np.eye(L)[k], np.ones(L)) for k in range(L)]
    rows += [np.kron(np.ones(L), np.eye(L)[j]) for j in range(L - 1)]
    a_eq = np.array(rows)
    pmf1, pmf0 = np.diff(p1, axis=1), np.diff(p0, axis=1)
    lo = np.empty(p1.shape[0])
    hi = np.empty(p1.shape[0])
    seen = {}
    for i in range(p1.shape[0]):
        key = (pmf1[i].tobytes(), pmf0[i].tobytes())
        if key not in seen:
            b_eq = np.concatenate([pmf1[i], pmf0[i][:-1]])
            out = []
            for sense in (1.0, -1.0):
                res = linprog(sense * cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
                if res.status != 0:
                    raise NumericalError(f"coupling bound program failed: {res.message}")
                out.append(sense * res.fun)
            seen[key] = out
        lo[i], hi[i] = seen[key]
    return lo, hi


def frechet_envelope(data, fit, estimand="psi"):
    """Plug-in bounds on the estimand over all dependence structures (copula-free)."""
    if fit.n != data.n:
        raise ValueError("fit and data have different numbers of units")
    lo, hi = coupling_bounds(estimand, fit.f1, fit.f0)
    return math.fsum(lo) / fit.n, math.fsum(hi) / fit.n

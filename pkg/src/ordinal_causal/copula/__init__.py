"""Bivariate copula families used to couple the two potential-outcome margins.

All evaluation functions accept scalars or broadcastable arrays and return a
float for scalar input. The dependence parameter of a :class:`CopulaSpec` may
itself be an array (one value per unit) for covariate-dependent dependence in
the simulation module.
"""

from dataclasses import dataclass
from enum import Enum
import math

import numpy as np
from scipy import integrate

from ..errors import InvalidParameter, UnsupportedCopula, UnsupportedTau
from . import _backend
from ._pykernels import EPS

__all__ = [
    "EPS",
    "CopulaSpec",
    "Family",
    "backend_name",
    "bvn_cdf",
    "cdf",
    "conditional_inverse",
    "partial_u",
    "partial_v",
    "rectangle",
    "rho_to_tau",
    "sample",
    "tau_to_rho",
]


class Family(Enum):
    INDEPENDENCE = "independence"
    GAUSSIAN = "gaussian"
    GUMBEL = "gumbel"
    CLAYTON = "clayton"
    FRANK = "frank"
    FRECHET_LOWER = "frechet_lower"
    FRECHET_UPPER = "frechet_upper"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(f.value for f in cls)
            raise InvalidParameter(f"unknown copula family {value!r} (expected one of {names})") from None

    @property
    def code(self):
        return _CODES[self]

    @property
    def differentiable(self):
        return self not in (Family.FRECHET_LOWER, Family.FRECHET_UPPER)

    @property
    def parametric(self):
        return self in (Family.GAUSSIAN, Family.GUMBEL, Family.CLAYTON, Family.FRANK)


_CODES = {
    Family.INDEPENDENCE: 0,
    Family.GAUSSIAN: 1,
    Family.GUMBEL: 2,
    Family.CLAYTON: 3,
    Family.FRANK: 4,
    Family.FRECHET_LOWER: 5,
    Family.FRECHET_UPPER: 6,
}

DIFFERENTIABLE_FAMILIES = (Family.GAUSSIAN, Family.GUMBEL, Family.CLAYTON, Family.FRANK)


def _check_rho(family, rho):
    r = np.asarray(rho, dtype=float)
    if not np.all(np.isfinite(r)):
        raise InvalidParameter(f"{family.value}: dependence parameter must be finite")
    if family is Family.GAUSSIAN:
        bad = (r <= -1.0) | (r >= 1.0)
        domain = "(-1, 1)"
    elif family is Family.GUMBEL:
        bad = r < 1.0
        domain = "[1, inf)"
    elif family is Family.CLAYTON:
        # rho = 0 is accepted as the independence limit
        bad = r < 0.0
        domain = "[0, inf)"
    else:
        return
    if np.any(bad):
        raise InvalidParameter(f"{family.value}: rho={rho} outside {domain}")


@dataclass(frozen=True)
class CopulaSpec:
    """A copula family together with its dependence parameter.

    ``rho`` is ignored (stored as 0) for the independence and Frechet families.
    """

    family: Family
    rho: float = 0.0

    def __post_init__(self):
        family = Family.parse(self.family)
        object.__setattr__(self, "family", family)
        if not family.parametric:
            object.__setattr__(self, "rho", 0.0)
            return
        rho = self.rho
        if np.ndim(rho) == 0:
            rho = float(rho)
        else:
            rho = np.asarray(rho, dtype=float)
        _check_rho(family, rho)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_tau(cls, family, tau):
        family = Family.parse(family)
        return cls(family, tau_to_rho(family, tau))

    @property
    def tau(self):
        return rho_to_tau(self.family, self.rho)

    def label(self):
        if not self.family.parametric:
            return self.family.value
        if np.ndim(self.rho):
            return f"{self.family.value}(rho=<array>)"
        return f"{self.family.value}(rho={self.rho:.6g})"


def backend_name():
    return _backend.kernels.BACKEND


def _as_spec(spec):
    if isinstance(spec, CopulaSpec):
        return spec
    raise TypeError(f"expected CopulaSpec, got {type(spec).__name__}")


def _check_unit(name, t):
    if np.any(~((t >= 0.0) & (t <= 1.0))):
        raise ValueError(f"{name} must lie in [0, 1]")


def _evaluate(kernel_fn, spec, a, b, kernels=None):
    spec = _as_spec(spec)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_unit("u", a)
    _check_unit("v", b)
    rho = np.asarray(spec.rho, dtype=float)
    shape = np.broadcast_shapes(a.shape, b.shape, rho.shape)
    flat = [
        np.ascontiguousarray(np.broadcast_to(t, shape), dtype=float).ravel()
        for t in (rho, a, b)
    ]
    k = kernels if kernels is not None else _backend.kernels
    out = getattr(k, kernel_fn)(spec.family.code, *flat).reshape(shape)
    if out.ndim == 0:
        return float(out)
    return out


def cdf(spec, u, v, *, kernels=None):
    """Copula C(u, v); exact on the boundary of the unit square."""
    return _evaluate("cdf", spec, u, v, kernels)


def partial_u(spec, u, v, *, kernels=None):
    """dC/du at (u, v) (the conditional law of V given U = u)."""
    return _evaluate("h_func", spec, u, v, kernels)


def partial_v(spec, u, v, *, kernels=None):
    """dC/dv at (u, v).

    Every supported family is exchangeable, so this is ``partial_u`` with the
    arguments swapped.
    """
    return _evaluate("h_func", spec, v, u, kernels)


def rectangle(spec, u_hi, u_lo, v_hi, v_lo, *, floor=True, kernels=None):
    """Copula mass of [u_lo, u_hi] x [v_lo, v_hi]."""
    mass = (
        np.asarray(cdf(spec, u_hi, v_hi, kernels=kernels))
        - cdf(spec, u_lo, v_hi, kernels=kernels)
        - cdf(spec, u_hi, v_lo, kernels=kernels)
        + cdf(spec, u_lo, v_lo, kernels=kernels)
    )
    if floor:
        mass = np.maximum(mass, 0.0)
    if np.ndim(mass) == 0:
        return float(mass)
    return mass


def bvn_cdf(x, y, r, *, kernels=None):
    """Standard bivariate normal CDF with correlation ``r``."""
    k = kernels if kernels is not None else _backend.kernels
    x, y, r = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), np.asarray(r, float))
    out = k.bvn_cdf(x.ravel(), y.ravel(), r.ravel()).reshape(x.shape)
    return float(out) if out.ndim == 0 else out


def conditional_inverse(spec, u, w, *, kernels=None):
    """Solve partial_u(spec, u, v) = w for v (bisection, tolerance 1e-10)."""
    spec = _as_spec(spec)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    rho = np.asarray(spec.rho, dtype=float)
    shape = np.broadcast_shapes(u.shape, w.shape, rho.shape)
    flat = [np.ascontiguousarray(np.broadcast_to(t, shape), dtype=float).ravel() for t in (rho, u, w)]
    k = kernels if kernels is not None else _backend.kernels
    out = k.h_inverse(spec.family.code, *flat).reshape(shape)
    return float(out) if out.ndim == 0 else out


def sample(spec, n, rng, *, kernels=None):
    """Draw n pairs (U1, U0) from the copula by conditional inversion."""
    u1 = rng.random(n)
    w = rng.random(n)
    u0 = conditional_inverse(spec, u1, w, kernels=kernels)
    return u1, np.asarray(u0)


# --- Kendall's tau ---------------------------------------------------------

_FRANK_BRACKET = 500.0
_FRANK_TOL = 1e-10


def _frank_tau(theta):
    if theta == 0.0:
        return 0.0
    t = abs(theta)
    if t < 1e-3:
        tau = t / 9.0 - t**3 / 900.0 + t**5 / 52920.0
    else:
        integral, _ = integrate.quad(
            lambda s: s / math.expm1(s) if s > 0 else 1.0, 0.0, t, epsabs=1e-14, epsrel=1e-13, limit=200
        )
        debye = integral / t
        tau = 1.0 - 4.0 / t * (1.0 - debye)
    return math.copysign(tau, theta)


def rho_to_tau(family, rho):
    """Kendall's tau implied by the dependence parameter."""
    family = Family.parse(family)
    if np.ndim(rho):
        return np.array([rho_to_tau(family, r) for r in np.ravel(rho)]).reshape(np.shape(rho))
    rho = float(rho)
    if family is Family.INDEPENDENCE:
        return 0.0
    if family is Family.FRECHET_UPPER:
        return 1.0
    if family is Family.FRECHET_LOWER:
        return -1.0
    _check_rho(family, rho)
    if family is Family.GAUSSIAN:
        return 2.0 / math.pi * math.asin(rho)
    if family is Family.GUMBEL:
        return 1.0 - 1.0 / rho
    if family is Family.CLAYTON:
        return rho / (rho + 2.0)
    return _frank_tau(rho)


_CLOSED_FORM = {
    Family.GUMBEL: lambda t: 1.0 / (1.0 - t),
    Family.CLAYTON: lambda t: 2.0 * t / (1.0 - t),
    Family.GAUSSIAN: lambda t: np.sin(np.pi * t / 2.0),
}


def tau_to_rho(family, tau):
    """Dependence parameter matching Kendall's tau; UnsupportedTau outside the range."""
    family = Family.parse(family)
    if np.ndim(tau):
        t = np.asarray(tau, dtype=float)
        if family in _CLOSED_FORM and t.size and np.all(np.isfinite(t)):
            lo_ok = t >= 0.0 if family is not Family.GAUSSIAN else t > -1.0
            if np.all(lo_ok & (t < 1.0)):
                return _CLOSED_FORM[family](t)
        return np.array([tau_to_rho(family, v) for v in t.ravel()]).reshape(t.shape)
    tau = float(tau)
    if not math.isfinite(tau):
        raise UnsupportedTau(f"tau={tau} is not finite")
    if family is Family.INDEPENDENCE:
        if tau != 0.0:
            raise UnsupportedTau(f"independence copula has tau = 0, got {tau}")
        return 0.0
    if family is Family.FRECHET_UPPER or family is Family.FRECHET_LOWER:
        target = 1.0 if family is Family.FRECHET_UPPER else -1.0
        if tau != target:
            raise UnsupportedTau(f"{family.value} copula has tau = {target}, got {tau}")
        return 0.0
    if family in (Family.GUMBEL, Family.CLAYTON):
        if not 0.0 <= tau < 1.0:
            raise UnsupportedTau(f"{family.value} supports tau in [0, 1), got {tau}")
        if family is Family.GUMBEL:
            return 1.0 / (1.0 - tau)
        return 2.0 * tau / (1.0 - tau)
    if not -1.0 < tau < 1.0:
        raise UnsupportedTau(f"{family.value} supports tau in (-1, 1), got {tau}")
    if family is Family.GAUSSIAN:
        return math.sin(math.pi * tau / 2.0)
    if tau == 0.0:
        return 0.0
    lo, hi = (0.0, _FRANK_BRACKET) if tau > 0 else (-_FRANK_BRACKET, 0.0)
    if abs(tau) >= abs(_frank_tau(_FRANK_BRACKET)):
        raise UnsupportedTau(f"frank: |tau|={abs(tau)} needs |rho| > {_FRANK_BRACKET}")
    while hi - lo > _FRANK_TOL:
        mid = 0.5 * (lo + hi)
        if _frank_tau(mid) < tau:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def require_differentiable(spec):
    if not spec.family.differentiable:
        raise UnsupportedCopula(
            f"{spec.family.value} is not differentiable; influence-function estimators need a smooth copula"
        )

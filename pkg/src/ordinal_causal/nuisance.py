"""Nuisance models: propensity score and conditional outcome margins.

A nuisance model is any object with ``fit(data)`` and ``predict(data)``
returning ``(e, f1, f0)``: a length-n propensity vector and two n x (L-1)
matrices of conditional cumulative probabilities pr(Y <= k | A=a, X) for
k = 0..L-2. :func:`predict_nuisance` turns those raw predictions into a
:class:`NuisanceFit` that satisfies the trimming and monotonicity contract the
estimators rely on.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from .errors import (
    DataError,
    EmptyLevel,
    EmptyStratum,
    FitError,
    NonConvergence,
    SeparationDetected,
    SingularDesign,
)

DEFAULT_TRIM = 0.01
DEFAULT_EPS_F = 1e-6
DEFAULT_FOLDS = 10


def _readonly(arr):
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed (Y, A, X) triples with Y coded 0..L-1."""

    y: np.ndarray
    a: np.ndarray
    x: np.ndarray
    L: int

    def __post_init__(self):
        y = np.asarray(self.y)
        a = np.asarray(self.a)
        x = np.asarray(self.x, dtype=float)
        if y.ndim != 1 or a.ndim != 1:
            raise DataError("y and a must be one-dimensional")
        n = y.shape[0]
        if x.ndim == 1:
            x = x.reshape(n, -1) if x.size else np.zeros((n, 0))
        if x.ndim != 2 or x.shape[0] != n or a.shape[0] != n:
            raise DataError(f"length mismatch: y={n}, a={a.shape[0]}, x={x.shape}")
        if n == 0:
            raise DataError("empty dataset")
        for name, arr in (("y", y), ("a", a)):
            if not np.all(np.isfinite(arr.astype(float))):
                raise DataError(f"{name} has missing values")
            if np.any(arr.astype(float) != np.round(arr.astype(float))):
                raise DataError(f"{name} must be integer coded")
        if not np.all(np.isfinite(x)):
            raise DataError("x has missing or infinite values")
        L = int(self.L)
        if L < 2:
            raise DataError("need at least two outcome levels")
        y = y.astype(np.int64)
        a = a.astype(np.int64)
        if y.min() < 0 or y.max() > L - 1:
            raise DataError(f"y must lie in 0..{L - 1}")
        if not np.all((a == 0) | (a == 1)):
            raise DataError("a must be binary 0/1")
        if a.min() == a.max():
            raise DataError("both treatment arms must be nonempty")
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "a", _readonly(a))
        object.__setattr__(self, "x", _readonly(np.ascontiguousarray(x)))
        object.__setattr__(self, "L", L)

    @classmethod
    def from_arrays(cls, y, a, x=None, L=None):
        y = np.asarray(y)
        if x is None:
            x = np.zeros((y.shape[0], 0))
        if L is None:
            L = int(np.max(y)) + 1
        return cls(y, a, x, L)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    def subset(self, idx):
        return Dataset(self.y[idx], self.a[idx], self.x[idx], self.L)

    def indicators(self):
        """n x (L-1) matrix of 1(Y <= k), k = 0..L-2."""
        return (self.y[:, None] <= np.arange(self.L - 1)[None, :]).astype(float)


@dataclass(frozen=True, eq=False)
class FoldPlan:
    K: int
    assignment: np.ndarray
    seed: int

    def indices(self, s):
        return np.flatnonzero(self.assignment == s)


@dataclass(frozen=True, eq=False)
class NuisanceFit:
    """Per-unit propensity and conditional margins, trimmed and monotone."""

    e: np.ndarray
    f1: np.ndarray
    f0: np.ndarray
    trim: float = DEFAULT_TRIM
    eps_f: float = DEFAULT_EPS_F
    folds: FoldPlan = None
    level_map: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.array(self.e, dtype=float)
        f1 = np.array(self.f1, dtype=float)
        f0 = np.array(self.f0, dtype=float)
        if e.ndim != 1 or f1.ndim != 2 or f1.shape != f0.shape or f1.shape[0] != e.shape[0]:
            raise ValueError(f"inconsistent shapes e={e.shape} f1={f1.shape} f0={f0.shape}")
        for arr in (e, f1, f0):
            _readonly(arr)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "f1", f1)
        object.__setattr__(self, "f0", f0)

    @property
    def n(self):
        return self.e.shape[0]

    @property
    def L(self):
        return self.f1.shape[1] + 1


def predict_nuisance(model, data, trim=DEFAULT_TRIM, eps_f=DEFAULT_EPS_F):
    """Evaluate a fitted model on ``data`` and enforce the NuisanceFit contract."""
    e, f1, f0 = model.predict(data)
    return _finalize(e, f1, f0, data, trim, eps_f, level_map=getattr(model, "level_map", {}))


def _finalize(e, f1, f0, data, trim, eps_f, folds=None, level_map=None):
    n, L = data.n, data.L
    e = np.clip(np.asarray(e, dtype=float).reshape(n), trim, 1.0 - trim)
    margins = []
    for f in (f1, f0):
        f = np.asarray(f, dtype=float).reshape(n, L - 1)
        f = np.clip(f, eps_f, 1.0 - eps_f)
        margins.append(np.maximum.accumulate(f, axis=1))
    return NuisanceFit(e, margins[0], margins[1], trim, eps_f, folds, level_map or {})


# --- propensity models -----------------------------------------------------


def _design(x):
    x = np.asarray(x, dtype=float)
    return np.hstack([np.ones((x.shape[0], 1)), x])


class LogisticPropensity:
    """Logistic regression for pr(A=1 | X) fitted by IRLS."""

    def __init__(self, max_iter=100, tol=1e-8, separation_bound=30.0):
        self.max_iter = max_iter
        self.tol = tol
        self.separation_bound = separation_bound

    def fit(self, x, a):
        X = _design(x)
        a = np.asarray(a, dtype=float)
        if np.linalg.matrix_rank(X) < X.shape[1]:
            raise SingularDesign("propensity design matrix is rank deficient", nuisance="propensity")
        beta = np.zeros(X.shape[1])
        self.n_iter_ = self.max_iter
        for it in range(self.max_iter):
            eta = X @ beta
            self._check_separation(eta)
            p = expit(eta)
            w = p * (1.0 - p)
            hess = X.T @ (X * w[:, None])
            step = np.linalg.solve(hess, X.T @ (a - p))
            beta = beta + step
            if np.max(np.abs(step)) < self.tol:
                self.n_iter_ = it + 1
                break
        eta = X @ beta
        self._check_separation(eta)
        p = expit(eta)
        hess = X.T @ (X * (p * (1.0 - p))[:, None])
        self.coef_ = beta
        self.cov_ = np.linalg.inv(hess)
        return self

    def _check_separation(self, eta):
        if np.max(np.abs(eta)) > self.separation_bound:
            raise SeparationDetected(
                "fitted propensities pinned to 0 or 1 (|linear predictor| > "
                f"{self.separation_bound:g})",
                nuisance="propensity",
            )

    def predict(self, x):
        return expit(_design(x) @ self.coef_)


class ConstantPropensity:
    """Known propensity, e.g. a randomized design."""

    def __init__(self, value):
        if not 0.0 < value < 1.0:
            raise ValueError("constant propensity must lie in (0, 1)")
        self.value = float(value)

    def fit(self, x, a):
        return self

    def predict(self, x):
        return np.full(np.asarray(x).shape[0], self.value)


# --- proportional odds -----------------------------------------------------


class _OrderedLogit:
    """Cumulative-logit fit logit pr(Y <= k | z) = cut_k - z'beta on dense levels."""

    def __init__(self, max_iter=200, tol=1e-10):
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, z, y, L):
        z = np.asarray(z, dtype=float)
        observed = np.unique(y)
        if observed.size < 2:
            raise EmptyLevel("only one outcome level observed", nuisance="outcome")
        dense = np.searchsorted(observed, y)
        Lp = observed.size
        n, p = z.shape
        q = Lp - 1 + p

        freq = np.cumsum(np.bincount(dense, minlength=Lp))[:-1] / n
        cuts0 = logit(freq)
        theta = np.concatenate([[cuts0[0]], np.log(np.diff(cuts0)), np.zeros(p)])

        up = dense <= Lp - 2
        lo = dense >= 1
        rows = np.arange(n)
        Du = np.zeros((n, q))
        Dl = np.zeros((n, q))
        Du[rows[up], dense[up]] = 1.0
        Dl[rows[lo], dense[lo] - 1] = 1.0
        Du[:, Lp - 1:] = -z * up[:, None]
        Dl[:, Lp - 1:] = -z * lo[:, None]

        def natural(th):
            cuts = th[0] + np.concatenate([[0.0], np.cumsum(np.exp(th[1:Lp - 1]))])
            return cuts, th[Lp - 1:]

        def loglik(th):
            cuts, beta = natural(th)
            eta = z @ beta
            ext = np.concatenate([[-np.inf], cuts, [np.inf]])
            pr = expit(ext[dense + 1] - eta) - expit(ext[dense] - eta)
            if np.any(pr <= 0):
                return -np.inf, None
            return float(np.sum(np.log(pr))), (cuts, eta)

        def derivatives(cuts, eta):
            ext = np.concatenate([[-np.inf], cuts, [np.inf]])
            Fu = expit(ext[dense + 1] - eta)
            Fl = expit(ext[dense] - eta)
            pr = Fu - Fl
            fu = Fu * (1.0 - Fu)
            fl = Fl * (1.0 - Fl)
            G = (fu / pr)[:, None] * Du - (fl / pr)[:, None] * Dl
            H = (
                Du.T @ (Du * (fu * (1.0 - 2.0 * Fu) / pr)[:, None])
                - Dl.T @ (Dl * (fl * (1.0 - 2.0 * Fl) / pr)[:, None])
                - G.T @ G
            )
            return G.sum(axis=0), H

        ll, cache = loglik(theta)
        for it in range(self.max_iter):
            cuts, eta = cache
            grad_nat, hess_nat = derivatives(cuts, eta)
            J = np.zeros((q, q))
            J[: Lp - 1, 0] = 1.0
            gaps = np.exp(theta[1:Lp - 1])
            for j in range(1, Lp - 1):
                J[j:Lp - 1, j] = gaps[j - 1]
            J[Lp - 1:, Lp - 1:] = np.eye(p)
            grad = J.T @ grad_nat
            info = -(J.T @ hess_nat @ J)
            try:
                step = np.linalg.solve(info, grad)
            except np.linalg.LinAlgError:
                raise SingularDesign("outcome information matrix is singular", nuisance="outcome") from None
            t = 1.0
            while True:
                cand = theta + t * step
                ll_new, cache_new = loglik(cand)
                if ll_new >= ll - 1e-12 * abs(ll) or t < 1e-8:
                    break
                t *= 0.5
            theta, ll, cache = cand, ll_new, cache_new
            if np.max(np.abs(t * step)) < self.tol:
                break
        else:
            raise NonConvergence(
                f"proportional-odds fit did not converge in {self.max_iter} iterations", nuisance="outcome"
            )
        if not np.isfinite(ll):
            raise NonConvergence("proportional-odds likelihood degenerate", nuisance="outcome")
        cuts, beta = natural(theta)
        grad_nat, hess_nat = derivatives(*cache)
        self.n_iter_ = it + 1
        self.loglik_ = ll
        self.cutpoints_ = cuts
        self.coef_ = beta
        try:
            self.cov_ = np.linalg.inv(-hess_nat)
        except np.linalg.LinAlgError:
            self.cov_ = np.full((q, q), np.nan)
        self.observed_levels_ = observed
        # cutpoints for the original 0..L-2 grid; absent levels collapse onto
        # the nearest observed level below them
        full = np.empty(L - 1)
        for k in range(L - 1):
            j = np.searchsorted(observed, k, side="right") - 1
            full[k] = -np.inf if j < 0 else (np.inf if j >= Lp - 1 else cuts[j])
        self.full_cutpoints_ = full
        return self

    def predict_cdf(self, z):
        eta = np.asarray(z, dtype=float) @ self.coef_
        return expit(self.full_cutpoints_[None, :] - eta[:, None])


class ProportionalOdds:
    """Proportional-odds outcome model.

    By default one model is fitted on pooled data with the treatment indicator
    as an extra covariate; ``per_arm=True`` fits each arm separately.
    """

    def __init__(self, per_arm=False, max_iter=200, tol=1e-10):
        self.per_arm = per_arm
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, data):
        if self.per_arm:
            self.models_ = {}
            for arm in (0, 1):
                m = data.a == arm
                self.models_[arm] = _OrderedLogit(self.max_iter, self.tol).fit(data.x[m], data.y[m], data.L)
        else:
            z = np.hstack([data.x, data.a[:, None].astype(float)])
            self.model_ = _OrderedLogit(self.max_iter, self.tol).fit(z, data.y, data.L)
        return self

    @property
    def level_map(self):
        models = self.models_.values() if self.per_arm else [self.model_]
        return {
            name: [int(v) for v in m.observed_levels_]
            for name, m in zip(("arm0", "arm1") if self.per_arm else ("pooled",), models)
        }

    def predict_margins(self, x):
        x = np.asarray(x, dtype=float)
        if self.per_arm:
            return self.models_[1].predict_cdf(x), self.models_[0].predict_cdf(x)
        ones = np.ones((x.shape[0], 1))
        f1 = self.model_.predict_cdf(np.hstack([x, ones]))
        f0 = self.model_.predict_cdf(np.hstack([x, 0.0 * ones]))
        return f1, f0


class ParametricNuisance:
    """Logistic propensity plus proportional-odds margins (the default)."""

    def __init__(self, propensity=None, outcome=None):
        self.propensity = propensity if propensity is not None else LogisticPropensity()
        self.outcome = outcome if outcome is not None else ProportionalOdds()

    def fit(self, data):
        self.propensity.fit(data.x, data.a)
        self.outcome.fit(data)
        return self

    @property
    def level_map(self):
        return getattr(self.outcome, "level_map", {})

    def predict(self, data):
        e = self.propensity.predict(data.x)
        f1, f0 = self.outcome.predict_margins(data.x)
        return e, f1, f0


class StratifiedNuisance:
    """Nonparametric cell means for small discrete covariate spaces."""

    def fit(self, data):
        keys, inverse = np.unique(data.x, axis=0, return_inverse=True)
        inverse = np.ravel(inverse)
        L = data.L
        self.table_ = {}
        for s, key in enumerate(keys):
            m = inverse == s
            a, y = data.a[m], data.y[m]
            cdfs = []
            for arm in (1, 0):
                ya = y[a == arm]
                if ya.size == 0:
                    raise EmptyStratum(f"stratum {tuple(key)} has no units in arm {arm}", nuisance="outcome")
                cdfs.append(np.cumsum(np.bincount(ya, minlength=L))[:-1] / ya.size)
            self.table_[tuple(key)] = (a.mean(), cdfs[0], cdfs[1])
        return self

    def predict(self, data):
        n, L = data.n, data.L
        e = np.empty(n)
        f1 = np.empty((n, L - 1))
        f0 = np.empty((n, L - 1))
        for i, row in enumerate(data.x):
            try:
                e[i], f1[i], f0[i] = self.table_[tuple(row)]
            except KeyError:
                raise EmptyStratum(f"covariate value {tuple(row)} unseen when fitting", nuisance="outcome") from None
        return e, f1, f0


class KnownNuisance:
    """Nuisances supplied as functions of X (oracle or design-based values).

    ``propensity`` maps an n x p covariate matrix to n probabilities;
    ``margins`` maps it to the pair (f1, f0) of n x (L-1) matrices.
    """

    def __init__(self, propensity, margins):
        self.propensity = propensity
        self.margins = margins

    def fit(self, data):
        return self

    def predict(self, data):
        f1, f0 = self.margins(data.x)
        return np.asarray(self.propensity(data.x), dtype=float), f1, f0


def fit_nuisance(data, model=None, trim=DEFAULT_TRIM, eps_f=DEFAULT_EPS_F):
    """Fit ``model`` (default parametric) on the full sample and predict in-sample."""
    model = model if model is not None else ParametricNuisance()
    model.fit(data)
    return predict_nuisance(model, data, trim, eps_f)


# --- cross-fitting ---------------------------------------------------------


def make_folds(n, K=DEFAULT_FOLDS, seed=0):
    """Seeded uniform shuffle of 0..n-1 into K near-equal folds labelled 1..K."""
    if K < 2:
        raise ValueError("cross-fitting needs K >= 2")
    if K > n:
        raise ValueError(f"K={K} exceeds n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    for s, block in enumerate(np.array_split(perm, K), start=1):
        assignment[block] = s
    return FoldPlan(K, _readonly(assignment), seed)


def fit_crossfit(data, K=DEFAULT_FOLDS, seed=0, model_factory=ParametricNuisance,
                 trim=DEFAULT_TRIM, eps_f=DEFAULT_EPS_F, plan=None):
    """Out-of-fold nuisances: unit i's values come from the model fitted without its fold."""
    plan = plan if plan is not None else make_folds(data.n, K, seed)
    n, L = data.n, data.L
    e = np.empty(n)
    f1 = np.empty((n, L - 1))
    f0 = np.empty((n, L - 1))
    levels = set(np.unique(data.y).tolist())
    level_map = {}
    for s in range(1, plan.K + 1):
        test = plan.assignment == s
        train = ~test
        try:
            missing = levels - set(np.unique(data.y[train]).tolist())
            if missing:
                raise EmptyLevel(f"levels {sorted(missing)} absent from the training folds", nuisance="outcome")
            try:
                train_data = data.subset(train)
            except DataError as exc:
                raise FitError(str(exc), nuisance="propensity") from exc
            model = model_factory()
            model.fit(train_data)
            # a small test fold may hold a single arm, which a Dataset forbids
            e[test], f1[test], f0[test] = model.predict(_PredictView(data, test))
            level_map[s] = getattr(model, "level_map", {})
        except FitError as exc:
            exc.fold = s
            raise
    return _finalize(e, f1, f0, data, trim, eps_f, folds=plan, level_map=level_map)


class _PredictView:
    """Read-only row subset exposing the Dataset fields models predict from."""

    def __init__(self, data, mask):
        self.x = data.x[mask]
        self.y = data.y[mask]
        self.a = data.a[mask]
        self.L = data.L
        self.n = self.y.shape[0]
        self.p = data.p

"""Copula-based causal estimands for ordinal outcomes.

The probability of benefit and related estimands under a conditional copula
model for the two potential outcomes, with efficient one-step estimators,
sensitivity curves over the copula parameter, Rosenbaum-type bounds and a
Monte Carlo harness.
"""

__version__ = "0.1.0"

from .copula import CopulaSpec, Family, backend_name
from .errors import (
    DataError,
    FitError,
    InvalidGamma,
    InvalidParameter,
    NumericalError,
    OrdinalCausalError,
    StudyFailed,
    UnsupportedCopula,
    UnsupportedTau,
)
from .estimands import (
    Estimand,
    EstimateResult,
    Mode,
    cross_fit,
    frechet_envelope,
    one_step,
    unconditional_dr,
)
from .nuisance import Dataset, NuisanceFit, fit_crossfit, fit_nuisance, predict_nuisance
from .sensitivity import (
    TauGrid,
    breakeven_gamma,
    endpoint_one_step,
    gamma_table,
    tau_curve,
)

__all__ = [
    "CopulaSpec", "Family", "backend_name",
    "DataError", "FitError", "InvalidGamma", "InvalidParameter", "NumericalError",
    "OrdinalCausalError", "StudyFailed", "UnsupportedCopula", "UnsupportedTau",
    "Estimand", "EstimateResult", "Mode", "cross_fit", "frechet_envelope", "one_step",
    "unconditional_dr",
    "Dataset", "NuisanceFit", "fit_crossfit", "fit_nuisance", "predict_nuisance",
    "TauGrid", "breakeven_gamma", "endpoint_one_step", "gamma_table", "tau_curve",
    "__version__",
]

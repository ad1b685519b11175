"""Exception hierarchy shared across the package."""


class OrdinalCausalError(Exception):
    """Base class for all package errors."""


class InvalidParameter(OrdinalCausalError, ValueError):
    """Copula dependence parameter outside its family's domain."""


class UnsupportedTau(OrdinalCausalError, ValueError):
    """Kendall's tau outside the range a copula family can attain."""


class UnsupportedCopula(OrdinalCausalError, ValueError):
    """Operation needs a differentiable copula (the Frechet bounds are not)."""


class InconsistentMargins(OrdinalCausalError, ValueError):
    """A row of cumulative margins is not nondecreasing."""


class InvalidGamma(OrdinalCausalError, ValueError):
    """Rosenbaum sensitivity parameter below 1."""


class NumericalError(OrdinalCausalError, ArithmeticError):
    """A computed quantity left its admissible range beyond round-off."""


class DataError(OrdinalCausalError, ValueError):
    """Input data violates the Dataset invariants."""


class FitError(OrdinalCausalError):
    """A nuisance model could not be fitted.

    ``fold`` is set when the failure happened inside a cross-fitting fold and
    ``nuisance`` names the component that failed.
    """

    def __init__(self, message, *, nuisance=None, fold=None):
        super().__init__(message)
        self.nuisance = nuisance
        self.fold = fold

    def __str__(self):
        msg = super().__str__()
        if self.fold is not None:
            msg = f"fold {self.fold}: {msg}"
        if self.nuisance is not None:
            msg = f"{self.nuisance}: {msg}"
        return msg


class SeparationDetected(FitError):
    pass


class SingularDesign(FitError):
    pass


class NonConvergence(FitError):
    pass


class EmptyLevel(FitError):
    pass


class EmptyStratum(FitError):
    pass


class StudyFailed(OrdinalCausalError):
    """Too many Monte Carlo replications failed."""

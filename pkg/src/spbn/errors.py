"""Exception types shared across the package."""


class SpbnError(Exception):
    """Base class for all package errors."""


class DataError(SpbnError):
    """Malformed or unusable input data (CSV parse problems, bad columns)."""


class NotPositiveDefinite(SpbnError):
    """A matrix that must be SPD failed its Cholesky factorization."""


class DimensionTooSmall(SpbnError):
    """Operation needs a larger matrix dimension than was given."""


class NonFinite(SpbnError):
    """NaN or infinity where a finite value is required."""


class DimensionMismatch(SpbnError):
    """Incompatible dimensions or column sets between two objects."""


class InsufficientSamples(SpbnError):
    """Too few rows for the requested estimator."""


class SingularCovariance(SpbnError):
    """Sample covariance is singular (degenerate or duplicated data)."""


class RankDeficient(SpbnError):
    """Regression design matrix does not have full column rank."""


class OptimizerFailed(SpbnError):
    """No finite objective value was found during optimization."""


class NonFiniteStart(SpbnError):
    """Objective evaluates to NaN at the optimizer's starting point."""


class FitFailed(SpbnError):
    """A CPD could not be fitted; carries the offending node and fold."""

    def __init__(self, node, fold, cause):
        super().__init__(f"fit failed for node {node!r} on fold {fold}: {cause}")
        self.node = node
        self.fold = fold
        self.cause = cause


class NodeSetMismatch(SpbnError):
    """Two graphs do not share the same node set."""


class InsufficientData(SpbnError):
    """Statistical test received fewer values than it supports."""


class TooManyGroups(SpbnError):
    """Exact multiple-comparison adjustment is capped; use the Holm fallback."""

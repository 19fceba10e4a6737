"""Exception types and warning categories shared across the package."""


class FairproxyError(Exception):
    """Base class for every error raised by this package."""


# ---------------------------------------------------------------------------
# probability-vector / domain errors
# ---------------------------------------------------------------------------


class AllZeroError(FairproxyError, ValueError):
    """Every entry of a weight vector is zero, so it cannot be normalized."""


class LengthMismatchError(FairproxyError, ValueError):
    """Two probability vectors of different lengths were combined."""


class InvalidDistributionError(FairproxyError, ValueError):
    """A vector violates the probability-distribution invariants."""


# ---------------------------------------------------------------------------
# table / dataset ingestion errors
# ---------------------------------------------------------------------------


class MalformedRowError(FairproxyError, ValueError):
    """A CSV row has the wrong arity, a negative count, or a non-numeric field."""


class DuplicateSurnameError(FairproxyError, ValueError):
    """The same surname appears twice in a surname table."""


class DuplicateGeoError(FairproxyError, ValueError):
    """The same geography id appears twice in a geography table."""


class ZeroGeoRowError(FairproxyError, ValueError):
    """A geography row has no positive count in any race category."""


class InconsistentCovariateArityError(FairproxyError, ValueError):
    """Records in one dataset carry different numbers of covariates."""


class InvalidContextError(FairproxyError, ValueError):
    """A context value is not 0 or 1."""


class UnknownRaceError(FairproxyError, ValueError):
    """A race label is not a member of the session's race categories."""


class UnlabeledDatasetError(FairproxyError, ValueError):
    """An operation that needs ground-truth race labels got unlabeled data."""


# ---------------------------------------------------------------------------
# model errors
# ---------------------------------------------------------------------------


class UnknownGeoError(FairproxyError, ValueError):
    """A geography id is absent from the geography table."""


class UnfittedContextError(FairproxyError, ValueError):
    """A contextual model was queried at a context it has no posterior for."""


class NonFiniteFeatureError(FairproxyError, ValueError):
    """A feature matrix contains NaN or infinite entries."""


# ---------------------------------------------------------------------------
# estimator / diagnostic errors
# ---------------------------------------------------------------------------


class EmptyGroupError(FairproxyError, ValueError):
    """No record carries the requested race label."""


class ZeroMassError(FairproxyError, ValueError):
    """The proxy assigns zero total mass to the requested race."""


class ZeroDenominatorError(FairproxyError, ZeroDivisionError):
    """The ratio estimator's denominator is zero for the requested race."""


class EmptyContextError(FairproxyError, ValueError):
    """No record has the requested context value."""


class DegenerateBoundError(FairproxyError, ValueError):
    """A consistency bound is undefined or non-positive for these inputs."""


class ZeroMassEventError(FairproxyError, ValueError):
    """A conditional was requested on an event with zero probability mass."""


class InvalidConfigError(FairproxyError, ValueError):
    """A synthetic-population configuration violates its invariants."""


# ---------------------------------------------------------------------------
# warnings
# ---------------------------------------------------------------------------


class ConvergenceWarning(UserWarning):
    """The optimizer stopped before reaching its gradient tolerance."""


class ZeroVarianceWarning(UserWarning):
    """A covariate column is constant and was only mean-centered."""

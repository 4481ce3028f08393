"""Exception and warning types shared across the package."""


class KacflowError(Exception):
    """Base class for all package errors."""


class ConfigurationError(KacflowError):
    """A system, set, or roof was declared with incompatible parameters."""


class SetValidationError(ConfigurationError):
    """A flow set violates its validity constraints (e.g. t2 above the roof)."""


class UnsupportedExactIntegration(KacflowError):
    """Exact integration requested for an integrand that is not piecewise constant."""


class RoofBoundViolation(KacflowError):
    """A roof evaluation fell below its declared positive lower bound."""


class RoofSupViolation(KacflowError):
    """An observed roof value exceeded the declared supremum used for rejection sampling."""


class NonRecurrentWithinBudget(KacflowError):
    """An orbit failed to enter the target set within the iteration budget.

    This is a sample-level diagnostic, not a mathematical claim: the budget
    was exhausted before a return was observed.
    """


class EmptyProjection(KacflowError):
    """The base projection of a flow set has zero measure."""


class ZeroEntropyBase(KacflowError):
    """Entropy quotient requested for a zero-entropy base system (0/0 undefined)."""


class InvalidExitWidth(KacflowError):
    """Exit-region width outside (0, t2 - t1]."""


class ScaleRangeError(KacflowError):
    """A roof-family scale factor makes the fixed set invalid for the scaled flow."""


class IdentityCheckFailed(KacflowError):
    """An internal cross-check between two routes to the same quantity failed."""


class BadSupBoundWarning(RuntimeWarning):
    """Rejection-sampler acceptance rate is suspiciously low; the declared sup is likely loose."""

"""Exception types shared across the library.

Every error that signals a violated mathematical precondition (as opposed to
a plain usage bug) gets its own class so callers can react to the specific
failure mode.
"""


class OffRange(ValueError):
    """A vector has a significant component outside the operator's range.

    Raised by pseudo-inverse style operations when the input is not supported
    on the covariance's numerical support.
    """


class Incomparable(ValueError):
    """Range inclusion between two operators fails, so no ratio bound exists."""


class DegreeTooLarge(ValueError):
    """Polynomial or multi-index degree above the stability/overflow budget."""


class OffSupport(ValueError):
    """A multi-index charges a direction where the covariance vanishes."""


class SizeTooLarge(ValueError):
    """Combinatorial size (permanent order, chaos degree) above the hard cap."""


class NotContraction(ValueError):
    """Operator norm exceeds one beyond tolerance."""


class NotStrictContraction(ValueError):
    """Operator norm is not strictly below one, so a geometric sum diverges."""


class NotSelfAdjoint(ValueError):
    """A symmetric matrix was required."""


class Unbounded(ValueError):
    """No continuous canonical-coordinate extension exists at this truncation."""


class PreconditionViolated(ValueError):
    """An analytic precondition (e.g. integrability of a witness) fails."""


class SchemeTooCoarse(RuntimeError):
    """The integration scheme cannot certify the requested tolerance."""


class QuadratureFailure(RuntimeError):
    """Adaptive panel refinement did not converge within the refinement cap."""


class NoDecay(ValueError):
    """A negative decay rate is required to truncate an infinite time integral."""


class HypothesisFailed(AssertionError):
    """A model-level hypothesis check failed at some concrete (s, t)."""


class ConfigInvalid(ValueError):
    """A run configuration does not match the expected schema."""

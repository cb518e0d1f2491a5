"""Exception hierarchy shared by all confdist modules."""


class ConfDistError(Exception):
    """Base class for errors raised by confdist."""


class ParameterDomainError(ConfDistError, ValueError):
    """A parameter or argument lies outside its valid domain."""


class UnsupportedOperationError(ConfDistError, TypeError):
    """The operation is not defined for this kind of object."""


class InsufficientDataError(ConfDistError, ValueError):
    """Too few observations or draws for the requested operation."""


class DegenerateSampleError(ConfDistError, ValueError):
    """The sample carries no spread (e.g. all values identical)."""


class TailRuleError(ConfDistError, ValueError):
    """A gridded CD window does not cover the estimator's mass."""


class NonMonotoneInputError(ConfDistError, ValueError):
    """A supplied CD is not nondecreasing on the evaluation grid."""


class EpsilonTooSmallError(ConfDistError, RuntimeError):
    """An accept/reject engine hit its attempt cap.

    Attributes
    ----------
    min_residual : float
        Smallest residual (or summary distance) observed over all attempts.
    attempts : int
        Number of attempts made before giving up.
    """

    def __init__(self, message, min_residual=float("nan"), attempts=0):
        super().__init__(message)
        self.min_residual = min_residual
        self.attempts = attempts


class ReplicationFailureError(ConfDistError, RuntimeError):
    """More simulation replicates failed than a study tolerates."""

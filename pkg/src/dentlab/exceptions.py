"""Exception hierarchy shared by every dentlab module."""


class DentlabError(Exception):
    """Base class for all dentlab errors."""


class DomainError(DentlabError, ValueError):
    """An argument lies outside the domain of an operation."""


class CapacityError(DentlabError):
    """An exact computation was refused because the instance is too large."""


class PreconditionError(DomainError):
    """A structural precondition of a construction does not hold."""


class NotFinitelyDentableError(DentlabError):
    """A derivation stalled where a finite index was required.

    Attributes
    ----------
    k : int
        Scale exponent of the failing level (``eps = 2**-k``).
    """

    def __init__(self, k, message=None):
        self.k = k
        super().__init__(message or f"derivation stalled at eps=2^-{k}")


class InconclusiveError(DentlabError):
    """A budgeted search ran out before producing a certificate.

    The best candidate found so far is kept on ``best`` (may be ``None``).
    """

    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class OutputError(DentlabError):
    """A report could not be written."""

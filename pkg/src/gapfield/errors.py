"""Exception types shared across the package."""


class GapFieldError(Exception):
    """Base class for all package errors."""


class InputError(GapFieldError):
    """Invalid configuration, parameters, or data.

    Carries an optional list of (key, line, reason) tuples when raised by the
    config parser.
    """

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = list(details) if details else []


class DomainError(GapFieldError):
    """A point or region falls outside the domain an operation supports."""


class ResourceError(GapFieldError):
    """A resolution policy is infeasible; carries the node count it needed."""

    def __init__(self, message, required_nodes=None):
        super().__init__(message)
        self.required_nodes = required_nodes


class SolverError(GapFieldError):
    """Linear solver failed to converge; carries the residual history."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class UnsupportedInputError(GapFieldError):
    """Input is structurally valid but not supported in the requested mode."""


class PreconditionError(GapFieldError):
    """An operation's mathematical precondition does not hold."""


class CertificateFailure(GapFieldError):
    """A requested certificate did not pass."""

    def __init__(self, message, results=None):
        super().__init__(message)
        self.results = list(results) if results is not None else []

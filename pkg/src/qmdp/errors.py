"""Exception hierarchy shared by the library, the service, and the CLI.

The split mirrors the three failure modes surfaced to callers: a document
that cannot be interpreted (ParseError), an object that violates a
mathematical invariant (InvariantError), and an iterative solve that ran
out of iterations (ConvergenceError).
"""


class QmdpError(Exception):
    """Base class for all library errors."""


class ParseError(QmdpError):
    """A document or argument could not be interpreted."""


class InvariantError(QmdpError):
    """A mathematical invariant (trace, positivity, stochasticity, ...) failed."""


class DimensionMismatch(InvariantError):
    """Operands have incompatible dimensions."""


class ConvergenceError(QmdpError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual

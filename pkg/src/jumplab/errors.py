"""Exception types shared across the package."""


class JumplabError(Exception):
    """Base class for package errors."""


class DomainError(JumplabError):
    """Argument outside the mathematical domain of an operation."""


class BracketError(JumplabError):
    """A search bracket could not be established (function never crosses the level)."""


class ViolationError(JumplabError):
    """A claimed inequality failed on the evaluation grid.

    Carries the witness point and the offending ratio when available.
    """

    def __init__(self, message, witness=None, ratio=None):
        super().__init__(message)
        self.witness = witness
        self.ratio = ratio


class InconclusiveError(JumplabError):
    """A numerical convergence test did not stabilize either way."""


class QuadratureError(JumplabError):
    """Adaptive quadrature exceeded its budget or failed to converge."""


class SpecError(JumplabError):
    """Envelope constants are mutually inconsistent (lower bound exceeds upper)."""


class SolveError(JumplabError):
    """A linear system for an exact expectation was singular or ill-posed."""


class ResourceError(JumplabError):
    """Requested construction exceeds the configured size limits."""


class TabulationError(JumplabError):
    """An inverse-CDF table is too coarse for faithful sampling."""


class ConfigError(JumplabError):
    """Experiment configuration failed to parse or validate."""

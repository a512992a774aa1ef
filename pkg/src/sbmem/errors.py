"""Exception hierarchy shared by all modules.

Three branches matter for the CLI exit codes: configuration problems
(exit 2), numerical failures (exit 3) and resource/validity guards
(exit 4).
"""


class ToolkitError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(ToolkitError):
    """Invalid or inconsistent run configuration."""


class NumericalError(ToolkitError):
    """A numerical procedure failed to meet its contract."""


class SvdConvergenceError(NumericalError):
    """Underlying SVD routine did not converge."""


class EigConvergenceError(NumericalError):
    """Iterative eigensolver did not reach the requested residual.

    Carries the last residual so callers can distinguish a nearly
    degenerate leading eigenvalue from a plain iteration shortage.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class QuadratureError(NumericalError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class RankOverflowError(NumericalError):
    """A truncation hit the hard rank cap with too much discarded weight."""

    def __init__(self, message, discarded_weight=None, max_rank=None):
        super().__init__(message)
        self.discarded_weight = discarded_weight
        self.max_rank = max_rank


class StateValidationError(NumericalError):
    """A state or Choi matrix violated positivity/trace/consistency bounds."""


class GuardError(ToolkitError):
    """A tractability or validity guard was violated."""


class PathCountError(GuardError):
    """Exhaustive path enumeration would exceed the path-count guard."""


class FockDimensionError(GuardError):
    """Truncated Fock space would exceed the dimension guard."""


class LeakageError(GuardError):
    """Population leaked into the top Fock level beyond tolerance."""


class MemoryCapError(GuardError):
    """Bath memory time exceeds the scan cap (e.g. non-decaying bath)."""

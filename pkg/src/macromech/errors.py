"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 1,
violated invariants with 2 and numerical failures with 3.
"""


class MacromechError(Exception):
    """Base class for all package errors."""


class ConfigError(MacromechError):
    """Invalid or incomplete experiment configuration."""


class InvariantViolation(MacromechError):
    """A physical invariant (e.g. I <= <b^dag b>) failed at runtime."""


class NumericalError(MacromechError):
    """Base class for numerical failures."""


class QuadratureError(NumericalError):
    """Quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, estimate: float):
        super().__init__(f"{message} (achieved error estimate {estimate:.3e})")
        self.estimate = estimate


class TruncationError(NumericalError):
    """Fock-sector truncation discards more weight than allowed."""

    def __init__(self, message: str, suggested: int | None = None):
        if suggested is not None:
            message = f"{message}; try n_max >= {suggested}"
        super().__init__(message)
        self.suggested = suggested


class CutoffError(NumericalError):
    """No cutoff below the hard cap satisfies the tolerance."""


class DegenerateOutcomeError(NumericalError):
    """The post-selected measurement record has zero probability."""


class NoCrossingError(NumericalError):
    """A sweep does not bracket the requested crossing."""

"""Exception hierarchy.

Input/parameter problems raise :class:`ValidationError`; everything that goes
wrong *numerically* (divergent sums, lost zeros, caustics, windows too small)
derives from :class:`NumericalError` so callers can map the two classes to
distinct exit codes.
"""

from __future__ import annotations

__all__ = [
    "RotorkitError",
    "ValidationError",
    "NumericalError",
    "LatticeSumDivergence",
    "WindowOverflow",
    "EvaluationBandError",
    "BoundaryZeroError",
    "ZeroCountMismatch",
    "UndeterminedExponent",
    "CotangentPole",
    "NearZeroDenominator",
    "BvpConvergenceError",
    "StepResolutionError",
    "CausticError",
    "SpectralWindowError",
]


class RotorkitError(Exception):
    """Base class for all package errors."""


class ValidationError(RotorkitError, ValueError):
    """Bad parameters, malformed input files, or inconsistent options."""


class NumericalError(RotorkitError, ArithmeticError):
    """A computation failed to reach its stated accuracy or diverged."""


class LatticeSumDivergence(NumericalError):
    """Term budget exhausted before the lattice sum converged."""

    def __init__(self, route: str, terms: int, message: str = ""):
        self.route = route
        self.terms = terms
        text = f"lattice sum did not converge on the {route} route after {terms} terms"
        if message:
            text += f": {message}"
        super().__init__(text)


class WindowOverflow(NumericalError):
    """Requested coefficient window exceeds the configured size budget."""


class EvaluationBandError(NumericalError):
    """Evaluation point lies outside the safe band of a truncated series."""


class BoundaryZeroError(NumericalError):
    """A zero sits on (or hugs) the search contour after re-perturbation."""


class ZeroCountMismatch(NumericalError):
    """Subdivided windings do not add up to the enclosing contour's count."""


class UndeterminedExponent(NumericalError):
    """Phase-growth measurement did not lock onto an integer."""


class CotangentPole(NumericalError):
    """cot(a/2) evaluated at (or too near) a pole a in 2*pi*Z."""


class NearZeroDenominator(NumericalError):
    """Matrix-element denominator vanished beyond recoverable precision."""


class BvpConvergenceError(NumericalError):
    """Newton iteration for the boundary-value problem did not converge."""


class StepResolutionError(NumericalError):
    """Step halving exhausted without meeting the resolution target."""


class CausticError(NumericalError):
    """Stability ratio blew up along a trajectory (caustic crossing)."""


class SpectralWindowError(NumericalError):
    """Spectral propagator window too small for the requested accuracy."""

"""Exception hierarchy shared across the package.

Every error raised deliberately by this package derives from
:class:`ArtifactError`, so callers can catch one type at the boundary.
The CLI maps the three leaf categories at the bottom of this module to
process exit codes; everything else surfaces as an ordinary failure.
"""

from __future__ import annotations


class ArtifactError(Exception):
    """Base class for all package errors."""


class DomainTooSmallError(ArtifactError):
    """Grid has too few points for the requested operator."""


class InvalidIntervalError(ArtifactError):
    """Interval endpoints are out of order or out of range."""


class IndexOutOfRangeError(ArtifactError):
    """A grid index falls outside {0, ..., m - 1}."""


class ShapeError(ArtifactError):
    """An array argument has the wrong length or dimensions."""


class CodeConstructionError(ArtifactError):
    """Random sign-code construction failed its correlation check.

    Carries the smallest off-diagonal bound seen across attempts so the
    caller can report how close the construction came.
    """

    def __init__(self, message: str, best_offdiag: float | None = None):
        super().__init__(message)
        self.best_offdiag = best_offdiag


class CorruptBasisError(ArtifactError):
    """Basis lacks the sections a requested operation needs."""


class NotConvexLipschitzError(ArtifactError):
    """Target function violates a curvature or slope constraint.

    ``constraint`` names the first violated condition, for diagnostics.
    """

    def __init__(self, message: str, constraint: str = ""):
        super().__init__(message)
        self.constraint = constraint


class IneligibleLossError(ArtifactError):
    """Loss cannot be represented by the requested coefficient family."""


class DegenerateMarginError(ArtifactError):
    """Weak-learner accept/reject margins collapse for the given budget."""


class NonTerminationError(ArtifactError):
    """Iteration cap reached without meeting the progress criterion.

    ``trace`` holds the recorded progress measurements up to the cap.
    """

    def __init__(self, message: str, trace: list | None = None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


class UnsupportedError(ArtifactError):
    """Requested variant is recognized but deliberately not provided."""


class NumericalError(ArtifactError):
    """A numerical routine failed to converge to its tolerance."""


class DegreeTooLargeError(ArtifactError):
    """Polynomial degree exceeds what the construction supports."""


class FamilyMismatchError(ArtifactError):
    """Statistics family does not match the one an object was built for."""


# CLI-facing categories. The command layer translates these to exit codes.


class InvalidConfigError(ArtifactError):
    """Configuration file or flags are malformed or inconsistent."""

    exit_code = 2


class InfeasibleBudgetError(ArtifactError):
    """Requested computation exceeds the configured resource budget."""

    exit_code = 3


class GuaranteeViolationError(ArtifactError):
    """A certified quantity failed its promised bound at run time."""

    exit_code = 4

"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: bad input -> 1, pipeline failure -> 2,
strict quality rejection -> 3.
"""


class TmhkitError(Exception):
    """Base class for pipeline failures."""


class EmptyMaskError(TmhkitError):
    """A mask that must contain foreground is empty."""


class MissingMeniscusError(TmhkitError):
    """No tear-meniscus foreground remains after pupil exclusion."""


class SectionError(TmhkitError):
    """Measurement section is empty or invalid."""


class GeometryError(TmhkitError):
    """Synthetic-scene geometry violates its invariants (out of bounds, band
    overlapping pupil rows, degenerate profile)."""


class UndefinedIccError(TmhkitError):
    """ICC denominator is zero; carries the ANOVA decomposition."""

    def __init__(self, message, decomposition=None):
        super().__init__(message)
        self.decomposition = decomposition


class ConvergenceError(TmhkitError):
    """Iterative solver failed to converge; carries the iteration count."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class QualityRejectedError(TmhkitError):
    """Image rejected by the quality gate in strict mode."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report

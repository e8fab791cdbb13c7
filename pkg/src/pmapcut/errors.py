"""Closed set of error codes raised across the package.

Every exception carries a stable ``code`` string (its class name) so the CLI
and HTTP service can report machine-readable errors without string matching.
"""

from __future__ import annotations


class CutoutError(Exception):
    """Base class for all package errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


class NotFound(CutoutError):
    """Input file does not exist."""


class UnsupportedFormat(CutoutError):
    """File exists but is not a format this package reads."""


class CorruptData(CutoutError):
    """File claims a supported format but its contents are broken."""


class ValueOutOfRange(CutoutError):
    """A numeric value violates its documented range."""


class IoFailure(CutoutError):
    """Write or read failed at the OS level."""


class OutOfBounds(CutoutError):
    """Rectangle extends outside its reference image."""


class PlacementFailed(CutoutError):
    """Scene generator could not place all shapes (canvas too crowded)."""


class DimensionMismatch(CutoutError):
    """Rasters that must share dimensions do not."""


class EmptyInput(CutoutError):
    """An operation received an empty sample collection."""


class NegativeUnary(CutoutError):
    """Grid energy was given a negative unary cost."""


class EmptyForeground(CutoutError):
    """A cutout step produced a mask with no foreground pixels."""


class EmptyBackground(CutoutError):
    """A cutout step produced a mask with no background pixels."""


class ScaleTooLarge(CutoutError):
    """Proposal scale exceeds the image's smaller dimension."""


class ParseError(CutoutError):
    """Structured input text could not be parsed."""


class RankTooHigh(CutoutError):
    """Requested PCA rank exceeds what the samples support."""


class SingleClass(CutoutError):
    """Classifier training needs both classes present."""


class MissingClass(CutoutError):
    """Metric needs at least one sample of each true class."""


ERROR_CODES = tuple(
    cls.__name__ for cls in CutoutError.__subclasses__()
)

"""Exception types raised across the toolkit.

Everything derives from :class:`AadkitError` so callers (and the CLI) can
catch toolkit failures with a single except clause.
"""


class AadkitError(Exception):
    """Base class for all toolkit errors."""


class FormatError(AadkitError):
    """A file does not conform to the expected on-disk format."""


class ValidationError(AadkitError):
    """An invariant on input data or configuration is violated."""


class AlignmentError(ValidationError):
    """Matrices that must share frame counts / rates / grids do not."""


class DimensionError(AadkitError):
    """Channel or length mismatch between operands."""


class LagGridError(AadkitError):
    """A lag window does not land on integer sample shifts."""


class UnsupportedRateError(AadkitError):
    """A sample-rate conversion outside the supported direction or ratio."""


class SingularityError(AadkitError):
    """A linear system is singular; regularization is required."""


class MissingFeatureError(AadkitError):
    """A requested feature name is absent from a trial."""


class DegenerateTestError(AadkitError):
    """A statistical test is undefined for the given data (zero variance)."""


class CoverageError(AadkitError):
    """Cross-validation folds do not cover the dataset."""


class DomainError(AadkitError):
    """An input lies outside the domain of the operation."""

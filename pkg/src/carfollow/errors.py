"""Exception hierarchy shared across the package.

Every error raised by library code derives from :class:`CarFollowError`
so callers (and the CLI) can map failures to a single exit path.
"""


class CarFollowError(Exception):
    """Base class for all errors raised by this package."""


# --- trajectory parsing and pairing ---


class SchemaError(CarFollowError):
    """A required column is missing from the CSV header."""


class ParseError(CarFollowError):
    """A cell could not be parsed; the message carries the row number."""


class EmptyInput(CarFollowError):
    """The input contains no usable data."""


class UnknownVehicle(CarFollowError):
    """No track with the requested vehicle id."""


class NoLeader(CarFollowError):
    """The follower has no usable leader segment."""


class NonPositiveGap(CarFollowError):
    """Leader-follower gap is zero or negative inside the chosen range."""


class EmptySeries(CarFollowError):
    """Operation requires a non-empty series."""


# --- reconstruction ---


class TooFewAnchors(CarFollowError):
    """Fewer than two non-outlier points available for interpolation."""


class TooShort(CarFollowError):
    """Sequence too short for finite differences."""


class WindowTooLarge(CarFollowError):
    """Filter window exceeds the signal length."""


# --- supervised dataset construction ---


class TauTooLarge(CarFollowError):
    """Reaction time leaves no instances in the series."""


class TauNotGridAligned(CarFollowError):
    """Reaction time is not a positive multiple of the frame interval."""


class DegenerateSplit(CarFollowError):
    """Train/test split would leave one side empty."""


class TooFewInstances(CarFollowError):
    """Not enough instances for the requested number of folds."""


# --- model fitting ---


class EmptyTraining(CarFollowError):
    """Training data is empty."""


class LengthMismatch(CarFollowError):
    """Paired sequences have different lengths."""


# --- synthetic generation ---


class FrameOutOfRange(CarFollowError):
    """Spike frame index outside the generated track."""

"""Exception types shared across the toolkit.

Every failure mode surfaced by the public API is one of these classes, so
callers (and the CLI) can catch ``ToolkitError`` and map it to an exit code.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


# --- dataset parsing -------------------------------------------------------

class ParseError(ToolkitError):
    """A dataset artifact could not be parsed."""


class TruncatedFile(ParseError):
    """Binary point-cloud file length is not a multiple of the record size."""


class NonFiniteValue(ParseError):
    """Decoded NaN/Inf where finite values are required."""


class MissingKey(ParseError):
    """A required calibration key is absent."""


class WrongArity(ParseError):
    """A line carries the wrong number of fields."""


class MissingArtifact(ToolkitError):
    """One of a frame's four on-disk artifacts does not exist."""


class MissingSplitFile(ToolkitError):
    """train.txt / val.txt not found."""


class OverlappingSplit(ToolkitError):
    """A frame id appears in both the train and validation splits."""


class IoError(ToolkitError):
    """Filesystem failure while writing a dataset."""


# --- geometry / placement --------------------------------------------------

class NoPoints(ToolkitError):
    """A vehicle has no projected LiDAR points; the caller must skip it."""


class RegionOutOfImage(ToolkitError):
    """A trigger rectangle does not fit inside the camera image."""


class OverlayTooLarge(ToolkitError):
    """Trigger overlay covers more than the almost-solid budget (20%)."""


class OverlayOutOfBounds(ToolkitError):
    """Trigger overlay pixel falls outside the trigger rectangle."""


class MissingPrediction(ToolkitError):
    """No dense-region prediction exists for a (frame, vehicle) pair."""


# --- poisoning / analysis --------------------------------------------------

class InsufficientCandidates(ToolkitError):
    """Fewer usable frames than the poison rate requires."""


class EmptyManifest(ToolkitError):
    """A poison manifest contains no vehicle records."""


class SchemaError(ToolkitError):
    """A structured document does not match its declared schema."""


# --- evaluation ------------------------------------------------------------

class NoAttackedVehicles(ToolkitError):
    """ASR requested but the manifest lists no attacked vehicles."""


class FrameMismatch(ToolkitError):
    """Detector result files do not align with the ground-truth frames."""


# --- defenses --------------------------------------------------------------

class CodecFailure(ToolkitError):
    """Lossy image codec failed to encode or decode."""

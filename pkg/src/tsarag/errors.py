"""Exception hierarchy shared by every tsarag module.

Every error raised by the library derives from :class:`TsaragError`, so
callers (and the CLI exit-code mapping) can catch one base class.
"""


class TsaragError(Exception):
    """Base class for all tsarag errors."""


# --- data / windowing -------------------------------------------------------

class ShapeMismatch(TsaragError):
    """Array shapes are inconsistent with the operation's contract."""


class RangeTooShort(TsaragError):
    """Time range cannot hold a single (input, target) window pair."""


class DegenerateSeries(TsaragError):
    """A series is constant over the fit range, so it cannot be standardized."""


class MissingStats(TsaragError):
    """Inverse standardization requested but no stats are attached."""


class InvalidRatio(TsaragError):
    """Split ratio parts are non-positive or do not fit the series length."""


# --- prompt pool -------------------------------------------------------------

class ZeroVector(TsaragError):
    """Cosine similarity is undefined for a (near-)zero vector."""


class KOutOfRange(TsaragError):
    """Requested selection count is outside [1, pool size]."""


class NonFiniteGradient(TsaragError):
    """A gradient contains NaN or infinity."""


# --- predictor ----------------------------------------------------------------

class EmptyWindowSet(TsaragError):
    """Training requires at least one window."""


class NonFiniteLoss(TsaragError):
    """Training loss diverged to NaN/inf; lower the learning rate."""


class WrongHeadKind(TsaragError):
    """Operation requires a different head kind (regression vs classification)."""


class Timeout(TsaragError):
    """Remote model endpoint did not answer within the configured duration."""


class BadStatus(TsaragError):
    """Remote model endpoint answered with a non-200 status."""


class MalformedResponse(TsaragError):
    """Remote model endpoint answered with an unparseable body."""


# --- agents -------------------------------------------------------------------

class AmbiguousRequest(TsaragError):
    """Request text matches keyword rules of two or more task categories."""


class UnknownTask(TsaragError):
    """Request text matches no task category."""


class NoMissingValues(TsaragError):
    """Imputation metrics are undefined when nothing is missing."""


# --- anomaly -------------------------------------------------------------------

class InvalidWindow(TsaragError):
    """Moving-average window must be a positive number of timesteps."""


class EmptyValidation(TsaragError):
    """Thresholding requires a nonempty validation score vector."""


class NoFaults(TsaragError):
    """Fault detection rate is undefined without fault runs."""


# --- missingness ----------------------------------------------------------------

class InvalidRate(TsaragError):
    """Missing rate must lie strictly between 0 and 1."""


class BlockTooLong(TsaragError):
    """Mean block length exceeds half the series length."""


# --- clustering ------------------------------------------------------------------

class InvalidK(TsaragError):
    """Cluster count outside the supported range."""


class EmptyCluster(TsaragError):
    """A cluster stayed empty even after farthest-point reseeding."""


class SingleCluster(TsaragError):
    """Silhouette requires at least two clusters."""


class RangeTooSmall(TsaragError):
    """Elbow selection needs at least three candidate cluster counts."""


# --- metrics -----------------------------------------------------------------------

class NonBinary(TsaragError):
    """Flags/labels must contain only 0 and 1."""


class AllTargetsNearZero(TsaragError):
    """MAPE is undefined when every target is below the epsilon cutoff."""


# --- dataio / config ------------------------------------------------------------------

class ParseError(TsaragError):
    """A CSV cell could not be parsed; carries 1-based line and column."""

    def __init__(self, line: int, column: int, message: str = ""):
        self.line = line
        self.column = column
        detail = f"line {line}, column {column}"
        if message:
            detail = f"{detail}: {message}"
        super().__init__(detail)


class RaggedRows(TsaragError):
    """CSV rows have inconsistent lengths."""


class IoError(TsaragError):
    """Filesystem failure while writing results."""


class InvalidSpec(TsaragError):
    """Synthetic data or experiment configuration is out of range."""

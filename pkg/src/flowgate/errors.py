"""Exception types raised across the package."""


class FlowgateError(Exception):
    """Base class for all errors raised by this package."""


# --- capture / packet parsing ---

class UnrecognizedMagic(FlowgateError):
    """Capture file does not start with a known magic number."""


class TruncatedRecord(FlowgateError):
    """A capture record header claims more bytes than remain in the file."""


class TooShort(FlowgateError):
    """Frame too short to contain a link-layer header."""


class NotIPv4(FlowgateError):
    """Network-layer bytes do not start with an IPv4 header."""


class HeaderTruncated(FlowgateError):
    """A protocol header extends past the available bytes."""


class BadIHL(FlowgateError):
    """IPv4 header-length field below the legal minimum of 5 words."""


# --- dataset IO ---

class IoFailure(FlowgateError):
    """Underlying file operation failed."""


class MalformedRow(FlowgateError):
    """CSV row has the wrong column count, a non-numeric field, or an out-of-range value."""


# --- numeric core ---

class ShapeMismatch(FlowgateError):
    """Operand shapes are incompatible."""


class DetachedLoss(FlowgateError):
    """The loss tensor was not produced by any operation recorded on the tape."""


# --- training ---

class EmptyDataset(FlowgateError):
    """Training requires at least one sample."""


class AnomalyInTrainingSet(FlowgateError):
    """A row labeled as an anomaly reached a training stage."""


class EmptyClass(FlowgateError):
    """Classifier training requires samples from both classes."""


# --- flow ---

class NonFiniteInput(FlowgateError):
    """Input vector contains NaN or infinity."""


class NonFiniteIntermediate(FlowgateError):
    """A flow block produced a non-finite value; indicates a bug, not bad input."""


# --- synthesis ---

class NegativeSigma(FlowgateError):
    """Noise standard deviation must be non-negative."""


class EmptyInput(FlowgateError):
    """Synthesis requires a non-empty set of source vectors."""


# --- scoring / evaluation ---

class BadThreshold(FlowgateError):
    """Decision threshold must lie strictly between 0 and 1."""


class OneClassOnly(FlowgateError):
    """Metric needs at least one positive and one negative sample."""


class CheckpointMismatch(FlowgateError):
    """Checkpoint failed magic, stage, shape, or dimension verification."""

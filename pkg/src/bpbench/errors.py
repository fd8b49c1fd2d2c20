"""Exception types raised by the toolkit.

Every error that callers are expected to handle is a named subclass of
:class:`BpbenchError`, so library users can catch the base class at the
boundary and still branch on specific conditions when they need to.
"""


class BpbenchError(Exception):
    """Base class for all toolkit errors."""


# --- sampled-signal layer ---

class EmptySignal(BpbenchError):
    """Operation requires at least one sample."""


class InvalidRate(BpbenchError):
    """Sample rate must be positive and finite."""


class WindowOutOfRange(BpbenchError):
    """Requested time window does not lie inside the signal span."""


class TimeOutOfRange(BpbenchError):
    """Requested time point lies outside the sampled span."""


class FormatError(BpbenchError):
    """A file being read does not match the expected format."""


class AlignmentError(BpbenchError):
    """Channels of one record disagree on timing or sample rate."""


# --- filter layer ---

class UnrealizableSpec(BpbenchError):
    """No filter within the order cap satisfies the requested response."""


class InvalidCutoff(BpbenchError):
    """Cutoff frequency outside (0, Nyquist)."""


class RateMismatch(BpbenchError):
    """Filter and signal were built for different sample rates."""


class RateTooLow(BpbenchError):
    """Carrier rate too low for the requested carrier frequency."""


# --- estimator layer ---

class DegenerateSegment(BpbenchError):
    """Segment variance is too small for normalized correlation."""


class InsufficientData(BpbenchError):
    """Not enough samples to run the estimator."""


class NoOcclusionObserved(BpbenchError):
    """Correlation never dropped below the systolic threshold."""


class NoRecoveryObserved(BpbenchError):
    """A required threshold crossing never happened before deflation ended."""


class TooFewBeats(BpbenchError):
    """Oscillation envelope has fewer beats than the estimator needs."""


class NoUniquePeak(BpbenchError):
    """Envelope maximum is ambiguous (flat over a wide pressure span)."""


class MissingCrossing(BpbenchError):
    """Envelope never crosses the requested amplitude ratio."""


class InvalidPressurePair(BpbenchError):
    """Detected systolic pressure does not exceed diastolic."""


# --- simulator / configuration layer ---

class InvalidParams(BpbenchError):
    """Physiological or structural parameters out of range."""


class ProtocolViolation(BpbenchError):
    """Measurement protocol incompatible with the subject."""


class ConfigInvalid(BpbenchError):
    """Experiment configuration failed validation."""

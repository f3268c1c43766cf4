"""Exception types shared across the package."""

from __future__ import annotations


class NotefillError(Exception):
    """Base class for all package-specific errors."""


class MidiParseError(NotefillError):
    """Structurally malformed MIDI data.

    Carries the byte offset at which parsing failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class MidiRejectedError(NotefillError):
    """Well-formed MIDI that the pipeline does not ingest (e.g. non-4/4)."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class TokenRangeError(NotefillError):
    """A token value is outside its track vocabulary."""


class TransposeRangeError(NotefillError):
    """Transposition would push a pitch outside the supported MIDI range."""


class MaskedTokensError(NotefillError):
    """An operation that requires a mask-free sequence received mask tokens."""


class TokenFileError(NotefillError):
    """Corrupt or incompatible binary token file."""


class ScheduleError(NotefillError):
    """Timestep outside the diffusion schedule's valid range."""


class PosteriorDomainError(NotefillError):
    """(x_t, x_0) pair impossible under the forward process."""


class CheckpointError(NotefillError):
    """Unreadable, version-incompatible, or shape-incompatible checkpoint."""


class TrainingDivergedError(NotefillError):
    """Training loss became non-finite."""


class SamplingCancelledError(NotefillError):
    """A step observer requested that sampling stop."""


class GuidanceNotReadyError(NotefillError):
    """Classifier guidance requested with an untrained/unvalidated classifier."""


class MetricsError(NotefillError):
    """Degenerate input to the self-similarity evaluation."""


class ConfounderError(NotefillError):
    """Unusable image or reference for the metric-confounder pipeline."""

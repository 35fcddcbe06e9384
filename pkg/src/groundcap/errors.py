"""Exception types shared across the pipeline."""


class GroundcapError(Exception):
    """Base class for all pipeline errors."""


class DimensionError(GroundcapError):
    """Shapes or image sizes that were required to match do not."""


class EmptyMaskError(GroundcapError):
    """An operation that needs at least one set pixel got an empty mask."""


class RleCorruptionError(GroundcapError):
    """Run-length counts are inconsistent with the stated grid size."""


class PreconditionError(GroundcapError):
    """A documented precondition was violated before any work started."""


class ConfigError(GroundcapError):
    """Configuration file missing, unreadable, or semantically invalid."""


class TransportError(GroundcapError):
    """Backend unreachable after exhausting the retry budget."""


class ProtocolError(GroundcapError):
    """Backend answered with a non-retryable error status."""


class DecodeError(GroundcapError):
    """Backend answered 2xx but the body could not be interpreted."""


class ValidationError(GroundcapError):
    """Backend answered something that violates the response contract."""


class UnscriptedRequestError(GroundcapError):
    """A scripted mock received a request its script does not cover."""


class StageError(GroundcapError):
    """A pipeline stage cannot produce output for an image."""


class RecordParseError(GroundcapError):
    """A persisted record could not be parsed.

    Carries the 1-based line number for JSONL sources.
    """

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number

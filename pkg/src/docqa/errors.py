"""Exception hierarchy. Callers can catch DocQAError to get everything of ours."""

from __future__ import annotations


class DocQAError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(DocQAError):
    """The caller asked for something contradictory or empty (exit code 2)."""


class ValidationError(DocQAError):
    """Input data (files, boxes, schemas) violates a documented contract (exit code 2)."""


class DetectionError(DocQAError):
    """A detector backend failed; carries the backend id in the message."""

    def __init__(self, backend_id: str, message: str):
        super().__init__(f"[{backend_id}] {message}")
        self.backend_id = backend_id


class RecognitionError(DocQAError):
    """A recognizer backend failed for a crop or region."""


class TransportError(DocQAError):
    """All retry attempts against a model endpoint were exhausted."""


class ProtocolError(DocQAError):
    """The model endpoint answered, but not in the expected shape."""


class ParseError(DocQAError):
    """Model output could not be repaired into a structured answer."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class GroundingError(DocQAError):
    """Region ids could not be resolved against a crop sheet."""


class LayoutError(DocQAError):
    """A crop cannot be placed on the sheet canvas under the given layout."""


class PipelineError(DocQAError):
    """Wraps a stage failure so no error escapes without a stage label."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage={stage}: {cause}")
        self.stage = stage
        self.cause = cause

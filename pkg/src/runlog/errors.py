"""Error taxonomy shared by the domain, store, service and CLI layers."""

from __future__ import annotations


class RunlogError(Exception):
    """Base class for every error this package raises on purpose."""


class Invalid(RunlogError):
    """A value violates a type invariant or a malformed request was made."""


class InvalidTimestamps(Invalid):
    """A timestamp pair is ordered the wrong way round."""


class InvalidTransition(RunlogError):
    """A lifecycle event is not permitted in the entity's current state."""


class NotFound(RunlogError):
    """The addressed entity (or tag) does not exist."""


class InvalidQuery(Invalid):
    """A query carries a reversed range or otherwise malformed filter."""


class MissingField(Invalid):
    """A template was rendered without one of its required fields."""

    def __init__(self, field: str):
        super().__init__(f"missing required template field: {field}")
        self.field = field


class BrokenLineage(RunlogError):
    """A processing-pass input chain references an entity that is gone."""


class CorruptLineage(RunlogError):
    """A processing-pass input chain loops or points at a wrong kind."""


class Conflict(RunlogError):
    """A uniqueness rule would be violated (duplicate fill, template...)."""


class UnknownReference(NotFound):
    """A supplied entity reference does not resolve."""


class TooLarge(RunlogError):
    """An attachment exceeds the configured size limit."""


class UnknownDigest(NotFound):
    """No blob is stored under the requested content digest."""


class ParseError(RunlogError):
    """An import file line could not be parsed or failed validation."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ConnectionFailed(RunlogError):
    """The replay target could not be reached at all."""

"""Typed errors raised across the package.

Everything derives from ScribeError so callers can catch the whole family,
and the service layer can map subclasses onto HTTP statuses.
"""

from __future__ import annotations


class ScribeError(Exception):
    """Base class for all recurrent-scribe errors."""


# --- vectors / long-term memory ---

class VectorError(ScribeError):
    """Invalid embedding vector."""


class ZeroVectorError(VectorError):
    """A zero vector cannot be normalized."""


class DimensionMismatchError(VectorError):
    """Vectors of different dimensions were combined."""


class TimestepError(ScribeError):
    """Append would create a gap or duplicate in the timestep sequence."""


class StoreIOError(ScribeError):
    """Disk write or read of a memory store failed."""


class StoreVersionError(ScribeError):
    """Memory store manifest has an unknown format version."""


class StoreCorruptError(ScribeError):
    """Memory store directory contents are inconsistent."""


# --- prompt engine ---

class TemplateError(ScribeError):
    """Template could not be loaded or rendered (e.g. unfilled slot)."""


class BudgetError(ScribeError):
    """Prompt exceeds the token budget even with all excerpts removed."""


class ParseError(ScribeError):
    """LLM response did not match the labeled wire format.

    ``kind`` is one of ``missing-section``, ``missing-plans``,
    ``bad-selection``.  ``partial`` carries whatever was parsed before the
    failure (used by the engine's repair retry).
    """

    def __init__(self, kind: str, message: str, partial: object | None = None):
        super().__init__(message)
        self.kind = kind
        self.partial = partial


# --- providers ---

class ProviderError(ScribeError):
    """Base class for backend failures."""

    retryable = False


class TransportError(ProviderError):
    """Transient transport failure (timeout, connection, 5xx)."""

    retryable = True


class ProviderResponseError(ProviderError):
    """Non-retryable backend failure (client error, malformed response)."""


class EmptyTextError(ScribeError):
    """Embedding was requested for empty text."""


# --- sessions / engine ---

class InvalidMetaError(ScribeError):
    """Session metadata violates a mode/perspective constraint."""


class InvalidPlanError(ScribeError):
    """The chosen plan is not available for this step."""


class InvalidEditError(ScribeError):
    """Edit target does not exist (e.g. plan index out of range)."""


class StepInFlightError(ScribeError):
    """A step for this session is already executing."""


class EngineError(ScribeError):
    """An engine operation failed; session state is unchanged."""


class InitError(EngineError):
    """Session initialization failed after the repair retry."""


class StepError(EngineError):
    """A recurrence step failed after the repair retry."""


# --- persistence / service ---

class SessionIOError(ScribeError):
    """Session file could not be written or read."""


class SessionVersionError(ScribeError):
    """Session file has an unknown format version."""


class SessionCorruptError(ScribeError):
    """Session file contents are truncated or inconsistent."""


class MemoryStoreMissingError(ScribeError):
    """Session file references a memory store directory that is absent."""


class SessionNotFoundError(ScribeError):
    """No session with the requested id exists."""

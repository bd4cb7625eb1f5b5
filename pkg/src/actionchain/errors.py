"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ActionChainError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(ActionChainError):
    """Invalid scenario, run config, template tag, or endpoint setup."""


class NotFoundError(ActionChainError, KeyError):
    """A referenced agent, room, or object does not exist."""

    def __str__(self) -> str:
        return Exception.__str__(self)


class ActionParseError(ActionChainError, ValueError):
    """An action string could not be parsed."""

    def __init__(self, message: str, token: str | None = None):
        super().__init__(message)
        self.token = token


class MalformedActionError(ActionChainError, ValueError):
    """A structurally invalid action reached the simulator."""


class InvalidChainError(ActionChainError, ValueError):
    """An action chain violates its construction invariants."""


class ChainLogicError(ActionChainError, RuntimeError):
    """An operation was called in a state where it is not defined."""


class ExtractionError(ActionChainError, ValueError):
    """No JSON object could be recovered from planner output."""


class SchemaError(ActionChainError, ValueError):
    """A plan document does not match its purpose schema."""

    def __init__(self, message: str, missing: list[str] | None = None):
        super().__init__(message)
        self.missing = list(missing or [])


class ContextError(ActionChainError):
    """A prompt slot required by a template could not be filled."""

    def __init__(self, slot: str):
        super().__init__(f"unfilled prompt slot: <{slot}>")
        self.slot = slot


class BackendError(ActionChainError):
    """A planner backend produced output that could not be used.

    Carries the token usage and latency of the failed call so the caller can
    still account for it.
    """

    def __init__(self, message: str, *, usage=None, latency: float = 0.0,
                 prompt: str = "", response: str = ""):
        super().__init__(message)
        self.usage = usage
        self.latency = latency
        self.prompt = prompt
        self.response = response


class TransportError(ActionChainError):
    """The LLM endpoint could not be reached after all retry attempts."""

    def __init__(self, message: str, *, attempts: int = 0, latency: float = 0.0):
        super().__init__(message)
        self.attempts = attempts
        self.latency = latency


class ReplayError(ActionChainError):
    """A recorded trace does not reproduce its state digests."""

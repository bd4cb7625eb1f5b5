"""Planner-backend interface and token accounting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from ..chain import PURPOSES, ChainPlanDocument
from ..errors import BackendError, ConfigurationError
from ..prompting import PromptContext


def count_tokens(text: str) -> int:
    """Offline token estimate: one token per four UTF-8 bytes, rounded up."""
    return (len(text.encode("utf-8")) + 3) // 4


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")

    @property
    def total(self) -> int:
        return self.input_tokens + self.output_tokens

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(self.input_tokens + other.input_tokens,
                          self.output_tokens + other.output_tokens)

    def to_dict(self) -> dict:
        return {"input": self.input_tokens, "output": self.output_tokens}


@dataclass(frozen=True)
class PlanRequest:
    purpose: str
    context: PromptContext
    agents: tuple[int, ...]

    def __post_init__(self):
        if self.purpose not in PURPOSES:
            raise ConfigurationError(f"unknown purpose {self.purpose!r}")
        if self.purpose != self.context.purpose:
            raise ConfigurationError("request purpose and context purpose differ")


@dataclass(frozen=True)
class PlanResponse:
    document: ChainPlanDocument
    usage: TokenUsage
    latency: float
    prompt: str = ""
    response: str = ""
    attempts: int = 1


class PlannerBackend(Protocol):
    name: str

    def plan(self, request: PlanRequest) -> PlanResponse:
        """Return a schema-valid document or raise ``BackendError``."""


@dataclass(frozen=True)
class CallRecord:
    purpose: str
    agents: tuple[int, ...]
    prompt: str
    response: str
    usage: TokenUsage
    latency: float
    ok: bool
    error: str | None = None


@dataclass
class CallLog:
    """Counts every backend invocation, successful or not."""

    records: list[CallRecord] = field(default_factory=list)
    listeners: list[Callable[[CallRecord], None]] = field(default_factory=list)

    def _record(self, rec: CallRecord) -> None:
        self.records.append(rec)
        for fn in self.listeners:
            fn(rec)

    def invoke(self, backend: PlannerBackend, request: PlanRequest) -> PlanResponse:
        try:
            resp = backend.plan(request)
        except BackendError as exc:
            self._record(CallRecord(
                request.purpose, request.agents, exc.prompt, exc.response,
                exc.usage or TokenUsage(), exc.latency, False, str(exc),
            ))
            raise
        self._record(CallRecord(request.purpose, request.agents, resp.prompt, resp.response,
                                resp.usage, resp.latency, True))
        return resp

    @property
    def usage(self) -> TokenUsage:
        total = TokenUsage()
        for r in self.records:
            total = total + r.usage
        return total

    @property
    def latency(self) -> float:
        return sum(r.latency for r in self.records)

    def __len__(self) -> int:
        return len(self.records)


def plan(backend: PlannerBackend, request: PlanRequest) -> PlanResponse:
    return backend.plan(request)


def sum_usage(usages: Sequence[TokenUsage]) -> TokenUsage:
    total = TokenUsage()
    for u in usages:
        total = total + u
    return total

"""Planner backends: the scripted oracle and the chat-endpoint planner."""

from .base import (
    CallLog,
    CallRecord,
    PlannerBackend,
    PlanRequest,
    PlanResponse,
    TokenUsage,
    count_tokens,
    plan,
)
from .scripted import Oracle, ScriptedBackend

__all__ = [
    "CallLog",
    "CallRecord",
    "Oracle",
    "PlanRequest",
    "PlanResponse",
    "PlannerBackend",
    "ScriptedBackend",
    "TokenUsage",
    "count_tokens",
    "plan",
]

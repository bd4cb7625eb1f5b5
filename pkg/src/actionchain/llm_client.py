"""Minimal client for OpenAI-compatible chat-completions endpoints."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, fields
from typing import Any, Callable, Mapping

import httpx

from .backends.base import TokenUsage
from .errors import BackendError, ConfigurationError, TransportError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EndpointConfig:
    endpoint_url: str
    model: str
    temperature: float = 0.0
    timeout_seconds: float = 60.0
    credential_env_var: str = "OPENAI_API_KEY"
    max_attempts: int = 3
    backoff_seconds: float = 1.0

    def __post_init__(self):
        if not self.endpoint_url or not self.model:
            raise ConfigurationError("endpoint_url and model are required")
        if not 1 <= self.max_attempts <= 3:
            raise ConfigurationError("max_attempts must be between 1 and 3")
        if self.timeout_seconds <= 0:
            raise ConfigurationError("timeout_seconds must be positive")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "EndpointConfig":
        known = {f.name for f in fields(cls)}
        extra = sorted(set(data) - known)
        if extra:
            raise ConfigurationError(f"unknown llm config keys: {', '.join(extra)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None

    def credential(self) -> str:
        value = os.environ.get(self.credential_env_var)
        if not value:
            raise ConfigurationError(f"environment variable {self.credential_env_var} is not set")
        return value


@dataclass(frozen=True)
class Completion:
    text: str
    usage: TokenUsage
    latency: float
    attempts: int


class ChatClient:
    """Blocking chat-completions client with bounded retry.

    Timeouts, connection failures, and 5xx replies are retried with
    exponential backoff; 4xx replies fail at once as configuration errors.
    The credential is read from the environment per call and never logged.
    """

    def __init__(self, config: EndpointConfig, *, http: httpx.Client | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self._http = http or httpx.Client()
        self._sleep = sleep

    def close(self) -> None:
        self._http.close()

    def complete(self, system: str, user: str) -> Completion:
        cfg = self.config
        headers = {"Authorization": f"Bearer {cfg.credential()}"}
        body = {
            "model": cfg.model,
            "messages": [{"role": "system", "content": system}, {"role": "user", "content": user}],
            "temperature": cfg.temperature,
        }
        start = time.perf_counter()
        last = ""
        for attempt in range(1, cfg.max_attempts + 1):
            try:
                reply = self._http.post(cfg.endpoint_url, json=body, headers=headers,
                                        timeout=cfg.timeout_seconds)
            except httpx.TimeoutException:
                last = "request timed out"
            except httpx.TransportError as exc:
                last = f"connection failed: {type(exc).__name__}"
            else:
                if reply.status_code >= 500:
                    last = f"server error {reply.status_code}"
                elif reply.status_code >= 400:
                    raise ConfigurationError(f"endpoint rejected the request with {reply.status_code}")
                else:
                    return self._parse(reply, attempt, time.perf_counter() - start)
            log.warning("llm call attempt %d/%d failed: %s", attempt, cfg.max_attempts, last)
            if attempt < cfg.max_attempts:
                self._sleep(cfg.backoff_seconds * 2 ** (attempt - 1))
        raise TransportError(f"giving up after {cfg.max_attempts} attempts: {last}",
                             attempts=cfg.max_attempts, latency=time.perf_counter() - start)

    @staticmethod
    def _parse(reply: httpx.Response, attempts: int, latency: float) -> Completion:
        try:
            payload = reply.json()
            text = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise BackendError("malformed completion payload", latency=latency,
                               response=reply.text) from None
        usage = payload.get("usage") or {}
        if not usage:
            log.warning("endpoint reported no token usage; recording zero")
        return Completion(
            text=text if isinstance(text, str) else "",
            usage=TokenUsage(int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))),
            latency=latency,
            attempts=attempts,
        )


def complete(config: EndpointConfig, system: str, user: str) -> Completion:
    client = ChatClient(config)
    try:
        return client.complete(system, user)
    finally:
        client.close()

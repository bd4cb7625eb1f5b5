"""Planner backend that sends the rendered templates to a chat endpoint."""

from __future__ import annotations

from ..chain import parse_chain_document
from ..errors import BackendError, ExtractionError, SchemaError
from ..llm_client import ChatClient, EndpointConfig
from .base import PlanRequest, PlanResponse

SYSTEM_PROMPT = (
    "You plan for a team of household robots. Use only actions from the given "
    "action spaces and answer with a single JSON object."
)


class LLMBackend:
    name = "llm"

    def __init__(self, client: ChatClient | EndpointConfig, system_prompt: str = SYSTEM_PROMPT):
        self.client = client if isinstance(client, ChatClient) else ChatClient(client)
        self.system_prompt = system_prompt

    def plan(self, request: PlanRequest) -> PlanResponse:
        prompt = request.context.render()
        done = self.client.complete(self.system_prompt, prompt)
        ids = sorted(request.agents) if request.purpose != "assignment" else None
        try:
            doc = parse_chain_document(done.text, request.purpose, robot_ids=ids,
                                       live_agents=request.context.view.agents)
        except (ExtractionError, SchemaError) as exc:
            raise BackendError(f"{request.purpose} output unusable: {exc}", usage=done.usage,
                               latency=done.latency, prompt=prompt, response=done.text) from None
        return PlanResponse(doc, done.usage, done.latency, prompt, done.text, done.attempts)

"""Action chains: intention-bound action sequences with an execution cursor.

A chain never mutates; every operation returns a new chain. The cursor
separates the executed prefix ``actions[:cursor]`` from the unexecuted
suffix ``actions[cursor:]``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from typing import Any, Iterable, Sequence

import jsonschema

from .actions import PrimitiveAction, parse_action
from .errors import (
    ActionParseError,
    ChainLogicError,
    ExtractionError,
    InvalidChainError,
    SchemaError,
)

PURPOSES = ("assignment", "refinement", "insertion", "conflict")


@dataclass(frozen=True)
class ActionChain:
    intention: str
    actions: tuple[PrimitiveAction, ...]
    cursor: int = 0
    inference_process: str | None = None
    # (cursor at insertion, inserted sub-chain intention), oldest first
    insertions: tuple[tuple[int, str], ...] = field(default=())

    def __post_init__(self):
        if not 0 <= self.cursor <= len(self.actions):
            raise InvalidChainError(f"cursor {self.cursor} outside [0, {len(self.actions)}]")

    @property
    def exhausted(self) -> bool:
        return self.cursor == len(self.actions)

    @property
    def executed(self) -> tuple[PrimitiveAction, ...]:
        return self.actions[: self.cursor]

    @property
    def remaining(self) -> tuple[PrimitiveAction, ...]:
        return self.actions[self.cursor:]

    @property
    def active_intention(self) -> str:
        """The intention currently being served: the latest insertion, if any."""
        return self.insertions[-1][1] if self.insertions else self.intention

    def peek_next(self) -> PrimitiveAction | None:
        """The latest unexecuted action, or None when exhausted."""
        return None if self.exhausted else self.actions[self.cursor]

    def advance(self) -> "ActionChain":
        if self.exhausted:
            raise ChainLogicError("cannot advance an exhausted chain")
        return replace(self, cursor=self.cursor + 1)

    def splice_unexecuted(
        self, replacement: Iterable[PrimitiveAction | str], intention: str | None = None
    ) -> "ActionChain":
        """Replace the unexecuted suffix, keeping the executed prefix.

        Without ``intention`` the chain's intention and insertion trail are
        kept byte-for-byte. Passing ``intention`` rebinds the chain to a new
        sub-goal, which is what conflict resolution does. An empty
        replacement retires the chain (it becomes exhausted).
        """
        new = tuple(parse_action(a) for a in replacement)
        chain = replace(self, actions=self.executed + new)
        if intention is not None:
            if not intention.strip():
                raise InvalidChainError("intention must be non-empty")
            chain = replace(chain, intention=intention, insertions=())
        return chain

    def insert_for_replan(self, sub_chain: "ActionChain") -> "ActionChain":
        """Replace the replan placeholder at the cursor with ``sub_chain``'s actions."""
        nxt = self.peek_next()
        if nxt is None or not nxt.is_replan:
            raise ChainLogicError(f"next action is {nxt}, not replan")
        actions = self.executed + tuple(sub_chain.actions) + self.actions[self.cursor + 1:]
        return replace(
            self,
            actions=actions,
            insertions=self.insertions + ((self.cursor, sub_chain.intention),),
        )

    def render(self) -> str:
        lines = [f"intention: {self.active_intention}"]
        for i, a in enumerate(self.actions):
            mark = "done" if i < self.cursor else ("next" if i == self.cursor else "todo")
            lines.append(f"  [{mark}] {a}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "intention": self.intention,
            "actions": [str(a) for a in self.actions],
            "cursor": self.cursor,
            "insertions": [list(x) for x in self.insertions],
        }


def new_chain(
    intention: str, actions: Sequence[PrimitiveAction | str], inference_process: str | None = None
) -> ActionChain:
    if not isinstance(intention, str) or not intention.strip():
        raise InvalidChainError("intention must be a non-empty string")
    if not actions:
        raise InvalidChainError("an action chain needs at least one action")
    return ActionChain(intention, tuple(parse_action(a) for a in actions), 0, inference_process)


def chain_from_dict(d: dict) -> ActionChain:
    chain = new_chain(d["intention"], d["actions"])
    return replace(
        chain,
        cursor=int(d.get("cursor", 0)),
        insertions=tuple((int(c), str(t)) for c, t in d.get("insertions", [])),
    )


# -- plan documents -----------------------------------------------------------


@dataclass(frozen=True)
class AgentPlan:
    robot_id: int
    action_chain: tuple[PrimitiveAction, ...]
    intention: str | None = None
    rationale: str | None = None


@dataclass(frozen=True)
class ChainPlanDocument:
    """Planner output normalised across the four output schemas."""

    purpose: str
    plans: tuple[AgentPlan, ...]
    reason: str | None = None

    def plan_for(self, robot_id: int) -> AgentPlan | None:
        for p in self.plans:
            if p.robot_id == robot_id:
                return p
        return None


def extract_json_object(text: str) -> dict:
    """Recover the first balanced top-level JSON object from noisy text.

    Leading/trailing prose and markdown fences are ignored. One repair pass
    strips trailing commas before giving up.
    """
    if not isinstance(text, str):
        raise ExtractionError("planner output is not text")
    start = text.find("{")
    while start != -1:
        end = _balanced_end(text, start)
        if end is None:
            break
        candidate = text[start:end]
        for attempt in (candidate, _strip_trailing_commas(candidate)):
            try:
                value = json.loads(attempt)
            except json.JSONDecodeError:
                continue
            if isinstance(value, dict):
                return value
        start = text.find("{", end)
    raise ExtractionError("no JSON object found in planner output")


def _balanced_end(text: str, start: int) -> int | None:
    depth = 0
    in_str = False
    esc = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_str:
            if esc:
                esc = False
            elif ch == "\\":
                esc = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i + 1
    return None


def _strip_trailing_commas(src: str) -> str:
    out = []
    in_str = False
    esc = False
    i = 0
    while i < len(src):
        ch = src[i]
        if in_str:
            out.append(ch)
            if esc:
                esc = False
            elif ch == "\\":
                esc = True
            elif ch == '"':
                in_str = False
            i += 1
            continue
        if ch == '"':
            in_str = True
        elif ch == ",":
            j = i + 1
            while j < len(src) and src[j].isspace():
                j += 1
            if j < len(src) and src[j] in "}]":
                i += 1
                continue
        out.append(ch)
        i += 1
    return "".join(out)


@lru_cache(maxsize=None)
def load_schema(purpose: str) -> dict:
    if purpose not in PURPOSES:
        raise SchemaError(f"unknown purpose {purpose!r}")
    text = resources.files("actionchain").joinpath(f"data/schemas/{purpose}.schema.json").read_text()
    return json.loads(text)


_REQUIRED = {
    "assignment": ("reason", "robot_id_task_pairs"),
    "refinement": ("inference_process", "intention", "action_chain"),
    "insertion": ("inference_process", "intention", "action_chain"),
    "conflict": ("reason_agent0", "action_chain0", "intention0",
                 "reason_agent1", "action_chain1", "intention1"),
}


def _actions(raw: Any, where: str) -> tuple[PrimitiveAction, ...]:
    try:
        return tuple(parse_action(a) for a in raw)
    except ActionParseError as exc:
        raise SchemaError(f"{where}: {exc}") from None


def _robot_id(raw: Any) -> int:
    if isinstance(raw, bool):
        raise SchemaError(f"robot_id {raw!r} is not an agent id")
    if isinstance(raw, int):
        return raw
    m = re.fullmatch(r"\s*(?:agent|robot)?\s*_?(\d+)\s*", str(raw), re.IGNORECASE)
    if not m:
        raise SchemaError(f"robot_id {raw!r} is not an agent id")
    return int(m.group(1))


def document_from_payload(
    payload: dict, purpose: str, robot_ids: Sequence[int] | None = None,
    live_agents: Iterable[int] | None = None,
) -> ChainPlanDocument:
    missing = [k for k in _REQUIRED[purpose] if k not in payload]
    if missing:
        raise SchemaError(f"{purpose} output missing keys: {', '.join(missing)}", missing)
    try:
        jsonschema.validate(payload, load_schema(purpose))
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"{purpose} output invalid: {exc.message}") from None

    if purpose == "assignment":
        plans = []
        for i, pair in enumerate(payload["robot_id_task_pairs"]):
            plans.append(AgentPlan(
                robot_id=_robot_id(pair["robot_id"]),
                action_chain=_actions(pair["action_chain"], f"pair {i}"),
                intention=pair.get("intention"),
                rationale=pair.get("reason"),
            ))
        doc = ChainPlanDocument(purpose, tuple(plans), payload["reason"])
    elif purpose == "conflict":
        a, b = tuple(robot_ids) if robot_ids is not None else (0, 1)
        doc = ChainPlanDocument(purpose, (
            AgentPlan(a, _actions(payload["action_chain0"], "action_chain0"),
                      payload["intention0"], payload["reason_agent0"]),
            AgentPlan(b, _actions(payload["action_chain1"], "action_chain1"),
                      payload["intention1"], payload["reason_agent1"]),
        ))
    else:
        (rid,) = tuple(robot_ids) if robot_ids is not None else (0,)
        doc = ChainPlanDocument(purpose, (
            AgentPlan(rid, _actions(payload["action_chain"], "action_chain"),
                      payload["intention"], payload["inference_process"]),
        ))
    if live_agents is not None:
        live = set(live_agents)
        for p in doc.plans:
            if p.robot_id not in live:
                raise SchemaError(f"robot_id {p.robot_id} is not a live agent")
    return doc


def parse_chain_document(
    text: str, purpose: str, robot_ids: Sequence[int] | None = None,
    live_agents: Iterable[int] | None = None,
) -> ChainPlanDocument:
    """Parse planner output for ``purpose``.

    ``robot_ids`` names the agent(s) a single-agent (refinement/insertion)
    or pairwise (conflict) payload belongs to, since those schemas carry no
    ids of their own.
    """
    if purpose not in PURPOSES:
        raise SchemaError(f"unknown purpose {purpose!r}")
    return document_from_payload(extract_json_object(text), purpose, robot_ids, live_agents)


def payload_from_document(doc: ChainPlanDocument) -> dict:
    if doc.purpose == "assignment":
        pairs = []
        for p in doc.plans:
            pair: dict[str, Any] = {"robot_id": str(p.robot_id),
                                    "action_chain": [str(a) for a in p.action_chain]}
            if p.intention is not None:
                pair["intention"] = p.intention
            if p.rationale is not None:
                pair["reason"] = p.rationale
            pairs.append(pair)
        return {"reason": doc.reason or "", "robot_id_task_pairs": pairs}
    if doc.purpose == "conflict":
        p0, p1 = doc.plans
        return {
            "reason_agent0": p0.rationale or "",
            "action_chain0": [str(a) for a in p0.action_chain],
            "intention0": p0.intention or "",
            "reason_agent1": p1.rationale or "",
            "action_chain1": [str(a) for a in p1.action_chain],
            "intention1": p1.intention or "",
        }
    (p,) = doc.plans
    return {
        "inference_process": p.rationale or "",
        "intention": p.intention or "",
        "action_chain": [str(a) for a in p.action_chain],
    }


def render_chain_document(doc: ChainPlanDocument) -> str:
    return json.dumps(payload_from_document(doc), indent=2)

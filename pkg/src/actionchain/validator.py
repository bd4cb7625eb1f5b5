"""Classify each agent's next action before it is allowed to execute."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .actions import PrimitiveAction
from .chain import ActionChain
from .errors import ChainLogicError
from .memory import WorldView

EXECUTABLE = "executable"
NEEDS_INSERTION = "needs_insertion"
INFEASIBLE = "infeasible"
CONFLICT = "conflict"


@dataclass(frozen=True)
class Verdict:
    kind: str
    reason: str | None = None
    peer: int | None = None
    contested: int | None = None

    def __post_init__(self):
        if self.kind not in (EXECUTABLE, NEEDS_INSERTION, INFEASIBLE, CONFLICT):
            raise ValueError(f"unknown verdict kind {self.kind!r}")
        if self.kind == CONFLICT and (self.peer is None or self.contested is None):
            raise ValueError("a conflict verdict names both a peer and an object")
        if self.kind == INFEASIBLE and not self.reason:
            raise ValueError("an infeasible verdict carries a reason")

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.reason is not None:
            d["reason"] = self.reason
        if self.peer is not None:
            d["peer"] = self.peer
            d["contested"] = self.contested
        return d


def executable() -> Verdict:
    return Verdict(EXECUTABLE)


def needs_insertion() -> Verdict:
    return Verdict(NEEDS_INSERTION)


def infeasible(reason: str) -> Verdict:
    return Verdict(INFEASIBLE, reason=reason)


def conflict(peer: int, contested: int) -> Verdict:
    return Verdict(CONFLICT, peer=peer, contested=contested)


def extract_target(action: PrimitiveAction) -> int | None:
    """The object an action manipulates; for put_in that is the moved object."""
    if action.verb in ("grasp", "open", "put_in", "put_on"):
        return action.args[0].id
    return None


def claimed_objects(view: WorldView, action: PrimitiveAction | None, intention: str | None) -> set[int]:
    """Objects an agent is about to touch or has committed to."""
    out: set[int] = set()
    if action is not None:
        t = extract_target(action)
        if t is not None:
            out.add(t)
    if intention:
        out |= view.intention_objects(intention)
    return out


def classify(
    agent: int,
    chain: ActionChain,
    view: WorldView,
    all_next: Mapping[int, tuple[PrimitiveAction | None, str | None]],
    *,
    check_feasibility: bool = True,
) -> Verdict:
    """Decide what happens to ``agent``'s next action.

    The checks run in a fixed order: replan placeholder, then feasibility in
    the known world, then overlap with a lower-id agent's next action or
    intention. Only the higher-id agent of an overlapping pair is flagged, so
    each pair is resolved once.
    """
    action = chain.peek_next()
    if action is None:
        raise ChainLogicError(f"agent {agent} has an exhausted chain; construct a new one first")
    if action.is_replan:
        return needs_insertion()
    if check_feasibility and action not in view.legal_actions(agent):
        return infeasible(view.explain_infeasible(agent, action))
    mine = claimed_objects(view, action, all_next.get(agent, (None, chain.active_intention))[1])
    if not mine:
        return executable()
    for peer in sorted(all_next):
        if peer >= agent:
            break
        p_action, p_intention = all_next[peer]
        overlap = mine & claimed_objects(view, p_action, p_intention)
        if overlap:
            return conflict(peer, min(overlap))
    return executable()

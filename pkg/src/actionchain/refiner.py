"""Chain construction and the three refinement mechanisms.

Every mechanism asks the planner backend for a plan, checks the result
against the mechanism's postconditions, retries once on failure, and then
falls back to a fixed safe plan so the episode never stalls.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .actions import EXPLORE, PrimitiveAction
from .backends.base import CallLog, PlannerBackend, PlanRequest
from .chain import ActionChain, AgentPlan, new_chain
from .errors import BackendError, ChainLogicError
from .memory import SharedMemory, WorldView
from .prompting import CaseLibrary, build_context
from .validator import extract_target

log = logging.getLogger(__name__)

NO_ACTION_CHAIN = "no_action_chain"
NO_CHAIN_LEVEL_REFINEMENT = "no_chain_level_refinement"
NO_INTENTION_BINDING = "no_intention_binding"
NO_PROACTIVE_REPLAN = "no_proactive_replan"
ABLATIONS = (NO_ACTION_CHAIN, NO_CHAIN_LEVEL_REFINEMENT, NO_INTENTION_BINDING, NO_PROACTIVE_REPLAN)

UNSPECIFIED = "unspecified"
FALLBACK_INTENTION = "explore current room"
DEFAULT_ATTEMPTS = 2

Emit = Callable[..., None]


def _noop(stage: str, **fields) -> None:
    pass


class PostconditionError(Exception):
    """A backend plan violated a mechanism's postconditions."""


@dataclass
class Refiner:
    backend: PlannerBackend
    memory: SharedMemory
    calls: CallLog = field(default_factory=CallLog)
    ablations: frozenset[str] = frozenset()
    library: CaseLibrary | None = None
    attempts: int = DEFAULT_ATTEMPTS
    emit: Emit = _noop

    # -- shared plumbing -----------------------------------------------------

    @property
    def allow_replan(self) -> bool:
        return NO_PROACTIVE_REPLAN not in self.ablations

    @property
    def intentions_visible(self) -> bool:
        return NO_INTENTION_BINDING not in self.ablations

    def _request(self, view: WorldView, purpose: str, agents: Sequence[int],
                 chains: Mapping[int, ActionChain | None], **extra) -> PlanRequest:
        ctx = build_context(
            self.memory, view, purpose, agents, chains=chains, library=self.library,
            allow_replan=self.allow_replan, intentions_visible=self.intentions_visible, **extra,
        )
        return PlanRequest(purpose, ctx, tuple(agents))

    def shape(self, actions: Sequence[PrimitiveAction]) -> list[PrimitiveAction]:
        """Apply the chain-shape ablations to backend output."""
        acts = list(actions)
        if not self.allow_replan and any(a.is_replan for a in acts):
            log.warning("dropping replan placeholders: proactive replanning is disabled")
            acts = [a for a in acts if not a.is_replan]
        if NO_ACTION_CHAIN in self.ablations and acts:
            real = [a for a in acts if not a.is_replan]
            acts = real[:1] or [EXPLORE]
        return acts

    def intention(self, text: str | None, actions: Sequence[PrimitiveAction], view: WorldView) -> str:
        if not self.intentions_visible:
            return UNSPECIFIED
        if text and text.strip():
            return text.strip()
        return synthesize_intention(actions, view)

    def _first_ok(self, view: WorldView, agent: int, actions: Sequence[PrimitiveAction],
                  trigger: PrimitiveAction | None = None) -> None:
        first = actions[0]
        if first.is_replan:
            if not self.allow_replan:
                raise PostconditionError("replan placeholders are disabled")
            return
        if trigger is not None and first == trigger:
            raise PostconditionError(f"repeats the failing action {first}")
        if first not in view.legal_actions(agent):
            raise PostconditionError(
                f"first action {first} is not executable: {view.explain_infeasible(agent, first)}")

    def _ask(self, request: PlanRequest, check: Callable) -> tuple[object | None, int]:
        """Call the backend up to ``attempts`` times; return (checked result, attempts used)."""
        for attempt in range(1, self.attempts + 1):
            try:
                resp = self.calls.invoke(self.backend, request)
                return check(resp.document), attempt
            except (BackendError, PostconditionError) as exc:
                log.info("%s attempt %d rejected: %s", request.purpose, attempt, exc)
                self.emit("refine", mechanism=request.purpose, agents=list(request.agents),
                          outcome="rejected", attempt=attempt, error=str(exc))
        return None, self.attempts

    # -- Stage 1: construction -------------------------------------------------

    def construct(self, view: WorldView, agents: Sequence[int],
                  chains: Mapping[int, ActionChain | None]) -> dict[int, ActionChain]:
        """Build fresh chains for ``agents`` with one batched assignment call."""
        want = sorted(agents)
        out: dict[int, ActionChain] = {}
        for attempt in range(1, self.attempts + 1):
            if not want:
                break
            request = self._request(view, "assignment", want, chains)
            try:
                doc = self.calls.invoke(self.backend, request).document
            except BackendError as exc:
                self.emit("construct", agents=want, outcome="rejected", attempt=attempt, error=str(exc))
                continue
            for a in list(want):
                plan = doc.plan_for(a)
                try:
                    out[a] = self._accept_assignment(view, a, plan)
                    want.remove(a)
                except PostconditionError as exc:
                    self.emit("construct", agents=[a], outcome="rejected", attempt=attempt, error=str(exc))
        for a in want:
            out[a] = new_chain(FALLBACK_INTENTION, [EXPLORE])
        for a in sorted(out):
            self.emit("construct", agents=[a], outcome="fallback" if a in want else "accepted",
                      chain=out[a].to_dict())
        return out

    def _accept_assignment(self, view: WorldView, agent: int, plan: AgentPlan | None) -> ActionChain:
        if plan is None:
            raise PostconditionError(f"no plan for agent {agent}")
        acts = self.shape(plan.action_chain)
        if not acts:
            raise PostconditionError(f"empty chain for agent {agent}")
        self._first_ok(view, agent, acts)
        return new_chain(self.intention(plan.intention, acts, view), acts, plan.rationale)

    # -- Stage 3: refinement mechanisms --------------------------------------

    def chain_refinement(self, agent: int, chain: ActionChain, reason: str, view: WorldView,
                         chains: Mapping[int, ActionChain | None],
                         trigger: PrimitiveAction | None = None) -> ActionChain:
        """Rewrite the unexecuted suffix of ``chain``, keeping its intention.

        An empty suffix from the backend retires the chain (its sub-goal is
        finished or taken over), after which the engine constructs a new one.
        """
        trigger = trigger if trigger is not None else chain.peek_next()
        chains = {**chains, agent: chain}
        request = self._request(view, "refinement", [agent], chains, reason=reason, trigger=trigger)

        def check(doc) -> ActionChain:
            plan = doc.plan_for(agent)
            if plan is None:
                raise PostconditionError("no plan returned")
            acts = self.shape(plan.action_chain)
            if NO_CHAIN_LEVEL_REFINEMENT in self.ablations and acts:
                acts = acts[:1] + list(chain.remaining[1:])
            if acts:
                self._first_ok(view, agent, acts, trigger)
            if plan.intention is not None and plan.intention != chain.intention and self.intentions_visible:
                log.warning("refinement changed the intention %r; restoring it", chain.intention)
            return chain.splice_unexecuted(acts)

        result, attempts = self._ask(request, check)
        outcome = "accepted"
        if result is None:
            result, outcome = chain.splice_unexecuted([EXPLORE]), "fallback"
        self.emit("refine", mechanism="refinement", agents=[agent], outcome=outcome,
                  attempt=attempts, reason=reason, chain=result.to_dict())
        return result

    def conflict_resolution(self, agent_a: int, agent_b: int, chains: Mapping[int, ActionChain | None],
                            contested: int, view: WorldView) -> tuple[ActionChain, ActionChain]:
        """Jointly rewrite two chains so only one of them keeps ``contested``.

        Returns the chains ordered by agent id.
        """
        if agent_a == agent_b:
            raise ChainLogicError("an agent cannot conflict with itself")
        lo, hi = sorted((agent_a, agent_b))
        c_lo, c_hi = chains[lo], chains[hi]
        if c_lo is None or c_hi is None:
            raise ChainLogicError("both agents need a chain to resolve a conflict")
        request = self._request(view, "conflict", [lo, hi], chains, contested=contested,
                                trigger=c_hi.peek_next())

        def check(doc):
            out = []
            for agent, chain in ((lo, c_lo), (hi, c_hi)):
                plan = doc.plan_for(agent)
                acts = self.shape(plan.action_chain)
                if not acts:
                    raise PostconditionError(f"empty chain for agent {agent}")
                self._first_ok(view, agent, acts)
                out.append(chain.splice_unexecuted(acts, self.intention(plan.intention, acts, view)))
            touching = [c for c in out if contested in _refs(c.remaining)]
            if len(touching) > 1:
                raise PostconditionError(f"both chains still reference {view.name_of(contested)}")
            if self.intentions_visible:
                shared = (view.intention_objects(out[0].active_intention)
                          & view.intention_objects(out[1].active_intention))
                if shared:
                    raise PostconditionError(f"intentions still share {sorted(shared)}")
            return tuple(out)

        result, attempts = self._ask(request, check)
        outcome = "accepted"
        if result is None:
            result = (c_lo, c_hi.splice_unexecuted([EXPLORE], self.intention(FALLBACK_INTENTION, [EXPLORE], view)))
            outcome = "fallback"
        self.emit("refine", mechanism="conflict", agents=[lo, hi], outcome=outcome, attempt=attempts,
                  contested=contested, chains=[c.to_dict() for c in result])
        return result

    def chain_insertion(self, agent: int, chain: ActionChain, view: WorldView,
                        chains: Mapping[int, ActionChain | None]) -> ActionChain:
        """Replace the replan placeholder at the cursor with a fresh sub-chain."""
        nxt = chain.peek_next()
        if nxt is None or not nxt.is_replan:
            raise ChainLogicError(f"agent {agent}'s next action is {nxt}, not replan")
        chains = {**chains, agent: chain}
        request = self._request(view, "insertion", [agent], chains)

        def check(doc) -> ActionChain:
            plan = doc.plan_for(agent)
            if plan is None:
                raise PostconditionError("no plan returned")
            acts = self.shape(plan.action_chain)
            if not acts:
                raise PostconditionError("empty sub-chain")
            if acts[0].is_replan:
                raise PostconditionError("sub-chain starts with replan")
            self._first_ok(view, agent, acts)
            return new_chain(self.intention(plan.intention, acts, view), acts)

        sub, attempts = self._ask(request, check)
        outcome = "accepted"
        if sub is None:
            sub, outcome = new_chain(self.intention(FALLBACK_INTENTION, [EXPLORE], view), [EXPLORE]), "fallback"
        result = chain.insert_for_replan(sub)
        self.emit("refine", mechanism="insertion", agents=[agent], outcome=outcome, attempt=attempts,
                  inserted=[str(a) for a in sub.actions], intention=sub.intention,
                  chain=result.to_dict())
        return result


def _refs(actions: Sequence[PrimitiveAction]) -> set[int]:
    return {r.id for a in actions for r in a.refs()}


def synthesize_intention(actions: Sequence[PrimitiveAction], view: WorldView) -> str:
    """Stand-in intention for plans that arrive without one."""
    objs = []
    for a in actions:
        t = extract_target(a)
        if t is not None and t in view.targets and t not in objs:
            objs.append(t)
    if objs:
        return "handle " + ", ".join(view.name_of(o) for o in objs)
    rooms = [r.id for a in actions for r in a.refs() if view.is_room(r.id)]
    if rooms:
        return f"go to {view.name_of(rooms[-1])}"
    return "follow the assigned actions"

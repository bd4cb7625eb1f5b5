"""Deterministic greedy planner that stands in for an LLM.

The oracle reads only the structured half of the prompt context (the known
world view, chains, trigger, and contested object), so its decisions never
depend on prompt wording. It still renders the full prompt so that token
accounting matches what an LLM would have been sent.
"""

from __future__ import annotations

import time
from typing import Iterable

from ..actions import EXPLORE, GOAL, REPLAN, WAIT, PrimitiveAction, Ref, goto, grasp, open_, put_on
from ..chain import AgentPlan, ChainPlanDocument, render_chain_document
from ..errors import ConfigurationError
from ..memory import WorldView
from ..prompting import PromptContext
from ..validator import extract_target
from ..world import HOLD_CAPACITY
from .base import PlanRequest, PlanResponse, TokenUsage, count_tokens

IDLE = "idle"
UNSPECIFIED = "unspecified"
INF = float("inf")


class Oracle:
    """Greedy policies over one prompt context."""

    def __init__(self, ctx: PromptContext):
        self.ctx = ctx
        self.v: WorldView = ctx.view

    # -- knowledge helpers ---------------------------------------------------

    def room(self, agent: int) -> int:
        return self.v.agent_room(agent)

    def held_targets(self, agent: int) -> list[int]:
        return [h for h in self.v.held(agent) if h in self.v.targets and not self.v.is_done(h)]

    def free_hands(self, agent: int) -> int:
        return HOLD_CAPACITY - len(self.v.held(agent))

    def known_graspable(self) -> list[int]:
        return [o for o in self.v.undone_targets() if self.v.holder(o) is None and self.v.graspable(o)]

    def unknown_targets(self) -> list[int]:
        return [o for o in self.v.undone_targets() if self.v.location_of(o) is None]

    def dist(self, src: int, oid_or_room: int, is_room: bool = False) -> float:
        room = oid_or_room if is_room else self.v.room_of(oid_or_room)
        return INF if room is None else self.v.distance(src, room)

    def claims(self, others: Iterable[int]) -> tuple[set[int], set[int]]:
        """Objects and rooms other agents hold, are about to touch, or intend."""
        objs: set[int] = set()
        rooms: set[int] = set()
        for b in others:
            if b in self.v.agents:
                objs.update(self.v.held(b))
            chain = self.ctx.chains.get(b)
            if chain is None or chain.exhausted:
                continue
            t = extract_target(chain.peek_next())
            if t is not None:
                objs.add(t)
            if self.ctx.intentions_visible:
                objs |= self.v.intention_objects(chain.active_intention)
                rooms |= self.v.intention_rooms(chain.active_intention)
        return objs, rooms

    def others(self, *agents: int) -> list[int]:
        return [b for b in sorted(self.v.agents) if b not in agents]

    # -- chain builders ------------------------------------------------------

    def gotos(self, src: int, dst: int) -> list[PrimitiveAction]:
        return [goto(self.v.room_ref(r)) for r in self.v.path(src, dst)]

    def dest_arg(self, oid: int) -> Ref | str:
        dest = self.v.targets[oid].destination
        return GOAL if dest == GOAL else self.v.room_ref(int(dest))

    def deliver(self, src: int, objs: list[int]) -> tuple[list[PrimitiveAction], str]:
        """Carry ``objs`` from room ``src`` to their destinations, nearest first."""
        acts: list[PrimitiveAction] = []
        here = src
        left = sorted(objs)
        while left:
            dst = min((self.v.destination_room(o) for o in left),
                      key=lambda r: (self.v.distance(here, r), r))
            acts += self.gotos(here, dst)
            here = dst
            for o in [o for o in left if self.v.destination_room(o) == dst]:
                acts.append(put_on(self.v.ref(o), self.dest_arg(o)))
                left.remove(o)
        return acts, self.deliver_intention(objs)

    def deliver_intention(self, objs: list[int]) -> str:
        objs = sorted(objs)
        dests = {self.v.targets[o].destination for o in objs}
        names = ", ".join(self.v.name_of(o) for o in objs)
        if dests == {GOAL}:
            return f"deliver {names} to the goal zone"
        if len(dests) == 1:
            return f"deliver {names} to {self.v.room_ref(int(dests.pop()))}"
        parts = [f"{self.v.name_of(o)} to {self.dest_text(o)}" for o in objs]
        return "deliver " + "; ".join(parts)

    def dest_text(self, oid: int) -> str:
        d = self.v.targets[oid].destination
        return "the goal zone" if d == GOAL else str(self.v.room_ref(int(d)))

    def fetch(self, agent: int, oid: int, src: int | None = None) -> tuple[list[PrimitiveAction], str]:
        src = self.room(agent) if src is None else src
        where = self.v.room_of(oid)
        acts = self.gotos(src, where) + [grasp(self.v.ref(oid))]
        more, intent = self.deliver(where, self.held_targets(agent) + [oid])
        return acts + more, intent

    def search(self, agent: int, room: int, speculate: int | None = None) -> tuple[list[PrimitiveAction], str]:
        """Walk to ``room`` and reveal what it hides.

        With ``speculate`` set (no replan placeholders allowed) the chain
        gambles that the given target is there and carries on to deliver it.
        """
        src = self.room(agent)
        acts = self.gotos(src, room)
        if room not in self.v.explored:
            acts.append(EXPLORE)
        boxes = self.v.closed_containers(room)
        acts += [open_(self.v.ref(c)) for c in boxes]
        if speculate is None:
            acts.append(REPLAN)
            where = f"search {self.v.room_ref(room)}"
            if boxes:
                where += " containers " + ", ".join(self.v.name_of(c) for c in boxes)
            return acts, where + " for targets"
        acts.append(grasp(self.v.ref(speculate)))
        more, intent = self.deliver(room, self.held_targets(agent) + [speculate])
        return acts + more, intent

    def pick_room(self, agent: int, taken_rooms: set[int], taken_objs: set[int]) -> int | None:
        src = self.room(agent)
        rooms = [r for r in self.v.unsearched_rooms()
                 if r not in taken_rooms and not (set(self.v.closed_containers(r)) & taken_objs)
                 and self.v.distance(src, r) < INF]
        if not rooms:
            return None
        return min(rooms, key=lambda r: (self.v.distance(src, r), r))

    def plan_agent(self, agent: int, taken_objs: set[int], taken_rooms: set[int]) -> tuple[list[PrimitiveAction], str]:
        """Best fresh chain for one agent given what others have claimed."""
        src = self.room(agent)
        held = self.held_targets(agent)
        if self.free_hands(agent) > 0:
            options = [o for o in self.known_graspable() if o not in taken_objs]
            if options:
                o = min(options, key=lambda o: (self.dist(src, o), o))
                return self.fetch(agent, o)
        if held:
            return self.deliver(src, held)
        if self.free_hands(agent) > 0 and self.unknown_targets():
            room = self.pick_room(agent, taken_rooms, taken_objs)
            if room is not None:
                if self.ctx.allow_replan:
                    return self.search(agent, room)
                pending = [o for o in self.unknown_targets() if o not in taken_objs]
                if pending:
                    return self.search(agent, room, speculate=pending[0])
        return [WAIT], IDLE

    # -- purposes --------------------------------------------------------------

    def assignment(self) -> ChainPlanDocument:
        agents = sorted(self.ctx.agents)
        taken_objs, taken_rooms = self.claims(self.others(*agents))
        plans = []
        for a in agents:
            acts, intent = self.plan_agent(a, taken_objs, taken_rooms)
            plans.append(AgentPlan(a, tuple(acts), intent, None))
            taken_objs |= self.v.intention_objects(intent)
            taken_objs |= {t for t in map(extract_target, acts) if t is not None}
            taken_rooms |= self.v.intention_rooms(intent)
        reason = "; ".join(f"agent {p.robot_id}: {p.intention}" for p in plans)
        return ChainPlanDocument("assignment", tuple(plans), reason)

    def refinement(self) -> ChainPlanDocument:
        (a,) = self.ctx.agents
        chain = self.ctx.chains[a]
        intention = chain.active_intention
        acts = self.refine_suffix(a, intention, chain.remaining)
        return ChainPlanDocument("refinement", (AgentPlan(
            a, tuple(acts), intention, f"rebuilt the remaining actions for: {intention}"),))

    def refine_suffix(self, a: int, intention: str, remaining) -> list[PrimitiveAction]:
        v = self.v
        if self.ctx.intentions_visible and intention != UNSPECIFIED:
            objs = v.intention_objects(intention) & set(v.targets)
            rooms = v.intention_rooms(intention)
        else:
            objs = {r.id for act in remaining for r in act.refs() if r.id in v.targets}
            rooms = set()
        mine = sorted(o for o in objs if not v.is_done(o) and v.holder(o) in (None, a))
        src = self.room(a)
        if mine:
            taken, _ = self.claims(self.others(a))
            ready = [o for o in mine if v.holder(o) is None and v.graspable(o) and o not in taken]
            if ready and self.free_hands(a) > 0:
                o = min(ready, key=lambda o: (self.dist(src, o), o))
                return self.fetch(a, o)[0]
            held = self.held_targets(a)
            if held:
                return self.deliver(src, held)[0]
            lost = [o for o in mine if v.location_of(o) is None and o not in taken]
            if lost and self.free_hands(a) > 0:
                room = self.pick_room(a, set(), set())
                if room is not None:
                    guess = None if self.ctx.allow_replan else lost[0]
                    return self.search(a, room, speculate=guess)[0]
            return []
        for r in sorted(rooms):
            if r in v.unsearched_rooms() and self.free_hands(a) > 0:
                return self.search(a, r)[0] if self.ctx.allow_replan else []
        return []

    def insertion(self) -> ChainPlanDocument:
        (a,) = self.ctx.agents
        v = self.v
        room = self.room(a)
        taken, taken_rooms = self.claims(self.others(a))
        boxes = [c for c in v.closed_containers(room) if c not in taken]
        free = self.free_hands(a)
        here = [o for o in self.known_graspable() if v.room_of(o) == room and o not in taken][:free]
        if room not in v.explored:
            acts, intent = [EXPLORE, REPLAN], f"search {v.room_ref(room)} for targets"
        elif here:
            acts = [grasp(v.ref(o)) for o in here]
            more, intent = self.deliver(room, self.held_targets(a) + here)
            acts += more
        elif boxes and free > 0 and self.unknown_targets():
            acts = [open_(v.ref(c)) for c in boxes] + [REPLAN]
            intent = f"search {v.room_ref(room)} containers " + ", ".join(v.name_of(c) for c in boxes)
        else:
            acts, intent = self.plan_agent(a, taken, taken_rooms)
        return ChainPlanDocument("insertion", (AgentPlan(
            a, tuple(acts), intent, f"acting on what is known about {v.room_ref(room)}"),))

    def conflict(self) -> ChainPlanDocument:
        lo, hi = sorted(self.ctx.agents)
        o = self.ctx.contested
        v = self.v
        holder = v.holder(o)
        if holder in (lo, hi):
            winner = holder
        else:
            d_lo, d_hi = self.dist(self.room(lo), o), self.dist(self.room(hi), o)
            winner = lo if d_lo <= d_hi else hi
        loser = hi if winner == lo else lo
        w_chain = self.ctx.chains[winner]
        w_acts = list(w_chain.remaining)
        w_intent = w_chain.active_intention
        taken, taken_rooms = self.claims(self.others(loser))
        taken |= {o} | v.intention_objects(w_intent)
        taken |= {t for t in map(extract_target, w_acts) if t is not None}
        taken_rooms |= v.intention_rooms(w_intent)
        l_acts, l_intent = self.plan_agent(loser, taken, taken_rooms)
        plans = {
            winner: AgentPlan(winner, tuple(w_acts), w_intent,
                              f"agent {winner} keeps {v.name_of(o)}"),
            loser: AgentPlan(loser, tuple(l_acts), l_intent,
                             f"agent {loser} leaves {v.name_of(o)} and takes other work"),
        }
        return ChainPlanDocument("conflict", (plans[lo], plans[hi]))

    def run(self) -> ChainPlanDocument:
        return getattr(self, self.ctx.purpose)()


class ScriptedBackend:
    """Deterministic oracle backend.

    ``latency="virtual"`` charges a fixed cost per token instead of measuring
    wall-clock time, which keeps traces byte-identical across runs.
    """

    name = "scripted"

    def __init__(self, latency: str = "virtual", seconds_per_token: float = 1e-5):
        if latency not in ("virtual", "wall"):
            raise ConfigurationError(f"latency must be 'virtual' or 'wall', not {latency!r}")
        self.latency = latency
        self.seconds_per_token = seconds_per_token

    def plan(self, request: PlanRequest) -> PlanResponse:
        start = time.perf_counter()
        prompt = request.context.render()
        doc = Oracle(request.context).run()
        response = render_chain_document(doc)
        usage = TokenUsage(count_tokens(prompt), count_tokens(response))
        if self.latency == "wall":
            latency = time.perf_counter() - start
        else:
            latency = round(usage.total * self.seconds_per_token, 9)
        return PlanResponse(doc, usage, latency, prompt, response)

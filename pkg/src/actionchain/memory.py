"""Shared team memory and the known-world view derived from it.

The memory fuses every agent's observations into one picture of the house:
which rooms have been explored, where each object was last seen, and what
each agent is holding. ``WorldView`` is an immutable snapshot of that picture
used for validation and planning; it never consults simulator ground truth
beyond the floor plan and the task's target list, both of which are part of
the task description handed to the team.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

from .actions import GOAL, PrimitiveAction, Ref
from .errors import NotFoundError
from .world import (
    HOLD_CAPACITY,
    Location,
    Observation,
    SceneItem,
    TaskSpec,
    WorldState,
    describe_location,
    enumerate_legal,
    held_by,
)

DEFAULT_HISTORY_CAP = 20


@dataclass(frozen=True)
class KnownObject:
    ref: Ref
    kind: str
    location: Location
    open: bool | None
    step: int
    source: int  # agent whose observation produced this entry


@dataclass(frozen=True)
class AgentStatus:
    room: Ref
    held: tuple[Ref, ...]
    chain_summary: str = ""


@dataclass(frozen=True)
class Target:
    ref: Ref
    destination: int | str


def goal_text(world: WorldState, task: TaskSpec) -> str:
    goal_room = world.room(world.goal_zone).ref
    parts = []
    for g in task.sub_goals:
        obj = world.obj(g.object_id).ref
        dest = f"goal {goal_room}" if g.destination == GOAL else str(world.room(int(g.destination)).ref)
        parts.append(f"{obj} -> {dest}")
    if task.scenario == "transport":
        head = f"Transport target objects to the goal zone {goal_room}"
        if task.sub_goal_quota is not None and task.sub_goal_quota < len(task.sub_goals):
            head += f" (any {task.sub_goal_quota} suffice)"
    else:
        head = "Put every listed object in its destination room"
    return f"{head}: " + "; ".join(parts) + f". Step limit {task.step_limit}."


class SharedMemory:
    """Single-writer store of task instructions, histories, and fused knowledge."""

    def __init__(
        self,
        goal: str,
        rooms: Iterable[Ref],
        edges: Iterable[tuple[int, int, int]],
        goal_zone: int,
        targets: Iterable[Target],
        agents: Iterable[int],
        history_cap: int = DEFAULT_HISTORY_CAP,
    ):
        self.goal_text = goal
        self.rooms = {r.id: r for r in rooms}
        self.edges = tuple(edges)
        self.goal_zone = goal_zone
        self.targets = {t.ref.id: t for t in targets}
        self.history_cap = history_cap
        self.history: dict[int, list[Observation]] = {a: [] for a in agents}
        self.known_objects: dict[int, KnownObject] = {}
        self.explored_by: dict[int, set[int]] = {a: set() for a in self.history}
        self.agent_status: dict[int, AgentStatus] = {}
        self.step = 0

    @classmethod
    def for_task(cls, world: WorldState, task: TaskSpec, history_cap: int = DEFAULT_HISTORY_CAP):
        targets = [Target(world.obj(g.object_id).ref, g.destination) for g in task.sub_goals]
        return cls(
            goal_text(world, task),
            [r.ref for r in world.rooms],
            world.edges,
            world.goal_zone,
            targets,
            sorted(world.agents),
            history_cap,
        )

    @property
    def explored_rooms(self) -> set[int]:
        out: set[int] = set()
        for rooms in self.explored_by.values():
            out |= rooms
        return out

    def _merge(self, oid: int, entry: KnownObject) -> None:
        old = self.known_objects.get(oid)
        if old is None or entry.step > old.step or (entry.step == old.step and entry.source < old.source):
            self.known_objects[oid] = entry

    def update(self, obs: Observation) -> "SharedMemory":
        """Fold one observation into memory (in place) and return self."""
        a = obs.agent_id
        self.history.setdefault(a, []).append(obs)
        self.explored_by.setdefault(a, set()).update(obs.explored_rooms)
        self.step = max(self.step, obs.step_count)
        for item in obs.items:
            self._merge(item.ref.id, KnownObject(item.ref, item.kind, item.location, item.open,
                                                 obs.step_count, a))
        for ref in obs.held:
            old = self.known_objects.get(ref.id)
            kind = old.kind if old else ("target" if ref.id in self.targets else "distractor")
            self._merge(ref.id, KnownObject(ref, kind, held_by(a), None, obs.step_count, a))
        prev = self.agent_status.get(a)
        self.agent_status[a] = AgentStatus(obs.current_room, tuple(obs.held),
                                           prev.chain_summary if prev else "")
        return self

    def set_chain_summary(self, agent: int, summary: str) -> None:
        st = self.agent_status.get(agent)
        if st is not None:
            self.agent_status[agent] = AgentStatus(st.room, st.held, summary)

    def recent(self, agent: int) -> list[Observation]:
        hist = self.history.get(agent, [])
        return hist[-self.history_cap:] if self.history_cap else list(hist)

    def view(self) -> "WorldView":
        return WorldView(
            rooms=MappingProxyType(dict(self.rooms)),
            edges=self.edges,
            goal_zone=self.goal_zone,
            targets=MappingProxyType(dict(self.targets)),
            objects=MappingProxyType(dict(self.known_objects)),
            explored=frozenset(self.explored_rooms),
            agents=MappingProxyType({a: (s.room.id, tuple(h.id for h in s.held))
                                     for a, s in self.agent_status.items()}),
            step=self.step,
        )


_ENTITY_RE = re.compile(r"[A-Za-z][A-Za-z0-9_\-]*\s*\(\s*(\d+)\s*\)")


@dataclass(frozen=True)
class WorldView:
    """What the team knows about the world at one instant."""

    rooms: Mapping[int, Ref]
    edges: tuple[tuple[int, int, int], ...]
    goal_zone: int
    targets: Mapping[int, Target]
    objects: Mapping[int, KnownObject]
    explored: frozenset[int]
    agents: Mapping[int, tuple[int, tuple[int, ...]]]  # agent -> (room, held ids)
    step: int = 0
    _adj: dict = field(default_factory=dict, compare=False, repr=False)
    _dist: dict = field(default_factory=dict, compare=False, repr=False)

    # -- graph ---------------------------------------------------------------

    def neighbors(self, room: int) -> list[tuple[int, int]]:
        if not self._adj:
            for a, b, n in self.edges:
                self._adj.setdefault(a, []).append((b, n))
                self._adj.setdefault(b, []).append((a, n))
            for v in self._adj.values():
                v.sort()
        return self._adj.get(room, [])

    def _dijkstra(self, src: int) -> tuple[dict[int, int], dict[int, tuple[int, ...]]]:
        if src in self._dist:
            return self._dist[src]
        dist = {src: 0}
        path = {src: (src,)}
        heap = [(0, (src,))]
        while heap:
            d, p = heapq.heappop(heap)
            node = p[-1]
            if d > dist.get(node, float("inf")) or path[node] != p:
                continue
            for nxt, n in self.neighbors(node):
                nd, np_ = d + n, p + (nxt,)
                if nd < dist.get(nxt, float("inf")) or (nd == dist[nxt] and np_ < path[nxt]):
                    dist[nxt] = nd
                    path[nxt] = np_
                    heapq.heappush(heap, (nd, np_))
        self._dist[src] = (dist, path)
        return dist, path

    def distance(self, a: int, b: int) -> float:
        return self._dijkstra(a)[0].get(b, float("inf"))

    def path(self, a: int, b: int) -> list[int]:
        """Rooms visited after ``a`` on the shortest path to ``b`` (empty if a == b)."""
        p = self._dijkstra(a)[1].get(b)
        if p is None:
            raise NotFoundError(f"no known path from room {a} to room {b}")
        return list(p[1:])

    # -- entities ------------------------------------------------------------

    def is_room(self, entity_id: int) -> bool:
        return entity_id in self.rooms

    def room_ref(self, room: int) -> Ref:
        return self.rooms[room]

    def agent_room(self, agent: int) -> int:
        try:
            return self.agents[agent][0]
        except KeyError:
            raise NotFoundError(f"unknown agent id {agent}") from None

    def held(self, agent: int) -> tuple[int, ...]:
        return self.agents[agent][1]

    def ref(self, entity_id: int) -> Ref | None:
        if entity_id in self.rooms:
            return self.rooms[entity_id]
        if entity_id in self.objects:
            return self.objects[entity_id].ref
        if entity_id in self.targets:
            return self.targets[entity_id].ref
        return None

    def name_of(self, entity_id: int) -> str:
        ref = self.ref(entity_id)
        return str(ref) if ref else f"#{entity_id}"

    def location_of(self, oid: int) -> Location | None:
        k = self.objects.get(oid)
        return k.location if k else None

    def room_of(self, oid: int) -> int | None:
        """Room an object is known to occupy, or None if its location is unknown."""
        loc = self.location_of(oid)
        if loc is None:
            return None
        if loc.kind == "floor":
            return int(loc.where)
        if loc.kind == "inside":
            return self.room_of(int(loc.where))
        if loc.kind == "held":
            a = self.agents.get(int(loc.where))
            return a[0] if a else None
        return self.goal_zone if loc.where == GOAL else int(loc.where)

    def destination_room(self, oid: int) -> int:
        dest = self.targets[oid].destination
        return self.goal_zone if dest == GOAL else int(dest)

    def is_done(self, oid: int) -> bool:
        t = self.targets.get(oid)
        loc = self.location_of(oid)
        return t is not None and loc is not None and loc == Location("delivered", t.destination)

    def undone_targets(self) -> list[int]:
        return sorted(o for o in self.targets if not self.is_done(o))

    def holder(self, oid: int) -> int | None:
        loc = self.location_of(oid)
        return int(loc.where) if loc is not None and loc.kind == "held" else None

    def graspable(self, oid: int) -> bool:
        """Known to lie on a floor or inside an open container."""
        k = self.objects.get(oid)
        if k is None or k.kind == "container":
            return False
        if k.location.kind == "floor":
            return True
        if k.location.kind == "inside":
            c = self.objects.get(int(k.location.where))
            return bool(c and c.open)
        return False

    def closed_containers(self, room: int) -> list[int]:
        return sorted(
            o.ref.id for o in self.objects.values()
            if o.kind == "container" and o.open is False and o.location.kind == "floor"
            and o.location.where == room
        )

    def unsearched_rooms(self) -> list[int]:
        """Rooms that may still hide objects: unexplored, or with a closed container."""
        return sorted(r for r in self.rooms if r not in self.explored or self.closed_containers(r))

    # -- legality ------------------------------------------------------------

    def scene(self, agent: int) -> list[SceneItem]:
        room = self.agent_room(agent)
        explored = room in self.explored
        items = []
        for oid in sorted(self.objects):
            k = self.objects[oid]
            loc = k.location
            if loc.kind == "delivered":
                visible = self.room_of(oid) == room
            elif not explored:
                visible = False
            elif loc.kind == "floor":
                visible = loc.where == room
            elif loc.kind == "inside":
                c = self.objects.get(int(loc.where))
                visible = bool(c and c.open and c.location.kind == "floor" and c.location.where == room)
            else:
                visible = False
            if visible:
                items.append(SceneItem(k.ref, k.kind, loc, k.open))
        return items

    def legal_actions(self, agent: int) -> frozenset[PrimitiveAction]:
        room = self.agent_room(agent)
        held = [self.ref(h) for h in self.held(agent)]
        return enumerate_legal(
            self.rooms[room],
            [self.rooms[r] for r, _ in self.neighbors(room)],
            [h for h in held if h is not None],
            self.scene(agent),
            room == self.goal_zone,
        )

    def explain_infeasible(self, agent: int, action: PrimitiveAction) -> str:
        """Human-readable reason why ``action`` is not in the agent's action space."""
        room = self.agent_room(agent)
        held = self.held(agent)
        v = action.verb
        refs = action.refs()
        for r in refs:
            known = self.ref(r.id)
            if known is not None and known.name != r.name:
                return f"{r} does not match known entity {known}"
        if v == "goto":
            target = refs[0].id
            if target not in self.rooms:
                return f"{refs[0]} is not a room"
            if target == room:
                return "already in that room"
            return f"{refs[0]} is not adjacent to {self.rooms[room]}"
        if v in ("grasp", "open"):
            oid = refs[0].id
            loc = self.location_of(oid)
            if loc is None:
                return "unknown location"
            if v == "grasp":
                if oid in held:
                    return "already held"
                if loc.kind == "held":
                    return f"held by agent {loc.where}"
                if loc.kind == "delivered":
                    return "already delivered"
                if len(held) >= HOLD_CAPACITY:
                    return "hands full"
            if self.room_of(oid) != room:
                return f"not in current room (last seen {self._describe(loc)})"
            if v == "open":
                k = self.objects[oid]
                if k.kind != "container":
                    return "not a container"
                if k.open:
                    return "already open"
            if loc.kind == "inside":
                return "inside a closed container"
            return "not visible"
        if v in ("put_in", "put_on"):
            if refs[0].id not in held:
                return "not holding the object"
            if v == "put_on":
                dest = action.args[1]
                want = self.goal_zone if dest == GOAL else dest.id
                if want != room:
                    return "not at destination"
            else:
                c = self.objects.get(refs[1].id)
                if c is None or self.room_of(refs[1].id) != room:
                    return "container not in current room"
                if c.kind != "container":
                    return "not a container"
                if not c.open:
                    return "container closed"
        return "preconditions not satisfied"

    def _describe(self, loc: Location) -> str:
        return describe_location(loc, self.rooms.get(self.goal_zone), self.name_of)

    # -- intentions ----------------------------------------------------------

    def entity_ids(self, text: str) -> list[int]:
        return [int(m.group(1)) for m in _ENTITY_RE.finditer(text or "")]

    def intention_objects(self, text: str) -> set[int]:
        """Object ids an intention commits to (room references are excluded)."""
        return {i for i in self.entity_ids(text) if not self.is_room(i)}

    def intention_rooms(self, text: str) -> set[int]:
        return {i for i in self.entity_ids(text) if self.is_room(i)}

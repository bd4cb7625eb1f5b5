"""Deterministic, partially observable household simulator.

The world is a graph of rooms joined by edges with integer lengths in meters.
Objects sit on a room floor, inside a container, in an agent's hands, or are
delivered (final). Agents see the contents of a room only once some team
member has explored it; closed containers hide their contents until opened.

All values are treated as immutable: transitions return new ``WorldState``
instances and never mutate their input.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

from .actions import GOAL, PrimitiveAction, Ref, parse_action
from .errors import ConfigurationError, MalformedActionError, NotFoundError

HOLD_CAPACITY = 2
OBJECT_KINDS = ("target", "container", "distractor")
SCENARIO_KINDS = ("transport", "watch-help")


@dataclass(frozen=True)
class Location:
    """Where an object is. ``kind`` is floor/inside/held/delivered.

    ``where`` holds a room id (floor), container id (inside), agent id (held),
    or a room id / ``GOAL`` (delivered).
    """

    kind: str
    where: int | str

    def to_dict(self) -> dict:
        return {"type": self.kind, "at": self.where}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Location":
        kind = d["type"]
        if kind not in ("floor", "inside", "held", "delivered"):
            raise ConfigurationError(f"unknown location type {kind!r}")
        where = d["at"]
        if not (kind == "delivered" and where == GOAL):
            where = int(where)
        return cls(kind, where)


def floor(room: int) -> Location:
    return Location("floor", room)


def inside(container: int) -> Location:
    return Location("inside", container)


def held_by(agent: int) -> Location:
    return Location("held", agent)


def delivered(dest: int | str) -> Location:
    return Location("delivered", dest)


@dataclass(frozen=True)
class Room:
    id: int
    name: str

    @property
    def ref(self) -> Ref:
        return Ref(self.name, self.id)


@dataclass(frozen=True)
class ObjectEntity:
    id: int
    name: str
    kind: str
    location: Location
    open: bool | None = None

    @property
    def ref(self) -> Ref:
        return Ref(self.name, self.id)

    @property
    def display(self) -> str:
        return f"{self.name} ({self.id})"


@dataclass(frozen=True)
class AgentBody:
    id: int
    room: int
    held: tuple[int, ...] = ()
    distance_traveled: int = 0


@dataclass(frozen=True)
class SubGoal:
    object_id: int
    destination: int | str
    done: bool = False


@dataclass(frozen=True)
class TaskSpec:
    scenario: str
    sub_goals: tuple[SubGoal, ...]
    step_limit: int
    sub_goal_quota: int | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIO_KINDS:
            raise ConfigurationError(f"unknown scenario kind {self.scenario!r}")
        if self.step_limit <= 0:
            raise ConfigurationError("step_limit must be positive")
        if self.sub_goal_quota is not None and self.sub_goal_quota <= 0:
            raise ConfigurationError("sub_goal_quota must be positive")

    @property
    def quota_basis(self) -> int:
        """Number of sub-goals counted as full success."""
        if self.scenario == "transport" and self.sub_goal_quota is not None:
            return min(self.sub_goal_quota, len(self.sub_goals))
        return len(self.sub_goals)

    def refreshed(self, world: "WorldState") -> "TaskSpec":
        goals = tuple(replace(g, done=g.done or sub_goal_done(world, g)) for g in self.sub_goals)
        return replace(self, sub_goals=goals)


@dataclass(frozen=True)
class SceneItem:
    """An object as seen (or remembered) in the agent's current room."""

    ref: Ref
    kind: str
    location: Location
    open: bool | None = None


@dataclass(frozen=True)
class Observation:
    agent_id: int
    current_room: Ref
    visible_objects: tuple[tuple[str, str], ...]
    visible_agents: tuple[tuple[int, int], ...]
    held: tuple[Ref, ...]
    explored_rooms: tuple[int, ...]
    step_count: int
    # structured twins of visible_objects/held, consumed by shared memory
    items: tuple[SceneItem, ...] = ()
    adjacent_rooms: tuple[Ref, ...] = ()


@dataclass(frozen=True)
class TransitionResult:
    world: "WorldState"
    success: bool
    reason: str | None = None
    completed: tuple[int, ...] = ()


class TerminationStatus(enum.Enum):
    RUNNING = "running"
    SUCCESS = "success"
    STEP_LIMIT = "step_limit"


@dataclass(frozen=True)
class WorldState:
    rooms: tuple[Room, ...]
    edges: tuple[tuple[int, int, int], ...]
    objects: Mapping[int, ObjectEntity]
    agents: Mapping[int, AgentBody]
    goal_zone: int
    start_room: int
    step_count: int = 0
    rng_seed: int = 0
    explored: Mapping[int, tuple[int, ...]] = field(default_factory=dict)

    # -- lookups -----------------------------------------------------------

    def room(self, room_id: int) -> Room:
        for r in self.rooms:
            if r.id == room_id:
                return r
        raise NotFoundError(f"unknown room id {room_id}")

    def room_ids(self) -> set[int]:
        return {r.id for r in self.rooms}

    def agent(self, agent_id: int) -> AgentBody:
        try:
            return self.agents[agent_id]
        except KeyError:
            raise NotFoundError(f"unknown agent id {agent_id}") from None

    def obj(self, object_id: int) -> ObjectEntity:
        try:
            return self.objects[object_id]
        except KeyError:
            raise NotFoundError(f"unknown object id {object_id}") from None

    def neighbors(self, room_id: int) -> list[tuple[int, int]]:
        out = []
        for a, b, length in self.edges:
            if a == room_id:
                out.append((b, length))
            elif b == room_id:
                out.append((a, length))
        return sorted(out)

    def edge_length(self, a: int, b: int) -> int | None:
        for x, y, length in self.edges:
            if {x, y} == {a, b}:
                return length
        return None

    def team_explored(self) -> frozenset[int]:
        return frozenset(r for rooms in self.explored.values() for r in rooms)

    def object_room(self, object_id: int) -> int:
        """Room an object currently occupies, resolving containers and hands."""
        loc = self.obj(object_id).location
        if loc.kind == "floor":
            return int(loc.where)
        if loc.kind == "inside":
            return self.object_room(int(loc.where))
        if loc.kind == "held":
            return self.agent(int(loc.where)).room
        return self.goal_zone if loc.where == GOAL else int(loc.where)

    def render_location(self, loc: Location) -> str:
        return describe_location(loc, self.room(self.goal_zone).ref, self._name_of)

    def _name_of(self, entity_id: int) -> str:
        if entity_id in self.objects:
            return self.objects[entity_id].display
        return str(self.room(entity_id).ref)


def describe_location(loc: Location, goal_room: Ref | None, name_of) -> str:
    if loc.kind == "floor":
        return f"on floor of {name_of(loc.where)}"
    if loc.kind == "inside":
        return f"in {name_of(loc.where)}"
    if loc.kind == "held":
        return f"held by agent {loc.where}"
    if loc.where == GOAL:
        return f"delivered to goal {goal_room}" if goal_room else "delivered to goal"
    return f"delivered to {name_of(loc.where)}"


def validate_world(world: WorldState) -> None:
    """Check structural invariants; raise ConfigurationError on violation."""
    ids = [r.id for r in world.rooms] + list(world.objects)
    if len(ids) != len(set(ids)):
        raise ConfigurationError("room and object ids must be unique across both")
    if len(world.rooms) < 2:
        raise ConfigurationError("a world needs at least two rooms")
    room_ids = world.room_ids()
    for a, b, length in world.edges:
        if a not in room_ids or b not in room_ids or a == b:
            raise ConfigurationError(f"bad edge ({a}, {b})")
        if int(length) <= 0:
            raise ConfigurationError(f"edge ({a}, {b}) must have positive length")
    seen = {world.rooms[0].id}
    frontier = [world.rooms[0].id]
    while frontier:
        cur = frontier.pop()
        for nxt, _ in world.neighbors(cur):
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    if seen != room_ids:
        raise ConfigurationError("room graph is not connected")
    if world.goal_zone not in room_ids or world.start_room not in room_ids:
        raise ConfigurationError("goal zone and start room must be rooms")
    for o in world.objects.values():
        if o.kind not in OBJECT_KINDS:
            raise ConfigurationError(f"object {o.id} has unknown kind {o.kind!r}")
        loc = o.location
        if loc.kind == "floor" and loc.where not in room_ids:
            raise ConfigurationError(f"object {o.id} on unknown room")
        if loc.kind == "inside":
            c = world.objects.get(int(loc.where))
            if c is None or c.kind != "container" or c.id == o.id:
                raise ConfigurationError(f"object {o.id} inside a non-container")
            if o.kind == "container":
                raise ConfigurationError("containers cannot be nested")
        if loc.kind == "held" and int(loc.where) not in world.agents:
            raise ConfigurationError(f"object {o.id} held by unknown agent")
        if loc.kind == "delivered" and loc.where != GOAL and loc.where not in room_ids:
            raise ConfigurationError(f"object {o.id} delivered to unknown room")
    for a in world.agents.values():
        if a.room not in room_ids:
            raise ConfigurationError(f"agent {a.id} in unknown room")
        if len(a.held) > HOLD_CAPACITY:
            raise ConfigurationError(f"agent {a.id} holds more than {HOLD_CAPACITY} objects")
        for oid in a.held:
            if world.obj(oid).location != held_by(a.id):
                raise ConfigurationError(f"agent {a.id} held list disagrees with object {oid}")
    for o in world.objects.values():
        if o.location.kind == "held" and o.id not in world.agents[int(o.location.where)].held:
            raise ConfigurationError(f"object {o.id} location disagrees with holder")


# -- visibility ---------------------------------------------------------------


def scene(world: WorldState, agent_id: int) -> list[SceneItem]:
    """Objects visible to the agent in its current room, in id order."""
    body = world.agent(agent_id)
    explored = body.room in world.team_explored()
    items = []
    for o in sorted(world.objects.values(), key=lambda o: o.id):
        if _visible(world, o, body.room, explored):
            items.append(SceneItem(o.ref, o.kind, o.location, o.open))
    return items


def _visible(world: WorldState, o: ObjectEntity, room: int, explored: bool) -> bool:
    loc = o.location
    if loc.kind == "delivered":
        # a delivery spot is always in plain sight
        return world.object_room(o.id) == room
    if not explored:
        return False
    if loc.kind == "floor":
        return loc.where == room
    if loc.kind == "inside":
        c = world.obj(int(loc.where))
        return bool(c.open) and c.location == floor(room)
    return False


def observe(world: WorldState, agent_id: int) -> Observation:
    body = world.agent(agent_id)
    items = scene(world, agent_id)
    room = world.room(body.room)
    return Observation(
        agent_id=agent_id,
        current_room=room.ref,
        visible_objects=tuple((str(i.ref), world.render_location(i.location)) for i in items),
        visible_agents=tuple(
            (a.id, a.room) for a in sorted(world.agents.values(), key=lambda a: a.id)
            if a.id != agent_id and a.room == body.room
        ),
        held=tuple(world.obj(o).ref for o in body.held),
        explored_rooms=tuple(world.explored.get(agent_id, ())),
        step_count=world.step_count,
        items=tuple(items),
        adjacent_rooms=tuple(world.room(r).ref for r, _ in world.neighbors(body.room)),
    )


# -- legality -----------------------------------------------------------------


def enumerate_legal(
    room: Ref,
    adjacent: Iterable[Ref],
    held: Iterable[Ref],
    items: Iterable[SceneItem],
    at_goal: bool,
) -> frozenset[PrimitiveAction]:
    """Actions whose preconditions hold for an agent in a given local scene.

    Shared by the ground-truth simulator and the team's remembered world so
    that both judge legality by the same rules.
    """
    held = list(held)
    items = list(items)
    acts: set[PrimitiveAction] = {PrimitiveAction("explore"), PrimitiveAction("wait")}
    for r in adjacent:
        acts.add(PrimitiveAction("goto", (r,)))
    open_containers = {i.ref.id for i in items if i.kind == "container" and i.open}
    for i in items:
        if i.kind == "container":
            if i.location.kind == "floor" and i.open is False:
                acts.add(PrimitiveAction("open", (i.ref,)))
            continue
        if len(held) >= HOLD_CAPACITY:
            continue
        if i.location.kind == "floor" or (
            i.location.kind == "inside" and i.location.where in open_containers
        ):
            acts.add(PrimitiveAction("grasp", (i.ref,)))
    for h in held:
        for i in items:
            if i.kind == "container" and i.open:
                acts.add(PrimitiveAction("put_in", (h, i.ref)))
        acts.add(PrimitiveAction("put_on", (h, room)))
        if at_goal:
            acts.add(PrimitiveAction("put_on", (h, GOAL)))
    return frozenset(acts)


def legal_actions(world: WorldState, agent_id: int) -> frozenset[PrimitiveAction]:
    body = world.agent(agent_id)
    return enumerate_legal(
        world.room(body.room).ref,
        [world.room(r).ref for r, _ in world.neighbors(body.room)],
        [world.obj(o).ref for o in body.held],
        scene(world, agent_id),
        body.room == world.goal_zone,
    )


# -- transitions --------------------------------------------------------------


def _check_ref(world: WorldState, ref, want: str) -> None:
    if not isinstance(ref, Ref):
        raise MalformedActionError(f"expected an entity reference, got {ref!r}")
    if want == "room":
        if ref.id not in world.room_ids():
            raise MalformedActionError(f"{ref} is not a room")
        if world.room(ref.id).name != ref.name:
            raise MalformedActionError(f"{ref} names the wrong room")
    else:
        o = world.objects.get(ref.id)
        if o is None:
            raise MalformedActionError(f"{ref} is not an object")
        if o.name != ref.name:
            raise MalformedActionError(f"{ref} names the wrong object")


def _validate_structure(world: WorldState, action: PrimitiveAction) -> None:
    v = action.verb
    if v == "replan":
        raise MalformedActionError("replan is a planning placeholder and cannot be executed")
    if v == "goto":
        _check_ref(world, action.args[0], "room")
    elif v in ("open", "grasp"):
        _check_ref(world, action.args[0], "object")
    elif v == "put_in":
        _check_ref(world, action.args[0], "object")
        _check_ref(world, action.args[1], "object")
    elif v == "put_on":
        _check_ref(world, action.args[0], "object")
        if action.args[1] != GOAL:
            _check_ref(world, action.args[1], "room")


def _transition(world: WorldState, agent_id: int, action: PrimitiveAction):
    """Apply one action without advancing the clock.

    Returns ``(world, success, reason)``.
    """
    body = world.agent(agent_id)
    v = action.verb
    if v == "wait":
        return world, True, None
    if v == "explore":
        mine = world.explored.get(agent_id, ())
        if body.room in mine:
            return world, True, None
        explored = dict(world.explored)
        explored[agent_id] = mine + (body.room,)
        return replace(world, explored=explored), True, None
    if v == "goto":
        target = action.args[0].id
        length = world.edge_length(body.room, target)
        if length is None:
            return world, False, "not adjacent"
        agents = dict(world.agents)
        agents[agent_id] = replace(body, room=target, distance_traveled=body.distance_traveled + length)
        return replace(world, agents=agents), True, None

    visible = {i.ref.id: i for i in scene(world, agent_id)}
    if v == "open":
        oid = action.args[0].id
        if oid not in visible:
            return world, False, "not visible"
        o = world.obj(oid)
        if o.kind != "container":
            return world, False, "not a container"
        if o.open:
            return world, False, "already open"
        objects = dict(world.objects)
        objects[oid] = replace(o, open=True)
        return replace(world, objects=objects), True, None
    if v == "grasp":
        oid = action.args[0].id
        if oid in body.held:
            return world, False, "already held"
        if oid not in visible:
            return world, False, "not visible"
        o = world.obj(oid)
        if o.kind == "container":
            return world, False, "not graspable"
        if o.location.kind == "delivered":
            return world, False, "already delivered"
        if len(body.held) >= HOLD_CAPACITY:
            return world, False, "hands full"
        objects = dict(world.objects)
        objects[oid] = replace(o, location=held_by(agent_id))
        agents = dict(world.agents)
        agents[agent_id] = replace(body, held=body.held + (oid,))
        return replace(world, objects=objects, agents=agents), True, None
    if v in ("put_in", "put_on"):
        oid = action.args[0].id
        if oid not in body.held:
            return world, False, "not holding"
        o = world.obj(oid)
        if v == "put_in":
            cid = action.args[1].id
            if cid not in visible:
                return world, False, "container not visible"
            c = world.obj(cid)
            if c.kind != "container":
                return world, False, "not a container"
            if not c.open:
                return world, False, "container closed"
            new_loc = inside(cid)
        else:
            dest = action.args[1]
            if dest == GOAL:
                if body.room != world.goal_zone:
                    return world, False, "not at destination"
                new_loc = delivered(GOAL)
            else:
                if body.room != dest.id:
                    return world, False, "not at destination"
                new_loc = delivered(dest.id)
        objects = dict(world.objects)
        objects[oid] = replace(o, location=new_loc)
        agents = dict(world.agents)
        agents[agent_id] = replace(body, held=tuple(h for h in body.held if h != oid))
        return replace(world, objects=objects, agents=agents), True, None
    raise MalformedActionError(f"unsupported verb {v!r}")


def _coerce(world: WorldState, agent_id: int, action) -> PrimitiveAction:
    world.agent(agent_id)
    try:
        action = parse_action(action)
    except ValueError as exc:
        raise MalformedActionError(str(exc)) from None
    _validate_structure(world, action)
    return action


def _done_ids(world: WorldState, goals: Iterable[SubGoal]) -> set[int]:
    return {g.object_id for g in goals if sub_goal_done(world, g)}


def apply(world: WorldState, agent_id: int, action, goals: Iterable[SubGoal] = ()) -> TransitionResult:
    """Single-agent transition: executes ``action`` and advances the clock by one.

    Malformed actions raise ``MalformedActionError`` and consume no step.
    ``goals`` lets the caller learn which sub-goals this action completed.
    """
    action = _coerce(world, agent_id, action)
    goals = tuple(goals)
    before = _done_ids(world, goals)
    new, ok, reason = _transition(world, agent_id, action)
    new = replace(new, step_count=world.step_count + 1)
    completed = tuple(sorted(_done_ids(new, goals) - before))
    return TransitionResult(new, ok, reason, completed)


def step(
    world: WorldState, joint: Mapping[int, Any], goals: Iterable[SubGoal] = ()
) -> tuple[WorldState, dict[int, TransitionResult]]:
    """One simulation step: every listed agent acts once, in ascending id order.

    The clock advances by exactly one regardless of the number of agents.
    """
    goals = tuple(goals)
    coerced = {a: _coerce(world, a, joint[a]) for a in sorted(joint)}
    results: dict[int, TransitionResult] = {}
    cur = world
    for a, action in coerced.items():
        before = _done_ids(cur, goals)
        cur, ok, reason = _transition(cur, a, action)
        results[a] = TransitionResult(cur, ok, reason, tuple(sorted(_done_ids(cur, goals) - before)))
    cur = replace(cur, step_count=world.step_count + 1)
    results = {a: replace(r, world=cur) for a, r in results.items()}
    return cur, results


def sub_goal_done(world: WorldState, goal: SubGoal) -> bool:
    o = world.objects.get(goal.object_id)
    return o is not None and o.location == delivered(goal.destination)


def completed_count(world: WorldState, task: TaskSpec) -> int:
    return sum(1 for g in task.sub_goals if g.done or sub_goal_done(world, g))


def is_terminal(world: WorldState, task: TaskSpec) -> TerminationStatus:
    done = completed_count(world, task)
    if task.scenario == "transport":
        success = done >= task.quota_basis
    else:
        success = done == len(task.sub_goals)
    if success:
        return TerminationStatus.SUCCESS
    if world.step_count >= task.step_limit:
        return TerminationStatus.STEP_LIMIT
    return TerminationStatus.RUNNING


# -- serialization ------------------------------------------------------------


def world_to_dict(world: WorldState) -> dict:
    return {
        "rooms": [{"id": r.id, "name": r.name} for r in world.rooms],
        "edges": [list(e) for e in world.edges],
        "objects": [
            {
                "id": o.id,
                "name": o.name,
                "kind": o.kind,
                "location": o.location.to_dict(),
                **({"open": o.open} if o.kind == "container" else {}),
            }
            for o in sorted(world.objects.values(), key=lambda o: o.id)
        ],
        "agents": [
            {"id": a.id, "room": a.room, "held": list(a.held), "distance_traveled": a.distance_traveled}
            for a in sorted(world.agents.values(), key=lambda a: a.id)
        ],
        "goal_zone": world.goal_zone,
        "start_room": world.start_room,
        "step_count": world.step_count,
        "rng_seed": world.rng_seed,
        "explored": {str(a): list(rs) for a, rs in sorted(world.explored.items())},
    }


def world_from_dict(d: Mapping) -> WorldState:
    try:
        objects = {}
        for o in d["objects"]:
            kind = o["kind"]
            objects[int(o["id"])] = ObjectEntity(
                id=int(o["id"]),
                name=o["name"],
                kind=kind,
                location=Location.from_dict(o["location"]),
                open=bool(o.get("open", False)) if kind == "container" else None,
            )
        agents = {
            int(a["id"]): AgentBody(
                id=int(a["id"]),
                room=int(a["room"]),
                held=tuple(int(h) for h in a.get("held", [])),
                distance_traveled=int(a.get("distance_traveled", 0)),
            )
            for a in d["agents"]
        }
        start = int(d.get("start_room", d["agents"][0]["room"]))
        explored = {int(k): tuple(int(r) for r in v) for k, v in d.get("explored", {}).items()}
        for a in agents:
            explored.setdefault(a, (start,))
        world = WorldState(
            rooms=tuple(Room(int(r["id"]), r["name"]) for r in d["rooms"]),
            edges=tuple((int(a), int(b), int(n)) for a, b, n in d["edges"]),
            objects=objects,
            agents=agents,
            goal_zone=int(d["goal_zone"]),
            start_room=start,
            step_count=int(d.get("step_count", 0)),
            rng_seed=int(d.get("rng_seed", 0)),
            explored=explored,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed world document: {exc}") from None
    validate_world(world)
    return world


def task_to_dict(task: TaskSpec) -> dict:
    return {
        "scenario": task.scenario,
        "sub_goals": [
            {"object_id": g.object_id, "destination": g.destination, "done": g.done}
            for g in task.sub_goals
        ],
        "step_limit": task.step_limit,
        "sub_goal_quota": task.sub_goal_quota,
    }


def task_from_dict(d: Mapping) -> TaskSpec:
    try:
        goals = tuple(
            SubGoal(
                int(g["object_id"]),
                GOAL if g["destination"] == GOAL else int(g["destination"]),
                bool(g.get("done", False)),
            )
            for g in d["sub_goals"]
        )
        quota = d.get("sub_goal_quota")
        return TaskSpec(d["scenario"], goals, int(d["step_limit"]), None if quota is None else int(quota))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed task document: {exc}") from None


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def digest(world: WorldState) -> str:
    return hashlib.sha256(canonical_json(world_to_dict(world)).encode()).hexdigest()


def load_world_file(path: str | Path) -> tuple[WorldState, TaskSpec, dict]:
    """Load a ``{"world": ..., "task": ...}`` file. Extra keys come back as a dict."""
    data = json.loads(Path(path).read_text())
    world = world_from_dict(data["world"])
    task = task_from_dict(data["task"])
    for g in task.sub_goals:
        if g.object_id not in world.objects:
            raise ConfigurationError(f"sub-goal refers to unknown object {g.object_id}")
    extra = {k: v for k, v in data.items() if k not in ("world", "task")}
    return world, task, extra


def save_world_file(path: str | Path, world: WorldState, task: TaskSpec, **extra) -> None:
    doc = {"world": world_to_dict(world), "task": task_to_dict(task), **extra}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")

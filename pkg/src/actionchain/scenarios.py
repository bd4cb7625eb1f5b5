"""Scenario templates and seeded world generation."""

from __future__ import annotations

import random
from dataclasses import dataclass, replace

from .actions import GOAL
from .errors import ConfigurationError
from .world import (
    AgentBody,
    ObjectEntity,
    Room,
    SubGoal,
    TaskSpec,
    WorldState,
    floor,
    inside,
    validate_world,
)

ROOM_NAMES = (
    "living_room", "kitchen", "bedroom", "bathroom", "office",
    "dining_room", "hallway", "storage", "laundry",
)
TARGET_NAMES = ("apple", "orange", "banana", "bread", "pen", "cup", "plate", "book", "remote")
CONTAINER_NAMES = ("box", "basket", "bowl", "cabinet")
DISTRACTOR_NAMES = ("pillow", "vase", "towel", "lamp", "shoe")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    kind: str
    n_rooms: int
    min_sub_goals: int
    max_sub_goals: int
    step_limit: int
    sub_goal_quota: int | None = None
    n_agents: int = 2
    n_containers: int = 2
    n_distractors: int = 3
    p_in_container: float = 0.3
    extra_edges: int = 1
    min_edge: int = 2
    max_edge: int = 8

    def validate(self) -> None:
        if self.kind not in ("transport", "watch-help"):
            raise ConfigurationError(f"unknown scenario kind {self.kind!r}")
        if self.n_rooms < 2 or self.n_rooms > len(ROOM_NAMES):
            raise ConfigurationError(f"room count must be in [2, {len(ROOM_NAMES)}]")
        if self.min_sub_goals < 1 or self.max_sub_goals < self.min_sub_goals:
            raise ConfigurationError("sub-goal count must be at least 1")
        if self.step_limit <= 0:
            raise ConfigurationError("step_limit must be positive")
        if self.n_agents < 1:
            raise ConfigurationError("need at least one agent")
        if self.min_edge <= 0 or self.max_edge < self.min_edge:
            raise ConfigurationError("edge lengths must be positive")


SCENARIOS: dict[str, ScenarioConfig] = {
    "transport-small": ScenarioConfig(
        "transport-small", "transport", n_rooms=6, min_sub_goals=6, max_sub_goals=6,
        step_limit=200, sub_goal_quota=6,
    ),
    "watch-help-small": ScenarioConfig(
        "watch-help-small", "watch-help", n_rooms=4, min_sub_goals=3, max_sub_goals=5,
        step_limit=150, n_containers=1, n_distractors=2,
    ),
    # benchmark-scale constants: 3000-step horizon, 10 sub-goal quota
    "transport-paper": ScenarioConfig(
        "transport-paper", "transport", n_rooms=8, min_sub_goals=10, max_sub_goals=10,
        step_limit=3000, sub_goal_quota=10, n_containers=3, n_distractors=5, extra_edges=2,
    ),
}


def get_scenario(scenario: str | ScenarioConfig, **overrides) -> ScenarioConfig:
    if isinstance(scenario, ScenarioConfig):
        cfg = scenario
    else:
        try:
            cfg = SCENARIOS[scenario]
        except KeyError:
            raise ConfigurationError(
                f"unknown scenario {scenario!r}; known: {', '.join(sorted(SCENARIOS))}"
            ) from None
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        try:
            cfg = replace(cfg, **overrides)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None
    cfg.validate()
    return cfg


def init_world(seed: int, scenario: str | ScenarioConfig, **overrides) -> tuple[WorldState, TaskSpec]:
    """Build the deterministic world and task for ``(seed, scenario)``."""
    cfg = get_scenario(scenario, **overrides)
    rng = random.Random(f"{cfg.name}/{cfg.kind}/{cfg.n_rooms}/{seed}")

    names = rng.sample(ROOM_NAMES, cfg.n_rooms)
    rooms = tuple(Room(i + 1, n) for i, n in enumerate(names))
    room_ids = [r.id for r in rooms]

    edges: dict[tuple[int, int], int] = {}
    for i in range(1, cfg.n_rooms):
        j = rng.randrange(i)
        edges[(room_ids[j], room_ids[i])] = rng.randint(cfg.min_edge, cfg.max_edge)
    pairs = [(a, b) for a in room_ids for b in room_ids if a < b and (a, b) not in edges]
    for a, b in rng.sample(pairs, min(cfg.extra_edges, len(pairs))):
        edges[(a, b)] = rng.randint(cfg.min_edge, cfg.max_edge)

    start = room_ids[0]
    goal_zone = rng.choice(room_ids[1:])

    n_goals = rng.randint(cfg.min_sub_goals, cfg.max_sub_goals)
    n_objects = n_goals + cfg.n_containers + cfg.n_distractors
    ids = sorted(rng.sample(range(10, 100), n_objects))
    rng.shuffle(ids)
    id_iter = iter(ids)

    objects: dict[int, ObjectEntity] = {}
    containers: list[ObjectEntity] = []
    for _ in range(cfg.n_containers):
        c = ObjectEntity(next(id_iter), rng.choice(CONTAINER_NAMES), "container",
                         floor(rng.choice(room_ids)), open=False)
        containers.append(c)
        objects[c.id] = c

    def place(kind: str, name: str) -> ObjectEntity:
        room = rng.choice(room_ids)
        here = [c for c in containers if c.location.where == room]
        if here and rng.random() < cfg.p_in_container:
            loc = inside(rng.choice(here).id)
        else:
            loc = floor(room)
        return ObjectEntity(next(id_iter), name, kind, loc)

    targets = [place("target", rng.choice(TARGET_NAMES)) for _ in range(n_goals)]
    for t in targets:
        objects[t.id] = t
    for _ in range(cfg.n_distractors):
        d = place("distractor", rng.choice(DISTRACTOR_NAMES))
        objects[d.id] = d

    goals = []
    for t in sorted(targets, key=lambda t: t.id):
        if cfg.kind == "transport":
            goals.append(SubGoal(t.id, GOAL))
        else:
            origin = _room_of(objects, t.id)
            goals.append(SubGoal(t.id, rng.choice([r for r in room_ids if r != origin])))

    agents = {i: AgentBody(i, start) for i in range(cfg.n_agents)}
    world = WorldState(
        rooms=rooms,
        edges=tuple(sorted((a, b, n) for (a, b), n in edges.items())),
        objects=dict(sorted(objects.items())),
        agents=agents,
        goal_zone=goal_zone,
        start_room=start,
        step_count=0,
        rng_seed=seed,
        explored={i: (start,) for i in agents},
    )
    validate_world(world)
    quota = cfg.sub_goal_quota if cfg.kind == "transport" else None
    if quota is not None:
        quota = min(quota, len(goals))
    task = TaskSpec(cfg.kind, tuple(goals), cfg.step_limit, quota)
    return world, task


def _room_of(objects: dict[int, ObjectEntity], oid: int) -> int:
    loc = objects[oid].location
    if loc.kind == "inside":
        return int(objects[int(loc.where)].location.where)
    return int(loc.where)

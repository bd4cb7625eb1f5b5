"""Episode orchestration: construct, validate, refine, execute.

Each simulation step runs three phases. In phase A every agent, in
ascending id order, has its next action validated and, when needed,
refined until it is executable. Phase B executes the agreed joint action
through the simulator, which advances the clock once. Phase C folds the new
observations into shared memory and sends any execution failures back to
chain refinement. Backend calls never consume simulation steps.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Iterator, Mapping

import yaml

from .actions import WAIT, PrimitiveAction
from .backends.base import CallLog, CallRecord, PlannerBackend
from .backends.scripted import ScriptedBackend
from .chain import ActionChain, new_chain
from .errors import ConfigurationError, MalformedActionError, NotFoundError, ReplayError, TransportError
from .memory import SharedMemory
from .prompting import CaseLibrary
from .refiner import ABLATIONS, NO_ACTION_CHAIN, NO_INTENTION_BINDING, NO_PROACTIVE_REPLAN, UNSPECIFIED, Refiner
from .scenarios import init_world
from .validator import CONFLICT, EXECUTABLE, INFEASIBLE, NEEDS_INSERTION, classify
from .world import (
    TaskSpec,
    TerminationStatus,
    WorldState,
    digest,
    is_terminal,
    load_world_file,
    observe,
    step,
    task_from_dict,
    task_to_dict,
    world_from_dict,
    world_to_dict,
)

log = logging.getLogger(__name__)

BACKENDS = ("scripted", "llm")


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "transport-small"
    seed: int = 0
    backend: str = "scripted"
    ablations: frozenset[str] = frozenset()
    step_limit: int | None = None
    sub_goal_quota: int | None = None
    n_agents: int | None = None
    world_file: str | None = None
    history_cap: int = 20
    latency: str = "virtual"
    max_rounds: int = 8
    llm: Mapping[str, Any] | None = None

    def __post_init__(self):
        object.__setattr__(self, "ablations", frozenset(self.ablations))
        bad = sorted(self.ablations - set(ABLATIONS))
        if bad:
            raise ConfigurationError(f"unknown ablation(s): {', '.join(bad)}")
        if self.backend not in BACKENDS:
            raise ConfigurationError(f"backend must be one of {', '.join(BACKENDS)}")
        if self.backend == "llm" and not self.llm:
            raise ConfigurationError("the llm backend needs an 'llm' config section")
        if self.max_rounds < 1 or self.history_cap < 0:
            raise ConfigurationError("max_rounds must be positive and history_cap non-negative")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "RunConfig":
        data = dict(data)
        if "ablation" in data:
            data["ablations"] = data.pop("ablation")
        if isinstance(data.get("ablations"), str):
            data["ablations"] = [data["ablations"]]
        known = {f.name for f in fields(cls)}
        extra = sorted(set(data) - known)
        if extra:
            raise ConfigurationError(f"unknown config keys: {', '.join(extra)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ablations"] = sorted(self.ablations)
        d["llm"] = dict(self.llm) if self.llm else None
        return d


def load_config(path: str | Path) -> RunConfig:
    """Read a run config from a JSON or YAML file."""
    text = Path(path).read_text()
    try:
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"config {path} must be a mapping")
    return RunConfig.from_mapping(data)


def make_backend(config: RunConfig) -> PlannerBackend:
    if config.backend == "scripted":
        return ScriptedBackend(latency=config.latency)
    from .backends.llm import LLMBackend
    from .llm_client import EndpointConfig

    return LLMBackend(EndpointConfig.from_mapping(config.llm))


# -- trace ----------------------------------------------------------------------


class EpisodeTrace:
    """Ordered JSON-serializable events of one episode."""

    def __init__(self, events: list[dict] | None = None):
        self.events: list[dict] = list(events or [])

    def emit(self, stage: str, step: int, **payload) -> dict:
        event = {"seq": len(self.events), "step": step, "stage": stage, **payload}
        self.events.append(event)
        return event

    def of(self, stage: str) -> list[dict]:
        return [e for e in self.events if e["stage"] == stage]

    @property
    def header(self) -> dict:
        return self.events[0]

    def __iter__(self) -> Iterator[dict]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodeTrace":
        try:
            events = [json.loads(line) for line in text.splitlines() if line.strip()]
        except json.JSONDecodeError as exc:
            raise ReplayError(f"trace is not valid JSON lines: {exc}") from None
        if not events or events[0].get("stage") != "header":
            raise ReplayError("trace does not start with a header event")
        return cls(events)

    @classmethod
    def load(cls, path: str | Path) -> "EpisodeTrace":
        return cls.from_jsonl(Path(path).read_text())


def replay(trace: EpisodeTrace) -> WorldState:
    """Re-execute the recorded joint actions and check every state digest.

    Returns the final world; raises ``ReplayError`` on the first mismatch.
    """
    head = trace.header
    world = world_from_dict(head["world"])
    task = task_from_dict(head["task"])
    pending: dict[int, dict] = {}
    for ev in trace.events[1:]:
        if ev["stage"] == "execute":
            pending[int(ev["agent"])] = ev
        elif ev["stage"] == "step":
            joint = {a: e["action"] for a, e in pending.items()}
            try:
                world, results = step(world, joint, task.sub_goals)
            except (MalformedActionError, NotFoundError) as exc:
                raise ReplayError(f"step {ev['step']}: recorded action rejected: {exc}") from None
            for a, res in results.items():
                if res.success != pending[a]["success"]:
                    raise ReplayError(f"step {ev['step']}: agent {a} success flag differs")
            if digest(world) != ev["digest"]:
                raise ReplayError(f"state digest mismatch after step {ev['step']}")
            pending = {}
    end = trace.of("end")
    if end and end[-1].get("digest") not in (None, digest(world)):
        raise ReplayError("final state digest mismatch")
    return world


# -- episode ----------------------------------------------------------------------


class _Episode:
    def __init__(self, config: RunConfig, backend: PlannerBackend, world: WorldState,
                 task: TaskSpec, initial_chains: Mapping[int, ActionChain] | None):
        self.config = config
        self.world = world
        self.task = task.refreshed(world)
        self.agents = sorted(world.agents)
        self.trace = EpisodeTrace()
        self.memory = SharedMemory.for_task(world, task, config.history_cap)
        self.calls = CallLog()
        self.calls.listeners.append(self._on_call)
        self.refiner = Refiner(backend, self.memory, self.calls, config.ablations,
                               CaseLibrary.default(), emit=self._emit)
        self.chains: dict[int, ActionChain | None] = {a: None for a in self.agents}
        self.trace.emit(
            "header", world.step_count,
            config=config.to_dict(), backend=getattr(backend, "name", type(backend).__name__),
            world=world_to_dict(world), task=task_to_dict(task),
            initial_chains={str(a): c.to_dict() for a, c in sorted((initial_chains or {}).items())},
        )
        for a, c in sorted((initial_chains or {}).items()):
            self.chains[a] = self._adopt(c)
        self._observe()

    def _adopt(self, chain: ActionChain) -> ActionChain | None:
        """Apply the run's ablations to a chain supplied from outside."""
        acts = self.refiner.shape(chain.remaining)
        if not acts:
            return None
        intention = UNSPECIFIED if NO_INTENTION_BINDING in self.config.ablations else chain.intention
        return new_chain(intention, acts, chain.inference_process)

    def _emit(self, stage: str, **payload) -> None:
        self.trace.emit(stage, self.world.step_count, **payload)

    def _on_call(self, rec: CallRecord) -> None:
        self._emit("backend", purpose=rec.purpose, agents=list(rec.agents), prompt=rec.prompt,
                   response=rec.response, usage=rec.usage.to_dict(), latency=rec.latency,
                   ok=rec.ok, error=rec.error)

    def _observe(self) -> None:
        for a in self.agents:
            self.memory.update(observe(self.world, a))

    def _all_next(self) -> dict[int, tuple[PrimitiveAction | None, str | None]]:
        out = {}
        for a, c in self.chains.items():
            if c is not None and not c.exhausted:
                out[a] = (c.peek_next(), c.active_intention)
        return out

    def _construct(self, agents: list[int], view) -> None:
        if NO_ACTION_CHAIN in self.config.ablations:
            # step-by-step planning: every agent's next action is its own call
            for a in agents:
                self.chains.update(self.refiner.construct(view, [a], self.chains))
        else:
            self.chains.update(self.refiner.construct(view, agents, self.chains))
        for a in agents:
            self.memory.set_chain_summary(a, self.chains[a].active_intention)

    def _phase_a(self) -> dict[int, tuple[PrimitiveAction, bool]]:
        """Validate and refine until every agent has an executable action."""
        view = self.memory.view()
        need = [a for a in self.agents if self.chains[a] is None or self.chains[a].exhausted]
        if need:
            self._construct(need, view)
        decided: dict[int, tuple[PrimitiveAction, bool]] = {}
        rounds = {a: 0 for a in self.agents}
        queue = list(self.agents)
        check = NO_PROACTIVE_REPLAN not in self.config.ablations
        while queue:
            a = queue.pop(0)
            rounds[a] += 1
            if rounds[a] > self.config.max_rounds:
                decided[a] = (WAIT, True)
                self._emit("validate", agent=a, action=str(WAIT), forced=True,
                           verdict={"kind": "forced_wait"})
                continue
            chain = self.chains[a]
            if chain is None or chain.exhausted:
                self._construct([a], view)
                chain = self.chains[a]
            verdict = classify(a, chain, view, self._all_next(), check_feasibility=check)
            self._emit("validate", agent=a, action=str(chain.peek_next()), verdict=verdict.to_dict())
            if verdict.kind == EXECUTABLE:
                decided[a] = (chain.peek_next(), False)
                continue
            if verdict.kind == NEEDS_INSERTION:
                self.chains[a] = self.refiner.chain_insertion(a, chain, view, self.chains)
            elif verdict.kind == INFEASIBLE:
                self.chains[a] = self.refiner.chain_refinement(a, chain, verdict.reason, view, self.chains)
            elif verdict.kind == CONFLICT:
                peer = verdict.peer
                before = self.chains[peer]
                lo, hi = sorted((peer, a))
                self.chains[lo], self.chains[hi] = self.refiner.conflict_resolution(
                    peer, a, self.chains, verdict.contested, view)
                if self.chains[peer] != before:
                    # a lower agent's plan moved: everyone after it is re-checked
                    redo = {b for b in decided if b >= peer}
                    for b in redo:
                        del decided[b]
                    queue = sorted(set(queue) | redo | {a})
                    continue
            queue.insert(0, a)
        return dict(sorted(decided.items()))

    def _execute(self, decided: dict[int, tuple[PrimitiveAction, bool]]) -> list[tuple[int, PrimitiveAction, str]]:
        before = self.world.step_count
        joint = {a: act for a, (act, _) in decided.items()}
        self.world, results = step(self.world, joint, self.task.sub_goals)
        failures = []
        for a, (act, forced) in decided.items():
            res = results[a]
            self.trace.emit("execute", before, agent=a, action=str(act), success=res.success,
                            reason=res.reason, completed=list(res.completed), forced=forced)
            if forced:
                continue
            if res.success:
                self.chains[a] = self.chains[a].advance()
            else:
                failures.append((a, act, res.reason))
        self.task = self.task.refreshed(self.world)
        self._observe()
        self._emit(
            "step", digest=digest(self.world),
            agents=[{"id": b.id, "room": b.room, "held": list(b.held), "distance": b.distance_traveled}
                    for b in sorted(self.world.agents.values(), key=lambda b: b.id)],
            completed=sum(1 for g in self.task.sub_goals if g.done),
        )
        return failures

    def _react(self, failures: list[tuple[int, PrimitiveAction, str]]) -> None:
        if not failures:
            return
        view = self.memory.view()
        for a, act, reason in failures:
            self.chains[a] = self.refiner.chain_refinement(
                a, self.chains[a], f"execution failed: {reason}", view, self.chains, trigger=act)

    def run(self):
        from .metrics import finalize

        status = is_terminal(self.world, self.task)
        try:
            while status is TerminationStatus.RUNNING:
                self._react(self._execute(self._phase_a()))
                status = is_terminal(self.world, self.task)
            outcome = status.value
        except (TransportError, ConfigurationError) as exc:
            log.error("episode aborted: %s", exc)
            self._emit("abort", error=str(exc))
            outcome = "aborted"
        metrics = finalize(self.trace, self.world, self.task)
        self._emit("end", status=outcome, digest=digest(self.world), metrics=metrics.to_dict())
        self.trace.world = self.world
        self.trace.task = self.task
        return metrics, self.trace


def prepare(config: RunConfig, world: WorldState | None = None, task: TaskSpec | None = None,
            initial_chains: Mapping[int, ActionChain] | None = None):
    """Resolve the starting world, task, and chains for ``config``."""
    if world is None or task is None:
        if config.world_file:
            world, task, extra = load_world_file(config.world_file)
            if initial_chains is None and "initial_chains" in extra:
                initial_chains = {int(a): new_chain(c["intention"], c["actions"])
                                  for a, c in extra["initial_chains"].items()}
        else:
            world, task = init_world(config.seed, config.scenario, n_agents=config.n_agents)
    if config.step_limit is not None or config.sub_goal_quota is not None:
        task = replace(task,
                       step_limit=config.step_limit or task.step_limit,
                       sub_goal_quota=config.sub_goal_quota or task.sub_goal_quota)
    return world, task, initial_chains


def run_episode(config: RunConfig | Mapping[str, Any], backend: PlannerBackend | None = None,
                world: WorldState | None = None, task: TaskSpec | None = None,
                initial_chains: Mapping[int, ActionChain] | None = None):
    """Run one episode and return ``(MetricsRecord, EpisodeTrace)``.

    ``world``/``task`` override scenario generation and ``initial_chains``
    seeds agents with ready-made chains (used by the worked-scenario
    fixtures). The returned trace also carries the final ``world`` and
    ``task`` as attributes.
    """
    if not isinstance(config, RunConfig):
        config = RunConfig.from_mapping(config)
    world, task, initial_chains = prepare(config, world, task, initial_chains)
    backend = backend or make_backend(config)
    return _Episode(config, backend, world, task, initial_chains).run()

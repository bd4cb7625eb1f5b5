"""Few-shot case library, prompt templates, and prompt-context assembly."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import yaml

from .actions import PrimitiveAction
from .chain import PURPOSES, ActionChain
from .errors import ConfigurationError, ContextError
from .memory import SharedMemory, WorldView
from .world import Observation

log = logging.getLogger(__name__)

SLOT_RE = re.compile(r"<([A-Z][A-Za-z0-9 ]*)>")


# -- case library -------------------------------------------------------------


@dataclass(frozen=True)
class Case:
    id: str
    tag: str
    text: str


class CaseLibrary:
    """Few-shot exemplars keyed by situation tag.

    Cases live in a directory of ``*.md`` files, each opening with a YAML
    front-matter block carrying ``id`` and ``tag``::

        ---
        id: assignment-two-agents
        tag: assignment
        ---
        <example text>

    Retrieval is an exact tag match, returned in file-name order.
    """

    def __init__(self, cases: Iterable[Case] = ()):
        self.cases = list(cases)
        ids = [c.id for c in self.cases]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ConfigurationError(f"duplicate case ids: {', '.join(dupes)}")
        for c in self.cases:
            if c.tag not in PURPOSES:
                raise ConfigurationError(f"case {c.id!r} has unknown tag {c.tag!r}")
            leftover = SLOT_RE.findall(c.text)
            if leftover:
                raise ConfigurationError(f"case {c.id!r} has unresolved placeholder <{leftover[0]}>")

    @classmethod
    def load(cls, directory: str | Path) -> "CaseLibrary":
        paths = sorted(Path(directory).glob("*.md"))
        return cls(_parse_case(p.read_text(), p.stem) for p in paths)

    @classmethod
    def default(cls) -> "CaseLibrary":
        return _default_library()

    def retrieve(self, tag: str) -> list[str]:
        if tag not in PURPOSES:
            raise ConfigurationError(f"unknown situation tag {tag!r}")
        if not self.cases:
            log.warning("case library is empty; no few-shot examples for %r", tag)
            return []
        return [c.text for c in self.cases if c.tag == tag]


def retrieve_examples(library: CaseLibrary, tag: str) -> list[str]:
    return library.retrieve(tag)


def _parse_case(raw: str, fallback_id: str) -> Case:
    m = re.match(r"\A---\s*\n(.*?)\n---\s*\n?(.*)\Z", raw, re.DOTALL)
    if not m:
        raise ConfigurationError(f"case {fallback_id!r} lacks a front-matter block")
    meta = yaml.safe_load(m.group(1)) or {}
    if "tag" not in meta:
        raise ConfigurationError(f"case {fallback_id!r} has no tag")
    return Case(str(meta.get("id", fallback_id)), str(meta["tag"]), m.group(2).strip())


@lru_cache(maxsize=1)
def _default_library() -> CaseLibrary:
    root = resources.files("actionchain").joinpath("data/cases")
    cases = []
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".md"):
            cases.append(_parse_case(entry.read_text(), entry.name[:-3]))
    return CaseLibrary(cases)


# -- templates ----------------------------------------------------------------


@lru_cache(maxsize=None)
def load_template(purpose: str) -> str:
    if purpose not in PURPOSES:
        raise ConfigurationError(f"unknown purpose {purpose!r}")
    return resources.files("actionchain").joinpath(f"data/templates/{purpose}.txt").read_text()


def template_slots(template: str) -> list[str]:
    return SLOT_RE.findall(template)


def _team_template(template: str, team: Sequence[int]) -> str:
    """Widen the assignment template's agent slots to the whole team."""
    if len(team) == 2:
        return template
    slots = " ".join(f"<Agent{i} State> <Agent{i} Action Space>" for i in range(len(team)))
    return template.replace(
        "<Agent0 State> <Agent0 Action Space> <Agent1 State> <Agent1 Action Space>", slots
    )


# -- rendering helpers --------------------------------------------------------


def render_observation(obs: Observation) -> str:
    seen = []
    for (name, where), item in zip(obs.visible_objects, obs.items):
        tag = ""
        if item.kind == "container":
            tag = " [open]" if item.open else " [closed]"
        seen.append(f"{name} {where}{tag}")
    held = ", ".join(str(h) for h in obs.held) or "nothing"
    sees = "; ".join(seen) or "nothing"
    return f"step {obs.step_count} @ {obs.current_room}: sees {sees}; holding {held}"


def render_known_world(view: WorldView) -> str:
    lines = []
    plan = ", ".join(
        f"{view.rooms[a]}-{view.rooms[b]} {n}m" for a, b, n in view.edges
    )
    lines.append(f"Floor plan: {plan}")
    explored = ", ".join(str(view.rooms[r]) for r in sorted(view.explored)) or "none"
    unexplored = ", ".join(str(view.rooms[r]) for r in sorted(view.rooms) if r not in view.explored) or "none"
    lines.append(f"Explored rooms: {explored}")
    lines.append(f"Unexplored rooms: {unexplored}")
    tgt = []
    for oid in sorted(view.targets):
        t = view.targets[oid]
        loc = view.location_of(oid)
        where = view._describe(loc) if loc else "location unknown"
        tgt.append(f"{t.ref}: {where}")
    lines.append("Targets: " + "; ".join(tgt))
    closed = [view.name_of(c) for r in sorted(view.rooms) for c in view.closed_containers(r)]
    if closed:
        lines.append("Unopened containers: " + ", ".join(closed))
    return "\n".join(lines)


def render_action_space(actions: Iterable[PrimitiveAction], allow_replan: bool) -> str:
    out = sorted(str(a) for a in actions)
    if allow_replan:
        out.append("replan")
    return "\n".join(out)


# -- prompt context -----------------------------------------------------------


@dataclass(frozen=True)
class PromptContext:
    """Everything a planner backend needs for one request.

    ``slots`` holds the rendered text for each template placeholder; the
    structured fields carry the same information for non-textual backends.
    """

    purpose: str
    template: str
    slots: Mapping[str, str]
    view: WorldView
    agents: tuple[int, ...]
    chains: Mapping[int, ActionChain | None] = field(default_factory=dict)
    goal: str = ""
    reason: str | None = None
    trigger: PrimitiveAction | None = None
    contested: int | None = None
    allow_replan: bool = True
    intentions_visible: bool = True

    def render(self) -> str:
        def fill(m: re.Match) -> str:
            return f"\n{m.group(1)}:\n{self.slots[m.group(1)]}\n"

        return SLOT_RE.sub(fill, self.template)


def _chain_text(chain: ActionChain | None, intentions_visible: bool) -> str | None:
    if chain is None:
        return None
    text = chain.render()
    if not intentions_visible:
        text = "\n".join(l for l in text.splitlines() if not l.startswith("intention:"))
    return text


def build_context(
    memory: SharedMemory,
    view: WorldView | None,
    purpose: str,
    agents: Sequence[int],
    *,
    chains: Mapping[int, ActionChain | None] | None = None,
    library: CaseLibrary | None = None,
    reason: str | None = None,
    trigger: PrimitiveAction | None = None,
    contested: int | None = None,
    allow_replan: bool = True,
    intentions_visible: bool = True,
) -> PromptContext:
    """Assemble the prompt context for one planner request.

    Raises ``ContextError`` naming the first template slot that cannot be
    filled from the supplied memory, view, and chains.
    """
    if purpose not in PURPOSES:
        raise ConfigurationError(f"unknown purpose {purpose!r}")
    chains = dict(chains or {})
    agents = tuple(agents)
    library = library if library is not None else CaseLibrary.default()
    examples = library.retrieve(purpose)
    slots: dict[str, str | None] = {
        "Examples": "\n\n".join(examples) if examples else "(no examples)",
    }
    known = render_known_world(view) if view is not None else None

    def space(agent: int) -> str | None:
        if view is None or agent not in view.agents:
            return None
        return render_action_space(view.legal_actions(agent), allow_replan)

    def observation(agent: int) -> str | None:
        recent = memory.recent(agent)
        if not recent:
            return None
        body = "\n".join(render_observation(o) for o in recent)
        return body + ("\n" + known if known else "")

    if purpose == "assignment":
        team = sorted(memory.history) or list(agents)
        template = _team_template(load_template(purpose), team)
        goal = memory.goal_text + ("\n" + known if known else "")
        slots["Global Goal"] = goal
        for idx, a in enumerate(team):
            st = memory.agent_status.get(a)
            if st is None:
                slots[f"Agent{idx} State"] = None
            else:
                held = ", ".join(str(h) for h in st.held) or "nothing"
                status = "needs a new action chain" if a in agents else "busy"
                chain = _chain_text(chains.get(a), intentions_visible)
                recent = memory.recent(a)
                last = render_observation(recent[-1]) if recent else "no observations"
                text = f"Agent {a} ({status}) in {st.room}, holding {held}\nLatest: {last}"
                if chain and a not in agents:
                    text += "\nCurrent chain:\n" + chain
                slots[f"Agent{idx} State"] = text
            slots[f"Agent{idx} Action Space"] = space(a)
    else:
        template = load_template(purpose)
        slots["Goal"] = memory.goal_text
        if purpose == "conflict":
            pair = sorted(agents)
            for idx, a in enumerate(pair):
                slots[f"Agent{idx} Observation"] = observation(a)
                slots[f"Agent{idx} Action Chain"] = _chain_text(chains.get(a), intentions_visible)
            if trigger is not None or contested is not None:
                parts = []
                if trigger is not None:
                    parts.append(str(trigger))
                if contested is not None and view is not None:
                    parts.append(f"contested object {view.name_of(contested)}")
                slots["Conflicting Action"] = "; ".join(parts)
            else:
                slots["Conflicting Action"] = None
        else:
            (focus,) = agents
            slots["Action Space"] = space(focus)
            slots["Observation"] = observation(focus)
            chain = chains.get(focus)
            text = _chain_text(chain, intentions_visible)
            if text is not None and trigger is not None and reason:
                text += f"\nLatest unexecuted action {trigger} is infeasible: {reason}"
            slots["Action Chain"] = text
            if chain is not None:
                done = "\n".join(str(a) for a in chain.executed)
                slots["Executed Plans"] = done or "(none yet)"
            else:
                slots["Executed Plans"] = None

    for name in template_slots(template):
        if slots.get(name) is None:
            raise ContextError(name)
    assert view is not None  # every template demands at least one view-derived slot
    return PromptContext(
        purpose=purpose,
        template=template,
        slots={k: v for k, v in slots.items() if v is not None},
        view=view,
        agents=agents,
        chains=chains,
        goal=memory.goal_text,
        reason=reason,
        trigger=trigger,
        contested=contested,
        allow_replan=allow_replan,
        intentions_visible=intentions_visible,
    )

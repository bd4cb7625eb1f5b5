"""Primitive actions and their canonical text form.

Every entity is written ``name (id)`` so that identical items stay
distinguishable, e.g. ``grasp apple (23)`` or ``put_on apple (23) goal``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import NamedTuple, Union

from .errors import ActionParseError

GOAL = "goal"

VERBS = ("goto", "explore", "open", "grasp", "put_in", "put_on", "replan", "wait")

# verb -> argument shape; "ref" is an entity, "dest" is an entity or the goal marker
_SIGNATURES: dict[str, tuple[str, ...]] = {
    "goto": ("ref",),
    "explore": (),
    "open": ("ref",),
    "grasp": ("ref",),
    "put_in": ("ref", "ref"),
    "put_on": ("ref", "dest"),
    "replan": (),
    "wait": (),
}

_REF_RE = re.compile(r"([A-Za-z][A-Za-z0-9_\-]*)\s*\(\s*(\d+)\s*\)")
_GOAL_RE = re.compile(r"goal\b", re.IGNORECASE)


class Ref(NamedTuple):
    """A named entity reference such as ``kitchen (3)``."""

    name: str
    id: int

    def __str__(self) -> str:
        return f"{self.name} ({self.id})"


Arg = Union[Ref, str]


@dataclass(frozen=True)
class PrimitiveAction:
    verb: str
    args: tuple[Arg, ...] = ()

    def __post_init__(self):
        if self.verb not in _SIGNATURES:
            raise ActionParseError(f"unknown verb {self.verb!r}", self.verb)
        shape = _SIGNATURES[self.verb]
        if len(self.args) != len(shape):
            raise ActionParseError(
                f"{self.verb} takes {len(shape)} argument(s), got {len(self.args)}", self.verb
            )
        for kind, arg in zip(shape, self.args):
            if isinstance(arg, Ref):
                continue
            if kind == "dest" and arg == GOAL:
                continue
            raise ActionParseError(f"bad argument {arg!r} for {self.verb}", str(arg))

    def __str__(self) -> str:
        return " ".join([self.verb, *(str(a) for a in self.args)])

    @property
    def is_replan(self) -> bool:
        return self.verb == "replan"

    def refs(self) -> tuple[Ref, ...]:
        return tuple(a for a in self.args if isinstance(a, Ref))


def parse_action(text: str | PrimitiveAction) -> PrimitiveAction:
    """Parse one action string into its structured form."""
    if isinstance(text, PrimitiveAction):
        return text
    if not isinstance(text, str):
        raise ActionParseError(f"action must be a string, got {type(text).__name__}", repr(text))
    src = text.strip()
    if not src:
        raise ActionParseError("empty action", "")
    head, _, rest = src.partition(" ")
    verb = head.strip().lower()
    if verb not in _SIGNATURES:
        raise ActionParseError(f"unknown verb {head!r} in {text!r}", head)
    args: list[Arg] = []
    pos = 0
    rest = rest.strip()
    while pos < len(rest):
        if rest[pos].isspace():
            pos += 1
            continue
        m = _REF_RE.match(rest, pos)
        if m:
            args.append(Ref(m.group(1), int(m.group(2))))
            pos = m.end()
            continue
        m = _GOAL_RE.match(rest, pos)
        if m:
            args.append(GOAL)
            pos = m.end()
            continue
        token = rest[pos:].split()[0]
        raise ActionParseError(f"unparseable token {token!r} in {text!r}", token)
    try:
        return PrimitiveAction(verb, tuple(args))
    except ActionParseError as exc:
        raise ActionParseError(f"{exc} in {text!r}", exc.token) from None


def goto(room: Ref) -> PrimitiveAction:
    return PrimitiveAction("goto", (room,))


def grasp(obj: Ref) -> PrimitiveAction:
    return PrimitiveAction("grasp", (obj,))


def open_(container: Ref) -> PrimitiveAction:
    return PrimitiveAction("open", (container,))


def put_on(obj: Ref, dest: Arg) -> PrimitiveAction:
    return PrimitiveAction("put_on", (obj, dest))


def put_in(obj: Ref, container: Ref) -> PrimitiveAction:
    return PrimitiveAction("put_in", (obj, container))


EXPLORE = PrimitiveAction("explore")
REPLAN = PrimitiveAction("replan")
WAIT = PrimitiveAction("wait")

"""Deterministic scripted environment (states, actions, exogenous events).

States are sets of ground facts. Actions carry STRIPS-style preconditions
and add/delete lists. Within a tick the agent's action is applied first and
any event scheduled for that tick afterwards.

Scenario files are sectioned text::

    [init]
    at(depot); crate(depot)
    [actions]
    load: pre at(depot); crate(depot) | add loaded(crate) | del crate(depot)
    [events]
    1: del supply(open) | add cut(supply) | label supply-cutoff
    [horizon]
    12
    [goal]
    delivered(crate)
    [demos]
    from: at(depot); crate(depot) | goal: delivered(crate) | plan: load(); drive()
    [mcb]
    missing: supply(open) | unexpected: cut(supply) | goal: supply(open)

``demos`` and ``mcb`` seed the agent's case bases (see ``gda``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

from .cases import Term, parse_term, parse_terms
from .exceptions import EnvironmentHalted, MalformedRecord, PreconditionViolated

Fact = Term


class WorldState(frozenset):
    """Immutable fact set with deterministic iteration and rendering."""

    def __new__(cls, facts: Iterable[Fact] = ()):
        return super().__new__(cls, facts)

    def sorted(self) -> List[Fact]:
        return sorted(self, key=str)

    def __str__(self) -> str:
        return "; ".join(str(f) for f in self.sorted())

    def __repr__(self) -> str:
        return f"WorldState({{{str(self)}}})"

    @classmethod
    def parse(cls, text: str) -> "WorldState":
        return cls(parse_terms(text))


def facts(text: str) -> WorldState:
    return WorldState.parse(text)


@dataclass(frozen=True)
class ActionModel:
    pre: WorldState = WorldState()
    add: WorldState = WorldState()
    delete: WorldState = WorldState()


@dataclass(frozen=True)
class ExogenousEvent:
    tick: int
    add: WorldState = WorldState()
    delete: WorldState = WorldState()
    label: str = "unknown-cause"


@dataclass(frozen=True)
class Demo:
    start: WorldState
    goal: WorldState
    plan: tuple


@dataclass(frozen=True)
class MismatchSeed:
    missing: WorldState
    unexpected: WorldState
    goal: WorldState


@dataclass
class EnvScript:
    initial: WorldState
    actions: Dict[str, ActionModel]
    events: Tuple[ExogenousEvent, ...] = ()
    horizon: int = 10
    goal: WorldState = WorldState()
    demos: Tuple[Demo, ...] = ()
    mcb_seeds: Tuple[MismatchSeed, ...] = ()
    name: str = ""

    def __post_init__(self):
        ticks = [e.tick for e in self.events]
        if any(b <= a for a, b in zip(ticks, ticks[1:])):
            raise MalformedRecord("event ticks must be strictly increasing")
        if any(t < 0 for t in ticks):
            raise MalformedRecord("event ticks must be nonnegative")
        if self.horizon < 1:
            raise MalformedRecord("horizon must be >= 1")

    def event_at(self, tick: int) -> Optional[ExogenousEvent]:
        for e in self.events:
            if e.tick == tick:
                return e
        return None

    def applicable(self, state: WorldState, action: Optional[Term]) -> bool:
        if action is None:
            return True
        model = self.actions.get(action.symbol)
        return model is not None and model.pre <= state

    def apply_action(self, state: WorldState, action: Optional[Term]) -> WorldState:
        if action is None:
            return state
        model = self.actions.get(action.symbol)
        if model is None:
            raise PreconditionViolated(f"unknown action {action}")
        if not model.pre <= state:
            missing = WorldState(model.pre - state)
            raise PreconditionViolated(f"{action} needs {missing}")
        return WorldState((state - model.delete) | model.add)

    def without_events(self) -> "EnvScript":
        return EnvScript(self.initial, self.actions, (), self.horizon, self.goal,
                         self.demos, self.mcb_seeds, self.name)


def step(state: WorldState, action: Optional[Term], tick: int, script: EnvScript) -> WorldState:
    """One tick of the transition function: action first, then the event."""
    state = script.apply_action(state, action)
    event = script.event_at(tick)
    if event is not None:
        state = WorldState((state - event.delete) | event.add)
    return state


class Environment:
    """A running episode over an ``EnvScript``."""

    def __init__(self, script: EnvScript):
        self.script = script
        self.state = script.initial
        self.tick = 0
        self.last_event: Optional[ExogenousEvent] = None

    @property
    def active(self) -> bool:
        return self.tick < self.script.horizon

    def applicable(self, action: Optional[Term]) -> bool:
        return self.script.applicable(self.state, action)

    def step(self, action: Optional[Term]) -> WorldState:
        if not self.active:
            raise EnvironmentHalted(f"horizon {self.script.horizon} reached")
        self.state = step(self.state, action, self.tick, self.script)
        self.last_event = self.script.event_at(self.tick)
        self.tick += 1
        return self.state


# -- traces ---------------------------------------------------------------------

@dataclass
class TickRecord:
    tick: int
    state: WorldState
    action: Optional[Term]
    goal: WorldState
    expectation: Optional[WorldState] = None
    mismatch: Optional[dict] = None
    transition: Optional[dict] = None
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "tick": self.tick,
            "state": str(self.state),
            "action": None if self.action is None else str(self.action),
            "goal": str(self.goal),
            "expectation": None if self.expectation is None else str(self.expectation),
            "mismatch": self.mismatch,
            "transition": self.transition,
            "notes": list(self.notes),
        }


@dataclass
class GoalPursuit:
    """Segments executed under one goal; feeds the case-base updates."""

    goal: WorldState
    segments: List[Tuple[WorldState, WorldState, tuple]] = field(default_factory=list)
    final_state: Optional[WorldState] = None
    trigger: Optional[object] = None  # the Mismatch that spawned this goal


@dataclass
class EpisodeTrace:
    records: List[TickRecord] = field(default_factory=list)
    status: str = "incomplete"
    pursuits: List[GoalPursuit] = field(default_factory=list)
    final_state: Optional[WorldState] = None

    def transitions(self) -> List[TickRecord]:
        return [r for r in self.records if r.transition is not None]

    def mismatches(self) -> List[TickRecord]:
        return [r for r in self.records if r.mismatch is not None]

    @property
    def success(self) -> bool:
        return self.status == "success"

    def to_lines(self) -> List[str]:
        lines = [json.dumps(r.to_dict(), sort_keys=True, separators=(",", ":")) for r in self.records]
        lines.append(json.dumps({"terminal": self.status, "ticks": len(self.records)},
                                sort_keys=True, separators=(",", ":")))
        return lines

    def dumps(self) -> str:
        return "\n".join(self.to_lines()) + "\n"


# -- scenario files -------------------------------------------------------------

def _parts(line: str) -> Dict[str, str]:
    out = {}
    for chunk in line.split("|"):
        chunk = chunk.strip()
        if not chunk:
            continue
        key, _, body = chunk.partition(" ")
        key = key.rstrip(":")
        out[key] = body.strip()
    return out


def parse_script(text: str, name: str = "") -> EnvScript:
    sections: Dict[str, List[str]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in ("init", "actions", "events", "horizon", "goal", "demos", "mcb"):
                raise MalformedRecord(f"line {lineno}: unknown section [{current}]")
            sections.setdefault(current, [])
            continue
        if current is None:
            raise MalformedRecord(f"line {lineno}: content before any section")
        sections[current].append(line)

    initial = WorldState.parse("; ".join(sections.get("init", [])))
    actions = {}
    for line in sections.get("actions", []):
        head, sep, body = line.partition(":")
        if not sep:
            raise MalformedRecord(f"action line lacks ':': {line!r}")
        p = _parts(body)
        actions[head.strip()] = ActionModel(
            WorldState.parse(p.get("pre", "")),
            WorldState.parse(p.get("add", "")),
            WorldState.parse(p.get("del", "")),
        )
    events = []
    for line in sections.get("events", []):
        head, sep, body = line.partition(":")
        if not sep or not head.strip().isdigit():
            raise MalformedRecord(f"event line must start with '<tick>:': {line!r}")
        p = _parts(body)
        events.append(ExogenousEvent(
            int(head), WorldState.parse(p.get("add", "")), WorldState.parse(p.get("del", "")),
            p.get("label", "unknown-cause"),
        ))
    horizon_lines = sections.get("horizon", ["10"])
    try:
        horizon = int(horizon_lines[0])
    except ValueError:
        raise MalformedRecord(f"bad horizon {horizon_lines[0]!r}") from None
    goal = WorldState.parse("; ".join(sections.get("goal", [])))
    demos = []
    for line in sections.get("demos", []):
        p = _parts(line)
        demos.append(Demo(WorldState.parse(p.get("from", "")), WorldState.parse(p.get("goal", "")),
                          parse_terms(p.get("plan", ""))))
    seeds = []
    for line in sections.get("mcb", []):
        p = _parts(line)
        seeds.append(MismatchSeed(WorldState.parse(p.get("missing", "")),
                                  WorldState.parse(p.get("unexpected", "")),
                                  WorldState.parse(p.get("goal", ""))))
    return EnvScript(initial, actions, tuple(events), horizon, goal, tuple(demos), tuple(seeds), name)


def load_script(path) -> EnvScript:
    with open(path, encoding="utf-8") as fh:
        return parse_script(fh.read(), name=str(path))


SCENARIOS = ("event-free", "supply-cutoff", "cascading")


def builtin_scenario(name: str) -> EnvScript:
    """Load a shipped scenario fixture by name."""
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
    text = resources.files("cbrgda").joinpath("data", f"{name}.env").read_text(encoding="utf-8")
    return parse_script(text, name=name)

"""Goal-driven autonomy controller backed by two case bases.

The planning case base (PCB) maps (state, goal) to (expected state, plan);
the mismatch case base (MCB) maps discrepancies to suggested goals. The
controller executes retrieved plans in segments of ``monitor_period``
ticks, compares each segment's retrieved expectation with the observed
state, and on a discrepancy formulates and pushes a new goal.

All similarities are Jaccard over fact sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .cases import Term
from .env import (
    EnvScript,
    Environment,
    EpisodeTrace,
    GoalPursuit,
    TickRecord,
    WorldState,
)
from .exceptions import ConfigError, EmptyCaseBase, EnvironmentHalted, StackOverflow

UNKNOWN_CAUSE = "unknown-cause"


@dataclass(frozen=True)
class GdaConfig:
    theta_p: float = 0.8
    theta_m: float = 0.8
    monitor_period: int = 1
    max_depth: int = 8

    def __post_init__(self):
        for name in ("theta_p", "theta_m"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} outside [0, 1]")
        if self.monitor_period < 1:
            raise ConfigError("monitor_period must be a positive number of ticks")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be positive")


@dataclass(frozen=True)
class Goal:
    facts: WorldState
    priority: float = 0.0

    def __post_init__(self):
        if not self.facts:
            raise ValueError("a goal needs at least one fact")

    def satisfied(self, state: WorldState) -> bool:
        return self.facts <= state

    def __str__(self) -> str:
        return str(self.facts)


@dataclass(frozen=True)
class Mismatch:
    missing: WorldState
    unexpected: WorldState
    explanation: str = UNKNOWN_CAUSE

    def __post_init__(self):
        if self.missing & self.unexpected:
            raise ValueError("a fact cannot be both missing and unexpected")

    def key(self) -> Tuple[WorldState, WorldState]:
        return self.missing, self.unexpected

    def to_dict(self) -> dict:
        return {"missing": str(self.missing), "unexpected": str(self.unexpected),
                "explanation": self.explanation}


@dataclass(frozen=True)
class PlanningCase:
    s: WorldState
    g: WorldState
    e: WorldState
    p: tuple

    def __post_init__(self):
        if not self.p:
            raise ValueError("planning cases need a non-empty plan")


@dataclass(frozen=True)
class MismatchCase:
    m: Mismatch
    g: WorldState

    def __post_init__(self):
        if not (self.m.missing or self.m.unexpected):
            raise ValueError("mismatch cases need a non-empty mismatch")


def jaccard(a, b) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def state_sim(a: WorldState, b: WorldState) -> float:
    return jaccard(a, b)


def mismatch_sim(a: Mismatch, b: Mismatch) -> float:
    return (jaccard(a.missing, b.missing) + jaccard(a.unexpected, b.unexpected)) / 2


def _goal_facts(g) -> WorldState:
    return g.facts if isinstance(g, Goal) else WorldState(g)


def pcb_scores(pcb: Sequence[PlanningCase], s: WorldState, g) -> List[float]:
    gf = _goal_facts(g)
    return [state_sim(s, c.s) + jaccard(gf, c.g) for c in pcb]


def _argmax(scores: Sequence[float]) -> int:
    best = 0
    for i, v in enumerate(scores):
        if v > scores[best]:
            best = i
    return best


def best_pcb_entry(pcb: Sequence[PlanningCase], s: WorldState, g) -> Optional[Tuple[int, float]]:
    if not pcb:
        return None
    scores = pcb_scores(pcb, s, g)
    i = _argmax(scores)
    return i, scores[i]


def retrieve_pcb(pcb: Sequence[PlanningCase], s: WorldState, g) -> Tuple[WorldState, tuple]:
    """(expected state, plan) of the best-matching entry; earliest wins ties."""
    hit = best_pcb_entry(pcb, s, g)
    if hit is None:
        raise EmptyCaseBase("planning case base is empty")
    entry = pcb[hit[0]]
    return entry.e, entry.p


def detect_mismatch(expected: WorldState, actual: WorldState,
                    explanation: str = UNKNOWN_CAUSE) -> Optional[Mismatch]:
    if expected == actual:
        return None
    return Mismatch(WorldState(expected - actual), WorldState(actual - expected), explanation)


def best_mcb_entry(mcb: Sequence[MismatchCase], m: Mismatch) -> Optional[Tuple[int, float]]:
    if not mcb:
        return None
    scores = [mismatch_sim(m, c.m) for c in mcb]
    i = _argmax(scores)
    return i, scores[i]


def retrieve_mcb(mcb: Sequence[MismatchCase], m: Mismatch) -> Goal:
    hit = best_mcb_entry(mcb, m)
    if hit is None:
        raise EmptyCaseBase("mismatch case base is empty")
    return Goal(mcb[hit[0]].g)


def formulate_goal(s: WorldState, m: Mismatch, suggested: Goal) -> Optional[Goal]:
    """Drop already-true facts from the suggestion; fall back to restoring
    the missing facts. None when there is nothing left to achieve."""
    remaining = WorldState(suggested.facts - s)
    if remaining:
        return Goal(remaining, suggested.priority)
    if m.missing:
        return Goal(m.missing, suggested.priority)
    return None


class GoalManager:
    """Priority-ordered goal stack; FIFO among equal priorities."""

    def __init__(self, max_depth: int = 8):
        self.max_depth = max_depth
        self._items: List[Tuple[float, int, Goal]] = []
        self._counter = 0

    def push(self, goal: Goal) -> None:
        if len(self._items) >= self.max_depth:
            raise StackOverflow(f"goal stack at max depth {self.max_depth}")
        self._items.append((-goal.priority, self._counter, goal))
        self._counter += 1
        self._items.sort(key=lambda t: (t[0], t[1]))

    def peek(self) -> Optional[Goal]:
        return self._items[0][2] if self._items else None

    def next(self) -> Goal:
        if not self._items:
            raise IndexError("goal stack is empty")
        return self._items.pop(0)[2]

    def __contains__(self, facts) -> bool:
        return any(g.facts == facts for _, _, g in self._items)

    def __len__(self) -> int:
        return len(self._items)


def goal_manager_push(stack: GoalManager, g: Goal) -> GoalManager:
    stack.push(g)
    return stack


def goal_manager_next(stack: GoalManager) -> Goal:
    return stack.next()


# -- seeding case bases from scenario fixtures ----------------------------------

def seed_pcb(script: EnvScript, cfg: GdaConfig = GdaConfig()) -> List[PlanningCase]:
    """Replay each demo through the event-free dynamics, cutting it into
    ``monitor_period``-step segments."""
    out: List[PlanningCase] = []
    t = cfg.monitor_period
    for demo in script.demos:
        state = demo.start
        for i in range(0, len(demo.plan), t):
            chunk = tuple(demo.plan[i:i + t])
            after = state
            for action in chunk:
                after = script.apply_action(after, action)
            entry = PlanningCase(state, demo.goal, after, chunk)
            if entry not in out:
                out.append(entry)
            state = after
    return out


def seed_mcb(script: EnvScript) -> List[MismatchCase]:
    return [MismatchCase(Mismatch(s.missing, s.unexpected), s.goal) for s in script.mcb_seeds]


# -- the control loop ------------------------------------------------------------

def _as_goal(g: Union[Goal, WorldState, str]) -> Goal:
    if isinstance(g, Goal):
        return g
    if isinstance(g, str):
        return Goal(WorldState.parse(g))
    return Goal(WorldState(g))


def run_gda(script: EnvScript, g_init, pcb: Sequence[PlanningCase], mcb: Sequence[MismatchCase],
            cfg: GdaConfig = GdaConfig()) -> EpisodeTrace:
    """Run one episode of the case-based GDA loop.

    Each segment: retrieve (expected state, plan) for the current state and
    goal, execute up to ``monitor_period`` steps, then compare expectation
    and observation. A discrepancy retrieves a suggested goal from the MCB,
    which is formulated and pushed above the current goal; the transition
    takes effect on the next tick.
    """
    env = Environment(script)
    if not env.active:
        raise EnvironmentHalted("environment starts halted")
    goals = GoalManager(cfg.max_depth)
    first = _as_goal(g_init)
    goals.push(first)
    trace = EpisodeTrace()
    # keyed by identity; the goal is kept alive so its id is never recycled
    open_pursuits: Dict[int, Tuple[Goal, GoalPursuit]] = {}

    def pursuit_for(goal: Goal, trigger=None) -> GoalPursuit:
        key = id(goal)
        if key not in open_pursuits:
            open_pursuits[key] = (goal, GoalPursuit(goal.facts, trigger=trigger))
            trace.pursuits.append(open_pursuits[key][1])
        return open_pursuits[key][1]

    pursuit_for(first)
    pending_notes: List[str] = []
    pending_transition: Optional[dict] = None

    while True:
        goal = goals.peek()
        if goal is None:
            trace.status = "success"
            break
        if goal.satisfied(env.state):
            goals.next()
            pursuit_for(goal).final_state = env.state
            note = f"goal-completed: {goal}"
            if trace.records:
                trace.records[-1].notes.append(note)
            else:
                pending_notes.append(note)
            continue
        if not env.active:
            trace.status = "incomplete"
            break

        start = env.state
        hit = best_pcb_entry(pcb, start, goal)
        notes = list(pending_notes)
        pending_notes = []
        if hit is None or hit[1] <= 0.0:
            plan, expectation = (), None
            notes.append("no-plan" if hit is None else "no-expectation")
        else:
            entry = pcb[hit[0]]
            plan, expectation = entry.p, entry.e

        executed: List[Term] = []
        labels: List[str] = []
        broken = False
        ticks_run = 0
        for j in range(cfg.monitor_period):
            if not env.active:
                break
            action = plan[j] if j < len(plan) and not broken else None
            if action is not None and not env.applicable(action):
                notes.append(f"precondition-failed: {action}")
                action, broken = None, True
            tick = env.tick
            env.step(action)
            ticks_run += 1
            if action is not None:
                executed.append(action)
            if env.last_event is not None:
                labels.append(env.last_event.label)
            rec = TickRecord(tick, env.state, action, goal.facts, notes=notes)
            notes = []
            if pending_transition is not None:
                rec.transition, pending_transition = pending_transition, None
            trace.records.append(rec)

        if executed and not broken:
            pursuit_for(goal).segments.append((start, env.state, tuple(executed)))

        if expectation is None or ticks_run < cfg.monitor_period:
            continue
        last = trace.records[-1]
        last.expectation = expectation
        m = detect_mismatch(expectation, env.state, "+".join(labels) or UNKNOWN_CAUSE)
        if m is None:
            continue
        last.mismatch = m.to_dict()
        hit_m = best_mcb_entry(mcb, m)
        if hit_m is None or hit_m[1] <= 0.0:
            last.mismatch["resolution"] = "unresolved"
            last.notes.append("unresolved-mismatch")
            continue
        new_goal = formulate_goal(env.state, m, Goal(mcb[hit_m[0]].g))
        if new_goal is None or new_goal.facts in goals:
            last.mismatch["resolution"] = "unresolved"
            last.notes.append("unresolved-mismatch")
            continue
        new_goal = Goal(new_goal.facts, goal.priority + 1)
        try:
            goals.push(new_goal)
        except StackOverflow:
            last.mismatch["resolution"] = "unresolved"
            last.notes.append("goal-stack-full")
            continue
        last.mismatch["resolution"] = f"mcb[{hit_m[0]}]"
        pursuit_for(new_goal, trigger=m)
        pending_transition = {"from": str(goal.facts), "to": str(new_goal.facts), "mcb_entry": hit_m[0]}

    trace.final_state = env.state
    for p in trace.pursuits:
        if p.final_state is None:
            p.final_state = env.state
    return trace


def run_baseline_replanner(script: EnvScript, g_init, pcb: Sequence[PlanningCase]) -> EpisodeTrace:
    """Non-GDA comparison agent.

    Pursues ``g_init`` only: each tick it retrieves a plan for the unchanged
    goal and tries its first step. It never monitors expectations and never
    formulates new goals.
    """
    env = Environment(script)
    if not env.active:
        raise EnvironmentHalted("environment starts halted")
    goal = _as_goal(g_init)
    trace = EpisodeTrace()
    pursuit = GoalPursuit(goal.facts)
    trace.pursuits.append(pursuit)
    while True:
        if goal.satisfied(env.state):
            if trace.records:
                trace.records[-1].notes.append(f"goal-completed: {goal}")
            trace.status = "success"
            break
        if not env.active:
            trace.status = "incomplete"
            break
        start = env.state
        hit = best_pcb_entry(pcb, start, goal)
        notes = []
        action = None
        if hit is None or hit[1] <= 0.0:
            notes.append("no-plan" if hit is None else "no-expectation")
        else:
            action = pcb[hit[0]].p[0]
            if not env.applicable(action):
                notes.append(f"precondition-failed: {action}")
                action = None
        tick = env.tick
        env.step(action)
        if action is not None:
            pursuit.segments.append((start, env.state, (action,)))
        trace.records.append(TickRecord(tick, env.state, action, goal.facts, notes=notes))
    trace.final_state = env.state
    pursuit.final_state = env.state
    return trace


# -- learning between episodes ---------------------------------------------------

def plan_quality(goal: WorldState, state: WorldState) -> float:
    """Fraction of the goal's facts true in ``state``."""
    return len(goal & state) / len(goal) if goal else 0.0


def mismatch_quality(m: Mismatch, goal: WorldState, state: WorldState) -> float:
    """Fraction of missing facts restored, or of goal facts achieved when
    nothing was missing."""
    target = m.missing if m.missing else goal
    return len(target & state) / len(target) if target else 0.0


def update_pcb(pcb: Sequence[PlanningCase], episode: EpisodeTrace, cfg: GdaConfig = GdaConfig()) -> List[PlanningCase]:
    out = list(pcb)
    for pursuit in episode.pursuits:
        if plan_quality(pursuit.goal, pursuit.final_state) > cfg.theta_p:
            for s, e_actual, plan in pursuit.segments:
                entry = PlanningCase(s, pursuit.goal, e_actual, plan)
                if entry not in out:
                    out.append(entry)
    return out


def update_mcb(mcb: Sequence[MismatchCase], episode: EpisodeTrace, cfg: GdaConfig = GdaConfig()) -> List[MismatchCase]:
    out = list(mcb)
    for pursuit in episode.pursuits:
        m = pursuit.trigger
        if m is None:
            continue
        if mismatch_quality(m, pursuit.goal, pursuit.final_state) > cfg.theta_m:
            entry = MismatchCase(Mismatch(m.missing, m.unexpected), pursuit.goal)
            if entry not in out:
                out.append(entry)
    return out

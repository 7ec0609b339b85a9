"""Evaluation metrics: explainability, adaptation rate, cost and quality."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Tuple

from .exceptions import ConfigError, EmptyInput, OutOfRange, TooFewPoints


@dataclass(frozen=True)
class ReasoningInstance:
    trace_completeness: float
    complexity: float

    def __post_init__(self):
        if not 0.0 <= self.trace_completeness <= 1.0:
            raise OutOfRange("trace completeness must lie in [0, 1]")
        if not self.complexity > 0:
            raise OutOfRange("complexity must be positive")


def explainability(instances: Sequence[ReasoningInstance]) -> float:
    """Mean of trace completeness over complexity."""
    if not instances:
        raise EmptyInput("explainability needs at least one reasoning instance")
    return math.fsum(r.trace_completeness / r.complexity for r in instances) / len(instances)


def reasoning_instance(cand) -> ReasoningInstance:
    """Score a candidate solution's explanation trace.

    Completeness is the fraction of plan steps whose action is accounted
    for by a source plan, a required insertion or a generated rule.
    Complexity is the number of operations that changed something, at
    least 1.
    """
    ops = cand.provenance.operations
    known = set()
    changed = 0
    for op in ops:
        kind = op["op"]
        if kind == "select":
            known.update(op.get("actions", []))
        elif kind == "transform":
            c = op["constraints"]
            known.update(c["required"])
            if c["substitutions"] or c["forbidden"] or c["required"]:
                changed += 1
        elif kind == "compose":
            if len(op["cases"]) > 1:
                changed += 1
        elif kind in ("generate", "sketch", "template"):
            known.update(s.symbol for s in cand.plan)
            changed += 1
    plan = cand.plan
    if not plan:
        return ReasoningInstance(0.0, max(1, changed))
    covered = sum(1 for s in plan if s.symbol in known)
    return ReasoningInstance(covered / len(plan), max(1, changed))


@dataclass(frozen=True)
class PerformanceSeries:
    points: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        times = [t for t, _ in self.points]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("times must be strictly increasing")
        if any(not 0.0 <= p <= 1.0 for _, p in self.points):
            raise OutOfRange("performance must lie in [0, 1]")

    @classmethod
    def of(cls, pairs: Iterable) -> "PerformanceSeries":
        return cls(tuple((float(t), float(p)) for t, p in pairs))


def adaptation_rate(series) -> float:
    """Least-squares slope of performance against time."""
    pts = series.points if isinstance(series, PerformanceSeries) else tuple(series)
    if len(pts) < 2:
        raise TooFewPoints("adaptation rate needs at least two points")
    n = len(pts)
    mt = math.fsum(t for t, _ in pts) / n
    mp = math.fsum(p for _, p in pts) / n
    sxx = math.fsum((t - mt) ** 2 for t, _ in pts)
    sxy = math.fsum((t - mt) * (p - mp) for t, p in pts)
    return sxy / sxx


TIME_KEYS = ("retrieval", "processing", "generation")
MEMORY_KEYS = ("model", "knowledge", "working")


def cost_report(timings: Mapping[str, float], memory: Mapping[str, float]) -> Tuple[float, float]:
    """(T, M): total computation time and total memory."""
    for key, v in list(timings.items()) + list(memory.items()):
        if v < 0:
            raise OutOfRange(f"{key}={v} is negative")
    t = math.fsum(timings.get(k, 0.0) for k in TIME_KEYS)
    m = math.fsum(memory.get(k, 0.0) for k in MEMORY_KEYS)
    return t, m


@dataclass(frozen=True)
class QualityWeights:
    alpha: float = 0.4
    beta: float = 0.3
    gamma: float = 0.2
    delta: float = 0.1

    def __post_init__(self):
        ws = (self.alpha, self.beta, self.gamma, self.delta)
        if any(w < 0 for w in ws) or abs(sum(ws) - 1.0) > 1e-9:
            raise ConfigError("quality weights must be nonnegative and sum to 1")


def quality(accuracy: float, relevance: float, coherence: float, novelty: float,
            qw: QualityWeights = QualityWeights()) -> float:
    comps = (accuracy, relevance, coherence, novelty)
    if any(not 0.0 <= c <= 1.0 for c in comps):
        raise OutOfRange(f"quality components {comps} must lie in [0, 1]")
    return qw.alpha * accuracy + qw.beta * relevance + qw.gamma * coherence + qw.delta * novelty

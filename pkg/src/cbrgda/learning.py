"""Utility-gated retention, similarity-weight transfer and coverage gaps."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .cases import Case, Query
from .embedding import CaseLibrary
from .exceptions import ConfigError, EmptyInput, EmptyProblem
from .retrieval import RetrievalConfig, score_all, value_sim

# per-transfer multiplicative clamp on any single weight
MIN_FACTOR, MAX_FACTOR = 0.5, 2.0


@dataclass(frozen=True)
class RetentionConfig:
    delta: float = 0.6
    alpha: float = 0.5
    beta: float = 0.3
    gamma: float = 0.2
    neighborhood_k: int = 3

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError(f"delta={self.delta} outside [0, 1]")
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ConfigError("utility coefficients must be nonnegative")
        if abs(self.alpha + self.beta + self.gamma - 1.0) > 1e-9:
            raise ConfigError("alpha + beta + gamma must equal 1")
        if self.neighborhood_k < 1:
            raise ConfigError("neighborhood_k must be positive")


def _sims(case: Case, lib: CaseLibrary, rcfg: RetrievalConfig) -> List[float]:
    return [s.score for s in score_all(Query.from_case(case), lib, rcfg)]


def novelty(case: Case, lib: CaseLibrary, rcfg: RetrievalConfig = RetrievalConfig()) -> float:
    sims = _sims(case, lib, rcfg)
    return 1.0 - max(sims) if sims else 1.0


def effectiveness(case: Case) -> float:
    return case.outcome.success


def generalizability(case: Case, lib: CaseLibrary, k: int = 3,
                     rcfg: RetrievalConfig = RetrievalConfig()) -> float:
    """Mean fused similarity to the ``k`` nearest library cases."""
    if k < 1:
        raise ConfigError("k must be positive")
    sims = sorted(_sims(case, lib, rcfg), reverse=True)[:k]
    return sum(sims) / len(sims) if sims else 0.0


@dataclass(frozen=True)
class UtilityBreakdown:
    novelty: float
    effectiveness: float
    generalizability: float
    utility: float


def utility_from(novelty: float, effectiveness: float, generalizability: float,
                 rcfg: RetentionConfig = RetentionConfig()) -> float:
    return rcfg.alpha * novelty + rcfg.beta * effectiveness + rcfg.gamma * generalizability


def utility_breakdown(case: Case, lib: CaseLibrary, rcfg: RetentionConfig = RetentionConfig(),
                      retrieval: RetrievalConfig = RetrievalConfig()) -> UtilityBreakdown:
    sims = sorted(_sims(case, lib, retrieval), reverse=True)
    nov = 1.0 - sims[0] if sims else 1.0
    eff = effectiveness(case)
    top = sims[: rcfg.neighborhood_k]
    gen = sum(top) / len(top) if top else 0.0
    return UtilityBreakdown(nov, eff, gen, utility_from(nov, eff, gen, rcfg))


def utility(case: Case, lib: CaseLibrary, rcfg: RetentionConfig = RetentionConfig(),
            retrieval: RetrievalConfig = RetrievalConfig()) -> float:
    return utility_breakdown(case, lib, rcfg, retrieval).utility


def retain(lib: CaseLibrary, case: Case, rcfg: RetentionConfig = RetentionConfig(),
           retrieval: RetrievalConfig = RetrievalConfig()) -> Tuple[CaseLibrary, bool]:
    """Add ``case`` to ``lib`` (in place) iff its utility reaches delta."""
    if not case.problem:
        raise EmptyProblem(f"case {case.id} has an empty problem")
    if utility(case, lib, rcfg, retrieval) >= rcfg.delta:
        lib.index_case(case)
        return lib, True
    return lib, False


# -- knowledge transfer into the similarity container --------------------------

@dataclass
class FailureStats:
    """Per-feature evidence gathered from failed reuse episodes.

    When a retrieved precedent fails, features on which query and precedent
    disagreed count as ``misses`` (they should have weighed more) and
    features on which they agreed count as ``failures`` (agreement did not
    predict success).
    """

    misses: Counter = field(default_factory=Counter)
    failures: Counter = field(default_factory=Counter)
    episodes: int = 0

    def record_success(self) -> None:
        self.episodes += 1

    def record_failure(self, query, precedent: Case) -> None:
        q = query if isinstance(query, Query) else Query.of(query)
        self.episodes += 1
        for name, value in q.features.items():
            if name in precedent.problem and value_sim(value, precedent.problem[name]) == 1.0:
                self.failures[name] += 1
            else:
                self.misses[name] += 1

    def is_empty(self) -> bool:
        return self.episodes == 0 and not self.misses and not self.failures


def transfer_knowledge(weights: Mapping[str, float], fs: FailureStats, eta: float) -> Dict[str, float]:
    """Failure-driven refinement of feature weights, preserving their total."""
    if not 0.0 <= eta <= 1.0:
        raise ConfigError(f"eta={eta} outside [0, 1]")
    weights = dict(weights)
    if fs.is_empty() or not weights:
        return weights
    total = sum(weights.values())
    n = max(1, fs.episodes)
    scaled = {}
    for name, w in weights.items():
        factor = 1.0 + eta * (fs.misses.get(name, 0) - fs.failures.get(name, 0)) / n
        scaled[name] = w * min(MAX_FACTOR, max(MIN_FACTOR, factor))
    new_total = sum(scaled.values())
    if new_total <= 0:
        return weights
    return {name: w * total / new_total for name, w in scaled.items()}


# -- coverage gaps ---------------------------------------------------------------

@dataclass(frozen=True)
class GapReport:
    gaps: Tuple[Tuple[int, float], ...]  # (probe index, best similarity)
    densities: Tuple[Tuple[int, int, float], ...]  # (cluster, members, density)

    def rows(self, probes: Sequence[Query]) -> List[str]:
        from .cases import serialize_problem

        out = [f"gap\t{i}\t{best:.6f}\t{serialize_problem(probes[i].features)}" for i, best in self.gaps]
        out += [f"cluster\t{c}\t{m}\t{d:.6f}" for c, m, d in self.densities]
        return out


def gap_report(lib: CaseLibrary, probes: Sequence, coverage_threshold: float,
               rcfg: RetrievalConfig = RetrievalConfig()) -> GapReport:
    """Probes whose best fused similarity falls below ``coverage_threshold``."""
    if not probes:
        raise EmptyInput("gap report needs at least one probe")
    gaps = []
    for i, p in enumerate(probes):
        p = p if isinstance(p, Query) else Query.of(p)
        best = max((s.score for s in score_all(p, lib, rcfg)), default=0.0)
        if best < coverage_threshold:
            gaps.append((i, best))
    n = len(lib)
    dens = tuple(
        (ci, len(cl.members), len(cl.members) / n) for ci, cl in enumerate(lib.hierarchy.clusters)
    ) if n else ()
    return GapReport(tuple(gaps), dens)

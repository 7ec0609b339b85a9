"""Threshold retrieval over a fused three-channel similarity.

Each library case gets a semantic score (cosine of problem embeddings,
floored at 0), a feature score (weighted per-feature matching) and a
structural score (normalized LCS between action sequences, only when the
query carries a plan hint). The combined score is the lambda-weighted mean
of the three; a case is retrieved when combined >= tau.

Scores are rounded to 12 decimal places so that last-bit floating point
noise never reorders results or flips a threshold test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .cases import Case, FeatureMap, Query
from .embedding import CaseLibrary, problem_counts
from .exceptions import ConfigError, NoWeightedFeatures

SCORE_DECIMALS = 12
_BOUND_SLACK = 1e-9


def _q(x: float) -> float:
    return min(1.0, max(0.0, round(x, SCORE_DECIMALS)))


@dataclass(frozen=True)
class RetrievalConfig:
    """``weights=None`` weighs every query feature equally."""

    tau: float = 0.3
    weights: Optional[Mapping[str, float]] = None
    lambdas: Tuple[float, float, float] = (0.4, 0.4, 0.2)
    top_k: Optional[int] = 5

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau={self.tau} outside [0, 1]")
        if self.weights is not None:
            if any(w < 0 or not math.isfinite(w) for w in self.weights.values()):
                raise ConfigError("feature weights must be finite and nonnegative")
            if sum(self.weights.values()) <= 0:
                raise ConfigError("feature weights must not all be zero")
        if len(self.lambdas) != 3 or any(l < 0 for l in self.lambdas) or sum(self.lambdas) <= 0:
            raise ConfigError("lambdas must be three nonnegative reals with positive sum")
        if self.top_k is not None and self.top_k < 1:
            raise ConfigError("top_k must be positive")

    def weight(self, name: str) -> float:
        if self.weights is None:
            return 1.0
        return float(self.weights.get(name, 0.0))


@dataclass(frozen=True)
class ScoredCase:
    case_id: str
    score: float
    semantic: float
    feature: float
    structural: float

    def row(self) -> str:
        return f"{self.case_id}\t{self.score:.6f}\t{self.semantic:.6f}\t{self.feature:.6f}\t{self.structural:.6f}"


def value_sim(a, b) -> float:
    a_bool, b_bool = isinstance(a, bool), isinstance(b, bool)
    if a_bool or b_bool:
        return 1.0 if a_bool and b_bool and a == b else 0.0
    if isinstance(a, float) and isinstance(b, float):
        return 1.0 / (1.0 + abs(a - b))
    if isinstance(a, str) and isinstance(b, str):
        return 1.0 if a == b else 0.0
    return 0.0


def feature_sim(q: FeatureMap, p: FeatureMap, weights=None) -> float:
    """Weighted mean of per-feature similarities over the query's features.

    Weights are renormalized over the features present in ``q``; a feature
    missing from ``p`` contributes 0.
    """
    if weights is None or isinstance(weights, Mapping):
        wmap = weights
        weight = (lambda n: 1.0) if wmap is None else (lambda n: float(wmap.get(n, 0.0)))
    else:
        weight = weights.weight
    num = 0.0
    den = 0.0
    for name, qv in q.items():
        w = weight(name)
        if w <= 0:
            continue
        den += w
        if name in p:
            num += w * value_sim(qv, p[name])
    if den <= 0:
        raise NoWeightedFeatures("no query feature carries positive weight")
    return _q(num / den)


@lru_cache(maxsize=65536)
def _lcs(a: tuple, b: tuple) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def action_sequence(plan) -> tuple:
    return tuple(step.symbol for step in plan)


def structural_sim(plan_hint, case_or_plan) -> float:
    if not plan_hint:
        return 0.0
    plan = case_or_plan.solution if isinstance(case_or_plan, Case) else case_or_plan
    a, b = action_sequence(plan_hint), action_sequence(plan)
    if not b:
        return 0.0
    return _q(_lcs(a, b) / max(len(a), len(b)))


def fuse(lambdas, semantic: float, feature: float, structural: float) -> float:
    l1, l2, l3 = lambdas
    return _q((l1 * semantic + l2 * feature + l3 * structural) / (l1 + l2 + l3))


def _as_query(q) -> Query:
    return q if isinstance(q, Query) else Query.of(q)


def _feature_channel(q: Query, case: Case, cfg: RetrievalConfig) -> float:
    try:
        return feature_sim(q.features, case.problem, cfg)
    except NoWeightedFeatures:
        return 0.0


def score_case(q, case: Case, semantic_cos: float, cfg: RetrievalConfig) -> ScoredCase:
    q = _as_query(q)
    sem = _q(max(0.0, semantic_cos))
    feat = _feature_channel(q, case, cfg)
    struct = structural_sim(q.plan_hint, case)
    return ScoredCase(case.id, fuse(cfg.lambdas, sem, feat, struct), sem, feat, struct)


def _semantic_cosines(q: Query, lib: CaseLibrary) -> np.ndarray:
    qv = problem_counts(q.features, lib.embedder)
    m = lib.matrix
    if len(m) == 0:
        return np.zeros(0)
    qq = float(np.dot(qv, qv))
    rows = np.einsum("ij,ij->i", m, m)
    dots = m @ qv
    denom = np.sqrt(rows * qq)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(denom > 0, dots / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(cos, -1.0, 1.0)


def score_all(q, lib: CaseLibrary, cfg: RetrievalConfig) -> List[ScoredCase]:
    """Score every case in insertion order (no threshold, no truncation)."""
    q = _as_query(q)
    cos = _semantic_cosines(q, lib)
    return [score_case(q, lib.cases[cid], float(cos[i]), cfg) for i, cid in enumerate(lib.order)]


def _rank(scored: List[ScoredCase], cfg: RetrievalConfig) -> List[ScoredCase]:
    kept = [s for s in scored if s.score >= cfg.tau]
    kept.sort(key=lambda s: (-s.score, s.case_id))
    return kept if cfg.top_k is None else kept[: cfg.top_k]


def exact_scan(q, lib: CaseLibrary, cfg: RetrievalConfig) -> List[ScoredCase]:
    return _rank(score_all(q, lib, cfg), cfg)


def _cluster_upper_bound(q: Query, qv, cluster, cfg: RetrievalConfig) -> float:
    l1, l2, l3 = cfg.lambdas
    qq = float(np.dot(qv, qv))
    if qq == 0.0:
        sem_ub = 0.0
    else:
        lead = cluster.leader
        ll = float(np.dot(lead, lead))
        c = float(np.dot(qv, lead)) / math.sqrt(qq * ll) if ll > 0 else 0.0
        # spherical triangle inequality: angle(q, x) >= angle(q, L) - angle(L, x)
        gap = math.acos(min(1.0, max(-1.0, c))) - math.acos(min(1.0, max(-1.0, cluster.min_cos)))
        sem_ub = max(0.0, math.cos(max(0.0, gap)))
    feat_ub = 1.0
    struct_ub = 1.0 if q.plan_hint else 0.0
    return (l1 * sem_ub + l2 * feat_ub + l3 * struct_ub) / (l1 + l2 + l3)


def hybrid_retrieve(q, lib: CaseLibrary, cfg: RetrievalConfig, use_hierarchy: bool = True) -> List[ScoredCase]:
    """Fused retrieval; clusters whose score bound is below tau are skipped.

    The result always equals ``exact_scan``: pruning only drops clusters
    that provably contain no case scoring >= tau.
    """
    q = _as_query(q)
    if len(lib) == 0:
        return []
    if not use_hierarchy or cfg.tau <= 0.0:
        return exact_scan(q, lib, cfg)
    cos = _semantic_cosines(q, lib)
    pos = lib.position()
    qv = problem_counts(q.features, lib.embedder)
    scored = []
    for cluster in lib.hierarchy.clusters:
        if _cluster_upper_bound(q, qv, cluster, cfg) + _BOUND_SLACK < cfg.tau:
            continue
        for cid in cluster.members:
            scored.append(score_case(q, lib.cases[cid], float(cos[pos[cid]]), cfg))
    return _rank(scored, cfg)


def retrieve(q, lib: CaseLibrary, cfg: RetrievalConfig) -> List[ScoredCase]:
    """Cases whose fused similarity reaches ``cfg.tau``, best first."""
    return hybrid_retrieve(q, lib, cfg)


def best_similarity(q, lib: CaseLibrary, cfg: RetrievalConfig) -> float:
    scored = score_all(q, lib, cfg)
    return max((s.score for s in scored), default=0.0)


def neighbour_scores(q, lib: CaseLibrary, cfg: RetrievalConfig, k: int) -> List[float]:
    scored = score_all(q, lib, cfg)
    return sorted((s.score for s in scored), reverse=True)[:k]

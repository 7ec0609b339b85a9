"""Solution adaptation: select -> transform -> compose, with a generative fallback.

``transform`` applies insertion, then deletion, then substitution. ``compose``
merges several plans by weighted round-robin. ``generate`` stands in for a
language model with deterministic template rules; a callable can be plugged
in through ``GeneratorConfig(mode="external")``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Mapping, Optional, Sequence, Tuple

from .cases import FeatureMap, Plan, Query, Term, parse_terms, parse_value
from .exceptions import (
    ArityMismatch,
    ConfigError,
    EmptyAfterTransform,
    MalformedRecord,
    NoApplicableTemplate,
    NothingRetrieved,
)
from .retrieval import ScoredCase, value_sim

PATHWAYS = ("cbr", "cot", "parametric")
_TIE = 1e-12


@dataclass(frozen=True)
class ConstraintSet:
    substitutions: Mapping[str, str] = field(default_factory=dict)
    forbidden: frozenset = frozenset()
    required: Tuple[str, ...] = ()

    def is_empty(self) -> bool:
        return not (self.substitutions or self.forbidden or self.required)

    def as_dict(self) -> dict:
        return {
            "substitutions": dict(sorted(self.substitutions.items())),
            "forbidden": sorted(self.forbidden),
            "required": list(self.required),
        }


EMPTY_CONSTRAINTS = ConstraintSet()


# -- transformational adaptation ---------------------------------------------

def t_insert(plan: Sequence[Term], cs: ConstraintSet) -> Tuple[Term, ...]:
    out = list(plan)
    for action in cs.required:
        if all(s.symbol != action for s in out):
            out.append(Term(action, ()))
    return tuple(out)


def t_delete(plan: Sequence[Term], cs: ConstraintSet) -> Tuple[Term, ...]:
    return tuple(s for s in plan if s.symbol not in cs.forbidden)


def t_substitute(plan: Sequence[Term], cs: ConstraintSet) -> Tuple[Term, ...]:
    # one pass: A->B, B->C maps A to B, not C
    subs = cs.substitutions
    return tuple(
        Term(s.symbol, tuple(subs.get(a, a) if isinstance(a, str) else a for a in s.args))
        for s in plan
    )


def transform(plan: Sequence[Term], cs: ConstraintSet = EMPTY_CONSTRAINTS) -> Plan:
    out = t_substitute(t_delete(t_insert(plan, cs), cs), cs)
    if not out:
        raise EmptyAfterTransform("every step was deleted and nothing inserted")
    return out


# -- compositional adaptation --------------------------------------------------

def compose(plans: Sequence[Sequence[Term]], weights: Sequence[float]) -> Plan:
    """Weighted round-robin interleave of several plans.

    Each plan starts with credit equal to its normalized weight and spends
    ``weight / len(plan)`` per step taken; the plan with the most credit
    left goes next (earlier plans win ties). Consecutive duplicate steps
    are dropped.
    """
    if len(plans) != len(weights) or not plans:
        raise ArityMismatch(f"{len(plans)} plans vs {len(weights)} weights")
    if any(w < 0 for w in weights) or sum(weights) <= 0:
        raise ArityMismatch("weights must be nonnegative and not all zero")
    total = float(sum(weights))
    norm = [w / total for w in weights]
    credit = list(norm)
    cursor = [0] * len(plans)
    out: List[Term] = []
    while True:
        live = [i for i, p in enumerate(plans) if cursor[i] < len(p)]
        if not live:
            break
        best = live[0]
        for i in live[1:]:
            if credit[i] > credit[best] + _TIE:
                best = i
        step = plans[best][cursor[best]]
        cursor[best] += 1
        credit[best] -= norm[best] / len(plans[best])
        if not out or out[-1] != step:
            out.append(step)
    return tuple(out)


# -- generative adaptation -----------------------------------------------------

@dataclass(frozen=True)
class TemplateRule:
    """``pattern -> plan``; pattern conditions are ``name=value`` or ``name=*``.

    Plan arguments naming a query feature are replaced by its value.
    """

    conditions: Tuple[Tuple[str, object], ...]
    plan: Plan
    text: str = ""

    @classmethod
    def parse(cls, line: str) -> "TemplateRule":
        pattern, sep, plan_text = line.partition("->")
        if not sep:
            raise MalformedRecord(f"template rule lacks '->': {line!r}")
        conditions = []
        pattern = pattern.strip()
        if pattern and pattern != "*":
            for part in pattern.split(";"):
                part = part.strip()
                if not part:
                    continue
                name, eq, value = part.partition("=")
                if not eq or not name.strip() or not value.strip():
                    raise MalformedRecord(f"bad template condition {part!r}")
                value = value.strip()
                conditions.append((name.strip(), None if value == "*" else parse_value(value)))
        plan = parse_terms(plan_text)
        if not plan:
            raise MalformedRecord(f"template rule has an empty plan: {line!r}")
        return cls(tuple(conditions), plan, line.strip())

    def matches(self, features: FeatureMap) -> bool:
        for name, value in self.conditions:
            if name not in features:
                return False
            if value is not None and value_sim(value, features[name]) != 1.0:
                return False
        return True

    def instantiate(self, features: FeatureMap) -> Plan:
        return tuple(
            Term(s.symbol, tuple(features.get(a, a) if isinstance(a, str) else a for a in s.args))
            for s in self.plan
        )


def parse_rules(lines: Iterable[str]) -> Tuple[TemplateRule, ...]:
    return tuple(
        TemplateRule.parse(line)
        for line in lines
        if line.strip() and not line.lstrip().startswith("#")
    )


@dataclass(frozen=True)
class GeneratorConfig:
    mode: str = "template"
    rules: Tuple[TemplateRule, ...] = ()
    seed: int = 0
    external: Optional[Callable[[Query, List[Plan]], Plan]] = None

    def __post_init__(self):
        if self.mode not in ("template", "external"):
            raise ConfigError(f"unknown generator mode {self.mode!r}")
        if self.mode == "template" and not self.rules:
            raise ConfigError("template generator needs at least one rule")
        if self.mode == "external" and self.external is None:
            raise ConfigError("external generator needs a callable")


def _pick_rule(q: Query, exemplars: Sequence[Plan], gcfg: GeneratorConfig) -> int:
    applicable = [i for i, r in enumerate(gcfg.rules) if r.matches(q.features)]
    if not applicable:
        raise NoApplicableTemplate("no template rule matches the query")
    if exemplars:
        vocab = {s.symbol for s in exemplars[0]}
        for i in applicable:
            if all(s.symbol in vocab for s in gcfg.rules[i].plan):
                return i
    return applicable[0]


def generate(q, exemplars: Sequence[Plan], gcfg: GeneratorConfig) -> Plan:
    """Synthesize a plan from template rules.

    Among matching rules (in file order) the first whose actions all occur
    in the best exemplar is preferred; otherwise the first match fires.
    """
    q = q if isinstance(q, Query) else Query.of(q)
    if gcfg.mode == "external":
        return tuple(gcfg.external(q, list(exemplars)))
    return gcfg.rules[_pick_rule(q, exemplars, gcfg)].instantiate(q.features)


# -- the pipeline --------------------------------------------------------------

@dataclass(frozen=True)
class Provenance:
    sources: Tuple[str, ...]
    operations: Tuple[dict, ...]


@dataclass(frozen=True)
class CandidateSolution:
    plan: Plan
    pathway: str
    confidence: float
    provenance: Provenance

    def __post_init__(self):
        if self.pathway not in PATHWAYS:
            raise ValueError(f"unknown pathway {self.pathway!r}")
        if self.pathway == "cbr" and not self.provenance.sources:
            raise ValueError("cbr candidates need source cases")


def _ranked(retrieved: Sequence[ScoredCase]) -> List[ScoredCase]:
    return sorted(retrieved, key=lambda s: (-s.score, s.case_id))


def select(q, retrieved: Sequence[ScoredCase], lib) -> List[Plan]:
    if not retrieved:
        raise NothingRetrieved("no case reached the retrieval threshold")
    return [lib.cases[s.case_id].solution for s in _ranked(retrieved)]


def adapt(q, retrieved: Sequence[ScoredCase], lib, cs: ConstraintSet = EMPTY_CONSTRAINTS,
          gcfg: Optional[GeneratorConfig] = None) -> CandidateSolution:
    q = q if isinstance(q, Query) else Query.of(q)
    ranked = _ranked(retrieved)
    plans = select(q, ranked, lib)
    ids = tuple(s.case_id for s in ranked)
    scores = [s.score for s in ranked]
    actions = sorted({s.symbol for p in plans for s in p})
    ops = [{"op": "select", "cases": list(ids), "scores": scores, "actions": actions}]

    kept_ids, kept_plans, kept_scores = [], [], []
    for cid, plan, score in zip(ids, plans, scores):
        try:
            kept_plans.append(transform(plan, cs))
        except EmptyAfterTransform:
            continue
        kept_ids.append(cid)
        kept_scores.append(score)
    ops.append({"op": "transform", "constraints": cs.as_dict(), "kept": kept_ids})

    confidence = sum(scores) / len(scores)
    if kept_plans:
        weights = kept_scores if sum(kept_scores) > 0 else [1.0] * len(kept_scores)
        plan = compose(kept_plans, weights)
        ops.append({"op": "compose", "cases": kept_ids, "weights": list(weights)})
    else:
        if gcfg is None:
            raise EmptyAfterTransform("all retrieved plans emptied and no generator configured")
        plan = generate(q, plans, gcfg)
        op = {"op": "generate", "fallback": True}
        if gcfg.mode == "template":
            op["rule"] = _pick_rule(q, plans, gcfg)
        ops.append(op)
    return CandidateSolution(plan, "cbr", confidence, Provenance(ids, tuple(ops)))


def replay(cand: CandidateSolution, lib, q=None, gcfg: Optional[GeneratorConfig] = None) -> Plan:
    """Re-execute a candidate's recorded operations against ``lib``."""
    plans = {}
    plan = None
    for op in cand.provenance.operations:
        kind = op["op"]
        if kind == "select":
            plans = {cid: lib.cases[cid].solution for cid in op["cases"]}
        elif kind == "transform":
            c = op["constraints"]
            cs = ConstraintSet(c["substitutions"], frozenset(c["forbidden"]), tuple(c["required"]))
            plans = {cid: transform(plans[cid], cs) for cid in op["kept"]}
        elif kind == "compose":
            plan = compose([plans[cid] for cid in op["cases"]], op["weights"])
        elif kind == "generate":
            if "rule" in op and gcfg is not None and q is not None:
                q = q if isinstance(q, Query) else Query.of(q)
                plan = gcfg.rules[op["rule"]].instantiate(q.features)
            else:
                raise ValueError("replaying a generated plan needs the query and generator")
    if plan is None:
        raise ValueError("provenance has no producing operation")
    return plan


# -- reasoning pathways --------------------------------------------------------

@dataclass(frozen=True)
class PathwayWeights:
    omega: Tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self):
        if len(self.omega) != 3 or any(w < 0 for w in self.omega):
            raise ConfigError("omega must be three nonnegative reals")
        if abs(sum(self.omega) - 1.0) > 1e-9:
            raise ConfigError(f"omega sums to {sum(self.omega)}, expected 1")


def cot_pathway(q, confidence: float = 0.3) -> CandidateSolution:
    """Fixed-rule plan sketch: inspect each feature, then conclude."""
    q = q if isinstance(q, Query) else Query.of(q)
    plan = tuple(Term("analyze", (name,)) for name in q.features) + (Term("conclude", ()),)
    return CandidateSolution(plan, "cot", confidence, Provenance((), ({"op": "sketch"},)))


def parametric_pathway(q, gcfg: GeneratorConfig, confidence: float = 0.4) -> Optional[CandidateSolution]:
    """Library-free template firing; None when no rule applies."""
    q = q if isinstance(q, Query) else Query.of(q)
    try:
        plan = generate(q, [], gcfg)
    except NoApplicableTemplate:
        return None
    return CandidateSolution(plan, "parametric", confidence, Provenance((), ({"op": "template"},)))


def combine_pathways(cands: Sequence[CandidateSolution], pw=None) -> CandidateSolution:
    """Pick the candidate maximizing omega[pathway] * confidence.

    Plans are symbolic and cannot be blended, so the weighted sum becomes
    an argmax. Without explicit weights, omega is proportional to the
    candidates' confidences. Ties favour cbr, then cot, then parametric.
    """
    if not cands:
        raise ValueError("no candidates to combine")
    seen = [c.pathway for c in cands]
    if len(set(seen)) != len(seen):
        raise ValueError("at most one candidate per pathway")
    if pw is None:
        conf = {c.pathway: c.confidence for c in cands}
        raw = [conf.get(p, 0.0) for p in PATHWAYS]
        if sum(raw) <= 0:
            raw = [1.0, 1.0, 1.0]
    else:
        raw = list(pw.omega if isinstance(pw, PathwayWeights) else pw)
    total = sum(raw)
    if total <= 0 or any(w < 0 for w in raw):
        raise ConfigError("pathway weights must be nonnegative with positive sum")
    omega = dict(zip(PATHWAYS, (w / total for w in raw)))
    ordered = sorted(cands, key=lambda c: PATHWAYS.index(c.pathway))
    best = ordered[0]
    best_score = omega[best.pathway] * best.confidence
    for c in ordered[1:]:
        s = omega[c.pathway] * c.confidence
        if s > best_score + _TIE:
            best, best_score = c, s
    return best

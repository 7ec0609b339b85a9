"""Case representation and ingestion.

A case is the four-part tuple (problem, solution, outcome, metadata). Raw
records are single lines of ``|``-separated sections::

    problem: size=3; color=red | solution: move(A); pick(B) | outcome: success=0.9; cost=4

``extract_*`` turn the sections of a raw record into typed components and
``build_case`` assembles them. ``serialize_case`` emits the canonical line,
which reparses to an equal case.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable, Mapping, Optional, Union

from .exceptions import (
    DuplicateFeature,
    EmptySolution,
    MalformedRecord,
    OutOfRange,
)

FeatureValue = Union[float, bool, str]
FeatureMap = dict  # name -> FeatureValue, keys kept in lexicographic order
RawCaseRecord = dict  # section name -> section body text

SECTIONS = ("problem", "solution", "outcome")
_RESERVED = set(";|=(),:")
_NUMBER = re.compile(r"^[+-]?\d+(\.\d+)?$")
_SYMBOL = re.compile(r"^[A-Za-z_][\w\-.]*$")


def parse_value(text: str) -> FeatureValue:
    text = text.strip()
    if _NUMBER.match(text):
        return float(text)
    if text == "true":
        return True
    if text == "false":
        return False
    return text


def format_value(value: FeatureValue) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        value = float(value)
        if value.is_integer():
            return str(int(value))
        # plain decimal, never scientific notation
        return format(Decimal(repr(value)), "f")
    if not value or set(value) & _RESERVED or value != value.strip():
        raise MalformedRecord(f"value {value!r} cannot be rendered in the record grammar")
    return value


def feature_map(items: Union[Mapping[str, FeatureValue], Iterable]) -> FeatureMap:
    """Return a new feature map with keys in lexicographic order."""
    d = dict(items)
    out = {}
    for k in sorted(d):
        v = d[k]
        out[k] = float(v) if isinstance(v, int) and not isinstance(v, bool) else v
    return out


@dataclass(frozen=True)
class Term:
    """``symbol(arg, ...)``: a plan step or a ground fact."""

    symbol: str
    args: tuple = ()

    def __str__(self) -> str:
        return f"{self.symbol}({','.join(format_value(a) for a in self.args)})"

    def sort_key(self) -> str:
        return str(self)


Step = Term
Plan = tuple  # tuple[Step, ...]


def parse_term(text: str) -> Term:
    text = text.strip()
    if text.count("(") != 1 or text.count(")") != 1 or not text.endswith(")"):
        raise MalformedRecord(f"unbalanced or missing parentheses in {text!r}")
    head, _, rest = text.partition("(")
    head = head.strip()
    if not _SYMBOL.match(head):
        raise MalformedRecord(f"bad action symbol {head!r}")
    body = rest[:-1].strip()
    args = tuple(parse_value(a) for a in body.split(",")) if body else ()
    if any(a == "" for a in args):
        raise MalformedRecord(f"empty argument in {text!r}")
    return Term(head, args)


def parse_terms(text: str) -> tuple:
    return tuple(parse_term(part) for part in text.split(";") if part.strip())


def format_plan(plan: Iterable[Term]) -> str:
    return "; ".join(str(s) for s in plan)


@dataclass(frozen=True)
class OutcomeRecord:
    success: float = 1.0
    metrics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.success <= 1.0:
            raise OutOfRange(f"success={self.success} outside [0, 1]")


@dataclass(frozen=True)
class CaseMetadata:
    case_id: str
    created_at: int = 0
    provenance: str = ""
    tags: frozenset = frozenset()


@dataclass(frozen=True)
class Case:
    problem: FeatureMap
    solution: Plan
    outcome: OutcomeRecord
    meta: CaseMetadata

    @property
    def id(self) -> str:
        return self.meta.case_id

    def content_equal(self, other: "Case") -> bool:
        return (
            self.problem == other.problem
            and self.solution == other.solution
            and self.outcome == other.outcome
            and self.id == other.id
        )


@dataclass(frozen=True)
class Query:
    """A problem to solve. ``plan_hint`` feeds the structural channel."""

    features: FeatureMap
    plan_hint: Optional[Plan] = None

    @classmethod
    def of(cls, features: Mapping, plan_hint=None) -> "Query":
        hint = tuple(plan_hint) if plan_hint else None
        return cls(feature_map(features), hint)

    @classmethod
    def from_case(cls, case: Case) -> "Query":
        return cls(case.problem, case.solution)


# -- raw records ---------------------------------------------------------------

def parse_record(line: str) -> RawCaseRecord:
    """Split a raw record line into its named sections."""
    raw = {}
    for chunk in line.strip().split("|"):
        if not chunk.strip():
            continue
        name, sep, body = chunk.partition(":")
        name = name.strip()
        if not sep or name not in SECTIONS:
            raise MalformedRecord(f"unknown or unlabeled section {chunk.strip()!r}")
        if name in raw:
            raise MalformedRecord(f"section {name!r} repeated")
        raw[name] = body.strip()
    if "problem" not in raw:
        raise MalformedRecord("record has no problem section")
    return raw


def _pairs(text: str):
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        name, sep, value = part.partition("=")
        name, value = name.strip(), value.strip()
        if not sep or not name or not value:
            raise MalformedRecord(f"expected name=value, got {part!r}")
        yield name, value


def extract_problem(raw: RawCaseRecord) -> FeatureMap:
    if "problem" not in raw:
        raise MalformedRecord("record has no problem section")
    out = {}
    for name, value in _pairs(raw["problem"]):
        if name in out:
            raise DuplicateFeature(name)
        out[name] = parse_value(value)
    return feature_map(out)


def extract_solution(raw: RawCaseRecord) -> Plan:
    plan = parse_terms(raw.get("solution", ""))
    if not plan:
        raise EmptySolution("solution has no steps")
    return plan


def extract_outcome(raw: RawCaseRecord) -> OutcomeRecord:
    # Ingested precedents without an outcome are presumed successful.
    if "outcome" not in raw:
        return OutcomeRecord(1.0, {})
    success = 1.0
    metrics = {}
    for name, value in _pairs(raw["outcome"]):
        v = parse_value(value)
        if not isinstance(v, float):
            raise MalformedRecord(f"outcome {name}={value!r} is not numeric")
        if name == "success":
            success = v
        elif name in metrics:
            raise DuplicateFeature(name)
        else:
            metrics[name] = v
    return OutcomeRecord(success, dict(sorted(metrics.items())))


def _canonical_body(problem: FeatureMap, solution: Plan, outcome: OutcomeRecord) -> str:
    prob = "; ".join(f"{k}={format_value(v)}" for k, v in problem.items())
    out = "; ".join(
        [f"success={format_value(outcome.success)}"]
        + [f"{k}={format_value(v)}" for k, v in sorted(outcome.metrics.items())]
    )
    return f"problem: {prob} | solution: {format_plan(solution)} | outcome: {out}"


def content_id(problem: FeatureMap, solution: Plan, outcome: OutcomeRecord) -> str:
    digest = hashlib.sha256(_canonical_body(problem, solution, outcome).encode("utf-8"))
    return "c" + digest.hexdigest()[:16]


def generate_metadata(raw: RawCaseRecord, tick: int, provenance: str = "", tags=()) -> CaseMetadata:
    """Metadata whose id hashes the record's parsed content.

    Hashing the canonical form (not the raw bytes) keeps the id stable across
    whitespace changes and through a serialize/parse round trip.
    """
    if tick < 0:
        raise OutOfRange(f"tick {tick} < 0")
    cid = content_id(extract_problem(raw), extract_solution(raw), extract_outcome(raw))
    return CaseMetadata(cid, int(tick), provenance, frozenset(tags))


def build_case(raw: Union[RawCaseRecord, str], tick: int = 0, provenance: str = "", tags=()) -> Case:
    if isinstance(raw, str):
        raw = parse_record(raw)
    problem = extract_problem(raw)
    solution = extract_solution(raw)
    outcome = extract_outcome(raw)
    meta = generate_metadata(raw, tick, provenance, tags)
    return Case(problem, solution, outcome, meta)


def make_case(problem: Mapping, solution: Iterable, success: float = 1.0,
              metrics: Optional[Mapping] = None, tick: int = 0, provenance: str = "") -> Case:
    """Build a case from Python values rather than record text."""
    problem = feature_map(problem)
    steps = tuple(parse_term(s) if isinstance(s, str) else s for s in solution)
    if not steps:
        raise EmptySolution("solution has no steps")
    outcome = OutcomeRecord(float(success), dict(sorted((metrics or {}).items())))
    meta = CaseMetadata(content_id(problem, steps, outcome), tick, provenance)
    return Case(problem, steps, outcome, meta)


def serialize_case(case: Case) -> str:
    return _canonical_body(case.problem, case.solution, case.outcome)


def serialize_problem(problem: FeatureMap) -> str:
    return "; ".join(f"{k}={format_value(v)}" for k, v in problem.items())


def read_records(lines: Iterable[str]):
    """Yield ``(line_number, raw_record_or_exception)`` for non-blank lines."""
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            yield lineno, parse_record(line)
        except MalformedRecord as exc:
            yield lineno, exc

"""Input coercion for the estimator API."""

from __future__ import annotations

from typing import Iterable, List, Mapping

from .cases import Case, Query, build_case, extract_problem, parse_record, parse_terms
from .exceptions import ConfigError


def check_cases(X, start_tick: int = 0, provenance: str = "") -> List[Case]:
    """Accept cases, raw record lines or raw record dicts."""
    if isinstance(X, (str, Case, Mapping)):
        X = [X]
    out = []
    for i, item in enumerate(X):
        if isinstance(item, Case):
            out.append(item)
        elif isinstance(item, (str, Mapping)):
            out.append(build_case(item, start_tick + i, provenance))
        else:
            raise TypeError(f"cannot interpret {type(item).__name__} as a case")
    return out


def check_query(q) -> Query:
    """Accept a Query, a Case, a feature mapping, or record text.

    Text may be a bare problem body (``a=1; b=x``) or a record line whose
    ``solution`` section becomes the plan hint.
    """
    if isinstance(q, Query):
        return q
    if isinstance(q, Case):
        return Query.from_case(q)
    if isinstance(q, Mapping):
        return Query.of(q)
    if isinstance(q, str):
        if "problem:" in q:
            raw = parse_record(q)
            hint = parse_terms(raw["solution"]) if raw.get("solution") else None
            return Query(extract_problem(raw), hint)
        return Query(extract_problem({"problem": q}))
    raise TypeError(f"cannot interpret {type(q).__name__} as a query")


def check_queries(X) -> List[Query]:
    if isinstance(X, (str, Query, Case, Mapping)):
        X = [X]
    return [check_query(q) for q in X]


def check_unit_interval(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name}={value} outside [0, 1]")
    return value

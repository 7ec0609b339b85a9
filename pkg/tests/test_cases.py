import pytest
from hypothesis import given, strategies as st

from cbrgda.cases import (
    Term,
    build_case,
    extract_outcome,
    extract_problem,
    extract_solution,
    format_value,
    generate_metadata,
    make_case,
    parse_record,
    serialize_case,
)
from cbrgda.exceptions import DuplicateFeature, EmptySolution, MalformedRecord, OutOfRange

FULL = "problem: size=3; color=red | solution: move(A); pick(B) | outcome: success=0.9; cost=4"


def test_extract_problem_types_and_order():
    fm = extract_problem(parse_record("problem: size=3; color=red"))
    assert fm == {"color": "red", "size": 3.0}
    assert list(fm) == ["color", "size"]
    assert isinstance(fm["size"], float)


def test_extract_problem_empty_allowed():
    assert extract_problem(parse_record("problem:")) == {}


def test_extract_problem_duplicate():
    with pytest.raises(DuplicateFeature):
        extract_problem(parse_record("problem: x=1; x=2"))


def test_extract_problem_pair_without_equals():
    with pytest.raises(MalformedRecord):
        extract_problem(parse_record("problem: x"))


def test_booleans_and_symbols():
    fm = extract_problem(parse_record("problem: ok=true; off=false; mode=fast; t=-2.5"))
    assert fm == {"mode": "fast", "off": False, "ok": True, "t": -2.5}


def test_extract_solution():
    assert extract_solution(parse_record("problem: a=1 | solution: move(A); pick(B)")) == (
        Term("move", ("A",)), Term("pick", ("B",)))
    assert extract_solution(parse_record("problem: a=1 | solution: noop()")) == (Term("noop"),)


def test_extract_solution_empty():
    with pytest.raises(EmptySolution):
        extract_solution(parse_record("problem: a=1 | solution:"))


def test_unbalanced_parens():
    with pytest.raises(MalformedRecord):
        extract_solution(parse_record("problem: a=1 | solution: move(A"))


def test_extract_outcome():
    out = extract_outcome(parse_record("problem: a=1 | outcome: success=0.9; cost=4"))
    assert out.success == 0.9 and out.metrics == {"cost": 4.0}
    default = extract_outcome(parse_record("problem: a=1"))
    assert default.success == 1.0 and default.metrics == {}


def test_outcome_out_of_range():
    with pytest.raises(OutOfRange):
        extract_outcome(parse_record("problem: a=1 | outcome: success=1.5"))


def test_metadata():
    raw = parse_record(FULL)
    assert generate_metadata(raw, 0).case_id == generate_metadata(raw, 5).case_id
    assert generate_metadata(raw, 7).created_at == 7


def test_one_character_changes_id(fixture_cases):
    lines = [serialize_case(c) for c in fixture_cases]
    ids = set()
    for line in lines:
        for i, ch in enumerate(line):
            if ch.isdigit() and ch != "9":
                mutated = line[:i] + str(int(ch) + 1) + line[i + 1:]
                try:
                    ids.add(build_case(mutated).id)
                except Exception:
                    pass
                break
    ids |= {c.id for c in fixture_cases}
    # one mutant per case plus the originals, all distinct
    assert len(ids) == 2 * len(lines)


def test_build_case_full_and_missing_solution():
    c = build_case(FULL, 3)
    assert c.problem and c.solution and c.outcome.success == 0.9 and c.meta.created_at == 3
    with pytest.raises(EmptySolution):
        build_case("problem: a=1 | outcome: success=1")


def test_batch_has_distinct_ids(fixture_cases):
    assert len({c.id for c in fixture_cases}) == len(fixture_cases) == 50


def test_unknown_section_rejected():
    with pytest.raises(MalformedRecord):
        parse_record("problem: a=1 | solutoin: x()")


def test_id_independent_of_whitespace_and_tick():
    a = build_case("problem: b=2;a=1 | solution: go(x)", 0)
    b = build_case("problem:  a=1 ;  b=2 | solution:  go(x) ", 9)
    assert a.id == b.id


def test_format_value_no_scientific():
    assert format_value(0.0001) == "0.0001"
    assert format_value(3.0) == "3"
    with pytest.raises(MalformedRecord):
        format_value("a;b")


symbols = st.from_regex(r"[a-z][a-z0-9_]{0,6}", fullmatch=True).filter(lambda s: s not in ("true", "false"))
values = st.one_of(
    symbols,
    st.booleans(),
    st.integers(-999, 999).map(float),
    st.decimals(-100, 100, places=3, allow_nan=False, allow_infinity=False).map(float),
)


@given(
    st.dictionaries(symbols, values, min_size=1, max_size=6),
    st.lists(st.tuples(symbols, st.lists(values, max_size=3)), min_size=1, max_size=5),
    st.floats(0, 1),
)
def test_round_trip(problem, plan, success):
    c = make_case(problem, [Term(s, tuple(a)) for s, a in plan], success)
    again = build_case(serialize_case(c))
    assert again.content_equal(c)
    assert again.id == c.id
    assert serialize_case(again) == serialize_case(c)

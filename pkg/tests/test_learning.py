import pytest
from hypothesis import given, strategies as st

from cbrgda.cases import Query, make_case
from cbrgda.embedding import CaseLibrary
from cbrgda.exceptions import ConfigError, EmptyInput, EmptyProblem
from cbrgda.learning import (
    FailureStats,
    RetentionConfig,
    effectiveness,
    gap_report,
    generalizability,
    novelty,
    retain,
    transfer_knowledge,
    utility,
    utility_from,
)
from cbrgda.retrieval import RetrievalConfig

import oracles

FEATURE_ONLY = RetrievalConfig(lambdas=(0.0, 1.0, 0.0))


def _lib(*cases):
    lib = CaseLibrary()
    for c in cases:
        lib.index_case(c)
    return lib


def test_novelty_examples():
    c = make_case({"a": "x"}, ["go()"])
    assert novelty(c, _lib(c)) == 0.0
    assert novelty(c, CaseLibrary()) == 1.0
    other = make_case({"a": "y"}, ["stop()"])
    combined, sem, feat, struct = oracles.score(
        {"a": "y"}, ["stop"], {"a": "x"}, ["go"], None, (0.4, 0.4, 0.2))
    assert feat == struct == 0.0
    assert novelty(other, _lib(c)) == 1.0 - combined
    if sem == 0.0:
        assert novelty(other, _lib(c)) == 1.0


def test_effectiveness():
    assert effectiveness(make_case({"a": 1}, ["x()"], 0.9)) == 0.9
    assert effectiveness(make_case({"a": 1}, ["x()"], 0.0)) == 0.0
    assert effectiveness(make_case({"a": 1}, ["x()"])) == 1.0


def test_generalizability_examples():
    c = make_case({"a": "x"}, ["go()"])
    assert generalizability(c, CaseLibrary()) == 0.0
    assert generalizability(c, _lib(c), k=1) == 1.0
    cand = make_case(dict(zip("abcde", "vwxyz")), ["go()"])
    near = make_case({"a": "v", "b": "w", "c": "x", "d": "y"}, ["go()"])
    far = make_case({"a": "v", "b": "w"}, ["go()"])
    lib = _lib(near, far, make_case({"q": "q"}, ["go()"]))
    assert generalizability(cand, lib, 2, FEATURE_ONLY) == pytest.approx(0.6, abs=1e-12)


def test_utility_examples():
    r = RetentionConfig(alpha=0.5, beta=0.3, gamma=0.2)
    assert utility_from(1, 1, 1, r) == pytest.approx(1.0, abs=1e-12)
    assert utility_from(0, 0.5, 0, r) == pytest.approx(0.15, abs=1e-12)
    assert utility_from(0, 0, 0, r) == 0.0


def test_retain_branches():
    lib = CaseLibrary()
    c = make_case({"a": "x"}, ["go()"])
    # empty library: U = 0.5*1 + 0.3*1 + 0.2*0 = 0.8
    assert utility(c, lib) == pytest.approx(0.8)
    lib, kept = retain(lib, c, RetentionConfig(delta=0.6))
    assert kept and len(lib) == 1


def test_retain_rejects_duplicate_content():
    c = make_case({"a": "x"}, ["go()"], 0.5)
    lib = _lib(c)
    assert utility(c, lib) == pytest.approx(0.35, abs=1e-12)
    lib, kept = retain(lib, c, RetentionConfig(delta=0.6))
    assert not kept and len(lib) == 1


def test_delta_zero_always_retains():
    lib = _lib(make_case({"a": "x"}, ["go()"]))
    for i in range(5):
        lib, kept = retain(lib, make_case({"a": "x", "i": i}, ["go()"], 0.0), RetentionConfig(delta=0.0))
        assert kept
    assert len(lib) == 6


def test_retain_rejects_empty_problem():
    with pytest.raises(EmptyProblem):
        retain(CaseLibrary(), make_case({}, ["go()"]))


def test_retention_config_validation():
    with pytest.raises(ConfigError):
        RetentionConfig(alpha=0.5, beta=0.5, gamma=0.5)


def test_transfer_examples():
    w = {"a": 1.0, "b": 1.0}
    assert transfer_knowledge(w, FailureStats(), 0.1) == w
    fs = FailureStats()
    fs.misses["a"] = 10
    fs.episodes = 10
    out = transfer_knowledge(w, fs, 0.1)
    # a scales by 1.1, b by 1.0, then both renormalize to total 2
    assert out["a"] == pytest.approx(2 * 1.1 / 2.1, abs=1e-12)
    assert out["b"] == pytest.approx(2 * 1.0 / 2.1, abs=1e-12)


def test_failure_stats_counts():
    fs = FailureStats()
    prec = make_case({"a": "x", "b": "y"}, ["go()"])
    fs.record_failure(Query.of({"a": "x", "b": "z", "c": 1}), prec)
    fs.record_success()
    assert fs.failures == {"a": 1} and fs.misses == {"b": 1, "c": 1} and fs.episodes == 2


@given(
    st.dictionaries(st.sampled_from("abcdef"), st.floats(0.01, 10), min_size=1),
    st.dictionaries(st.sampled_from("abcdef"), st.integers(0, 20)),
    st.dictionaries(st.sampled_from("abcdef"), st.integers(0, 20)),
    st.integers(0, 20),
    st.floats(0, 1),
)
def test_transfer_preserves_mass(weights, misses, fails, episodes, eta):
    fs = FailureStats()
    fs.misses.update(misses)
    fs.failures.update(fails)
    fs.episodes = episodes
    out = transfer_knowledge(weights, fs, eta)
    assert sum(out.values()) == pytest.approx(sum(weights.values()), rel=1e-9)
    assert all(v > 0 for v in out.values())
    for k in weights:
        ratio = (out[k] / sum(out.values())) / (weights[k] / sum(weights.values()))
        assert 0.25 - 1e-9 <= ratio <= 4 + 1e-9


def test_gap_report_examples():
    a = make_case({"kind": "pump", "fault": "leak"}, ["seal()"])
    b = make_case({"kind": "pump", "fault": "drip"}, ["seal()"])
    c = make_case({"zone": 1, "alarm": True}, ["evacuate()"])
    lib = _lib(a, b, c)
    rep = gap_report(lib, [Query.from_case(a)], 0.5)
    assert rep.gaps == ()
    probes = [Query.of({"kind": "pump", "fault": "leak"}), Query.of({"color": "teal"})]
    rep = gap_report(lib, probes, 0.5)
    assert [i for i, _ in rep.gaps] == [1]
    best = max(oracles.score(dict(probes[1].features), None, dict(x.problem), [], None, (0.4, 0.4, 0.2))[0]
               for x in (a, b, c))
    assert rep.gaps[0][1] == best < 0.5
    assert sum(m for _, m, _ in rep.densities) == 3
    assert sum(d for _, _, d in rep.densities) == pytest.approx(1.0)


def test_gap_report_empty_library_and_no_probes():
    rep = gap_report(CaseLibrary(), [Query.of({"a": 1}), Query.of({"b": 2})], 0.1)
    assert [i for i, _ in rep.gaps] == [0, 1]
    with pytest.raises(EmptyInput):
        gap_report(CaseLibrary(), [], 0.1)

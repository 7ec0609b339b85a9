"""Command-line entry point.

Subcommands: ingest, retrieve, solve, retain, simulate, gaps, metrics,
explain. Exit codes: 0 success, 2 usage/config, 3 parse/ingest/input,
4 empty retrieval, 5 environment halt.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import List, Optional

from . import __version__
from .adaptation import (
    ConstraintSet,
    combine_pathways,
    cot_pathway,
    adapt,
    parametric_pathway,
    replay,
)
from .cases import build_case, format_plan, format_value, parse_terms, read_records, serialize_case
from .config import EngineConfig, load_config, reference_config_text
from .embedding import CaseLibrary
from .env import SCENARIOS, builtin_scenario, load_script
from .exceptions import CBRError, DuplicateId, EmptyInput, NothingRetrieved, ParseError
from .gda import run_baseline_replanner, run_gda, seed_mcb, seed_pcb, update_mcb, update_pcb, plan_quality
from .learning import gap_report, retain, utility_breakdown
from .metrics import (
    PerformanceSeries,
    ReasoningInstance,
    adaptation_rate,
    cost_report,
    explainability,
    quality,
    reasoning_instance,
)
from .persistence import (
    atomic_write,
    dumps_library,
    dumps_mcb,
    dumps_pcb,
    file_lock,
    load_library,
    save_library,
)
from .retrieval import RetrievalConfig, hybrid_retrieve
from .validation import check_query


def _out(line: str = "") -> None:
    sys.stdout.write(line + "\n")


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _f(x: float) -> str:
    return f"{x:.6f}"


def _query(args):
    q = check_query(args.query)
    if getattr(args, "hint", None):
        q = type(q)(q.features, parse_terms(args.hint))
    return q


def _retrieval(cfg: EngineConfig, args) -> RetrievalConfig:
    r = cfg.retrieval
    tau = r.tau if getattr(args, "tau", None) is None else args.tau
    top_k = r.top_k if getattr(args, "top_k", None) is None else args.top_k
    return RetrievalConfig(tau, r.weights, r.lambdas, top_k)


def _load(cfg: EngineConfig, path: str) -> CaseLibrary:
    with file_lock(path, exclusive=False):
        return load_library(path, cfg.embedder)


# -- ingest -------------------------------------------------------------------------

def cmd_ingest(args, cfg: EngineConfig) -> int:
    lib = CaseLibrary(cfg.embedder, cfg.cluster_threshold)
    rejects = []
    tick = 0
    for path in args.files:
        name = os.path.basename(path)
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in read_records(fh):
                try:
                    if isinstance(raw, Exception):
                        raise raw
                    case = build_case(raw, tick, f"{name}:{lineno}")
                    lib.index_case(case)
                    tick += 1
                except (ParseError, DuplicateId) as exc:
                    rejects.append((name, lineno, type(exc).__name__, str(exc)))
    for name, lineno, kind, msg in rejects:
        sys.stderr.write(f"{name}:{lineno}: {kind}: {msg}\n")
    if rejects and not args.skip_bad:
        sys.stderr.write(f"{len(rejects)} record(s) rejected; library not written\n")
        return 3
    with file_lock(args.out):
        save_library(lib, args.out)
    _out(f"cases={len(lib)} clusters={len(lib.hierarchy)} rejects={len(rejects)}")
    return 0


# -- retrieve / solve / explain ---------------------------------------------------

def cmd_retrieve(args, cfg: EngineConfig) -> int:
    lib = _load(cfg, args.library)
    hits = hybrid_retrieve(_query(args), lib, _retrieval(cfg, args))
    for h in hits:
        _out(h.row())
    return 0 if hits else 4


def _constraints(args) -> ConstraintSet:
    subs = {}
    for item in args.sub or []:
        a, sep, b = item.partition("=")
        if not sep:
            raise ParseError(f"--sub expects FROM=TO, got {item!r}")
        subs[a.strip()] = b.strip()
    return ConstraintSet(subs, frozenset(args.forbid or []), tuple(args.require or []))


def _differences(query, case) -> List[str]:
    out = []
    for name in sorted(set(query.features) | set(case.problem)):
        if name not in case.problem:
            out.append(f"  + {name}: query={format_value(query.features[name])} (absent in case)")
        elif name not in query.features:
            out.append(f"  - {name}: case={format_value(case.problem[name])} (absent in query)")
        elif query.features[name] != case.problem[name] or type(query.features[name]) is not type(case.problem[name]):
            out.append(f"  ~ {name}: query={format_value(query.features[name])} case={format_value(case.problem[name])}")
    return out


def _coherence(plan) -> float:
    if not plan:
        return 0.0
    repeats = sum(1 for a, b in zip(plan, plan[1:]) if a == b)
    return 1.0 - repeats / len(plan)


def cmd_solve(args, cfg: EngineConfig) -> int:
    lib = _load(cfg, args.library)
    q = _query(args)
    rcfg = _retrieval(cfg, args)

    t0 = time.perf_counter()
    hits = hybrid_retrieve(q, lib, rcfg)
    t1 = time.perf_counter()
    if not hits:
        raise NothingRetrieved("no case reached the retrieval threshold")
    cand = adapt(q, hits, lib, _constraints(args), cfg.generator)
    t2 = time.perf_counter()
    chosen = cand
    if args.pathways:
        cands = [cand, cot_pathway(q, cfg.cot_confidence)]
        if cfg.generator is not None:
            p = parametric_pathway(q, cfg.generator, cfg.parametric_confidence)
            if p is not None:
                cands.append(p)
        chosen = combine_pathways(cands, cfg.omega)
    t3 = time.perf_counter()

    top = lib.cases[hits[0].case_id]
    inst = reasoning_instance(chosen)
    comps = {
        "accuracy": top.outcome.success,
        "relevance": hits[0].score,
        "coherence": _coherence(chosen.plan),
        "novelty": 1.0 - hits[0].score,
    }
    q_score = quality(comps["accuracy"], comps["relevance"], comps["coherence"], comps["novelty"], cfg.quality)
    rules_bytes = sum(len(r.text.encode("utf-8")) for r in cfg.generator.rules) if cfg.generator else 0
    knowledge = lib.matrix.nbytes + sum(len(serialize_case(c).encode("utf-8")) for c in lib)
    working = len(_dump([h.row() for h in hits]).encode("utf-8")) + len(format_plan(chosen.plan).encode("utf-8"))
    memory = {"model": float(rules_bytes), "knowledge": float(knowledge), "working": float(working)}
    timings = ({"retrieval": t1 - t0, "processing": t2 - t1, "generation": t3 - t2}
               if args.timings else {"retrieval": 0.0, "processing": 0.0, "generation": 0.0})
    total_t, total_m = cost_report(timings, memory)

    _out(f"plan: {format_plan(chosen.plan)}")
    _out(f"pathway: {chosen.pathway}")
    _out(f"confidence: {_f(chosen.confidence)}")
    _out("sources:")
    for h in hits:
        _out(f"  {h.case_id} score={_f(h.score)}")
    _out("operations:")
    for op in cand.provenance.operations:
        _out("  " + _dump(op))
    diffs = _differences(q, top)
    _out(f"differences (query vs {top.id}):" + ("" if diffs else " none"))
    for line in diffs:
        _out(line)
    _out("metrics:")
    _out(f"  explainability={_f(explainability([inst]))}")
    _out(f"  quality={_f(q_score)}")
    _out(f"  memory_total={total_m:.0f}")
    if args.timings:
        _out(f"  time_total={total_t:.6f}")

    if args.log:
        record = {
            "kind": "solve",
            "query": str(args.query),
            "plan": format_plan(chosen.plan),
            "trace_completeness": inst.trace_completeness,
            "complexity": inst.complexity,
            "timings": timings,
            "memory": memory,
            "quality_components": comps,
        }
        atomic_write(args.log, _dump(record) + "\n")
    return 0


def cmd_explain(args, cfg: EngineConfig) -> int:
    lib = _load(cfg, args.library)
    q = _query(args)
    hits = hybrid_retrieve(q, lib, _retrieval(cfg, args))
    if not hits:
        raise NothingRetrieved("no precedent reached the retrieval threshold")
    top = lib.cases[hits[0].case_id]
    cand = adapt(q, hits, lib, _constraints(args), cfg.generator)
    _out(f"precedent: {top.id} (provenance {top.meta.provenance or 'unknown'})")
    _out(f"  problem: {serialize_case(top).split(' | ')[0][len('problem: '):]}")
    _out(f"  solution: {format_plan(top.solution)}")
    _out(f"  outcome: success={format_value(top.outcome.success)}")
    _out(f"  similarity: score={_f(hits[0].score)} semantic={_f(hits[0].semantic)} "
         f"feature={_f(hits[0].feature)} structural={_f(hits[0].structural)}")
    diffs = _differences(q, top)
    _out("differences:" + ("" if diffs else " none"))
    for line in diffs:
        _out(line)
    _out(f"adapted plan: {format_plan(cand.plan)}")
    try:
        ok = replay(cand, lib, q, cfg.generator) == cand.plan
    except ValueError:
        ok = False
    _out(f"replay: {'ok' if ok else 'FAILED'}")
    return 0 if ok else 1


# -- retain / gaps ------------------------------------------------------------------

def cmd_retain(args, cfg: EngineConfig) -> int:
    with file_lock(args.library):
        lib = load_library(args.library, cfg.embedder)
        case = build_case(args.record, len(lib), args.provenance or "cli")
        b = utility_breakdown(case, lib, cfg.retention, cfg.retrieval)
        _, kept = retain(lib, case, cfg.retention, cfg.retrieval)
        _out(f"case={case.id}")
        _out(f"novelty={_f(b.novelty)} effectiveness={_f(b.effectiveness)} "
             f"generalizability={_f(b.generalizability)}")
        _out(f"utility={_f(b.utility)} delta={_f(cfg.retention.delta)} retained={'yes' if kept else 'no'}")
        if kept:
            save_library(lib, args.library)
    return 0


def cmd_gaps(args, cfg: EngineConfig) -> int:
    lib = _load(cfg, args.library)
    texts = list(args.probe or [])
    if args.probes:
        with open(args.probes, encoding="utf-8") as fh:
            texts += [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    probes = [check_query(t) for t in texts]
    coverage = cfg.retrieval.tau if args.coverage is None else args.coverage
    report = gap_report(lib, probes, coverage, cfg.retrieval)
    for row in report.rows(probes):
        _out(row)
    return 0


# -- simulate -------------------------------------------------------------------------

def _scenario(name_or_path: str):
    if name_or_path in SCENARIOS and not os.path.exists(name_or_path):
        return builtin_scenario(name_or_path)
    return load_script(name_or_path)


def cmd_simulate(args, cfg: EngineConfig) -> int:
    script = _scenario(args.scenario)
    gcfg = cfg.gda
    pcb = seed_pcb(script, gcfg)
    mcb = seed_mcb(script)
    os.makedirs(args.out, exist_ok=True)
    summary = []
    for i in range(1, args.episodes + 1):
        try:
            if args.baseline:
                trace = run_baseline_replanner(script, script.goal, pcb)
            else:
                trace = run_gda(script, script.goal, pcb, mcb, gcfg)
        except CBRError as exc:
            exc.args = (f"episode {i}: {exc}",)
            raise
        atomic_write(os.path.join(args.out, f"episode-{i}.trace.jsonl"), trace.dumps())
        row = {
            "kind": "episode",
            "episode": i,
            "status": trace.status,
            "ticks": len(trace.records),
            "transitions": len(trace.transitions()),
            "mismatches": len(trace.mismatches()),
            "performance": plan_quality(script.goal, trace.final_state),
            "pcb_available": len(pcb),
            "mcb_available": len(mcb),
        }
        if not args.baseline:
            pcb = update_pcb(pcb, trace, gcfg)
            mcb = update_mcb(mcb, trace, gcfg)
        row["pcb_after"] = len(pcb)
        row["mcb_after"] = len(mcb)
        summary.append(row)
        _out(f"episode={i} status={trace.status} ticks={row['ticks']} transitions={row['transitions']} "
             f"mismatches={row['mismatches']} pcb={len(pcb)} mcb={len(mcb)}")
    atomic_write(os.path.join(args.out, "pcb.txt"), dumps_pcb(pcb))
    atomic_write(os.path.join(args.out, "mcb.txt"), dumps_mcb(mcb))
    atomic_write(os.path.join(args.out, "summary.jsonl"), "".join(_dump(r) + "\n" for r in summary))
    return 0


# -- metrics -------------------------------------------------------------------------

def cmd_metrics(args, cfg: EngineConfig) -> int:
    solves, episodes = [], []
    for path in args.files:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"{path}: {exc}") from None
                if rec.get("kind") == "solve":
                    solves.append(rec)
                elif rec.get("kind") == "episode":
                    episodes.append(rec)
    if not solves and not episodes:
        raise EmptyInput("no solve or episode records in the given files")
    _out(f"solves={len(solves)}")
    if solves:
        inst = [ReasoningInstance(r["trace_completeness"], r["complexity"]) for r in solves]
        _out(f"explainability={_f(explainability(inst))}")
        costs = [cost_report(r["timings"], r["memory"]) for r in solves]
        _out(f"time_total={sum(t for t, _ in costs):.6f}")
        _out(f"memory_mean={sum(m for _, m in costs) / len(costs):.1f}")
        qs = [quality(**r["quality_components"], qw=cfg.quality) for r in solves]
        _out(f"quality_mean={_f(sum(qs) / len(qs))}")
    _out(f"episodes={len(episodes)}")
    if episodes:
        _out(f"success_rate={_f(sum(r['status'] == 'success' for r in episodes) / len(episodes))}")
        if len(episodes) >= 2:
            # episodes from several summaries are taken as one run, in file order
            series = PerformanceSeries.of(enumerate(r["performance"] for r in episodes))
            _out(f"adaptation_rate={_f(adaptation_rate(series))}")
        else:
            _out("adaptation_rate=n/a")
    return 0


def cmd_config(args, cfg: EngineConfig) -> int:
    sys.stdout.write(reference_config_text())
    return 0


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="global seed (default: config, else 0)")
    common.add_argument("--config", default=None, help="engine config file (see `cbrgda config`)")

    parser = argparse.ArgumentParser(
        prog="cbrgda",
        description="Case-based reasoning engine and GDA simulator",
        epilog="configuration defaults (pass --config FILE to override):\n\n" + reference_config_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="build a library from raw case files")
    p.add_argument("files", nargs="+")
    p.add_argument("--out", required=True, help="library file to write")
    p.add_argument("--skip-bad", action="store_true", help="write the library despite rejected records")
    p.set_defaults(func=cmd_ingest)

    def query_args(p):
        p.add_argument("query", help="problem features, e.g. 'size=3; color=red'")
        p.add_argument("--library", required=True)
        p.add_argument("--hint", help="plan hint for the structural channel, e.g. 'move(a); pick(b)'")
        p.add_argument("--tau", type=float, default=None)
        p.add_argument("--top-k", type=int, default=None)

    def constraint_args(p):
        p.add_argument("--sub", action="append", metavar="FROM=TO", help="argument substitution")
        p.add_argument("--forbid", action="append", metavar="ACTION")
        p.add_argument("--require", action="append", metavar="ACTION")

    p = sub.add_parser("retrieve", parents=[common], help="rank library cases against a query")
    query_args(p)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("solve", parents=[common], help="retrieve and adapt a solution")
    query_args(p)
    constraint_args(p)
    p.add_argument("--pathways", action="store_true", help="also weigh the cot and parametric pathways")
    p.add_argument("--log", help="write a reasoning record (JSON line) for `metrics`")
    p.add_argument("--timings", action="store_true", help="measure wall-clock costs (non-deterministic)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("explain", parents=[common], help="show the precedent behind a solution")
    query_args(p)
    constraint_args(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("retain", parents=[common], help="offer a new case to the library")
    p.add_argument("record", help="raw case record line")
    p.add_argument("--library", required=True)
    p.add_argument("--provenance", default=None)
    p.set_defaults(func=cmd_retain)

    p = sub.add_parser("simulate", parents=[common], help="run GDA episodes on a scenario")
    p.add_argument("scenario", help=f"scenario file or built-in name ({', '.join(SCENARIOS)})")
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--out", required=True, help="directory for traces and case bases")
    p.add_argument("--baseline", action="store_true", help="run the non-GDA replanner instead")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gaps", parents=[common], help="report probes the library covers poorly")
    p.add_argument("probe", nargs="*")
    p.add_argument("--library", required=True)
    p.add_argument("--probes", help="file with one probe per line")
    p.add_argument("--coverage", type=float, default=None, help="coverage threshold (default: tau)")
    p.set_defaults(func=cmd_gaps)

    p = sub.add_parser("metrics", parents=[common], help="summarize solve logs and episode summaries")
    p.add_argument("files", nargs="*")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("config", parents=[common], help="print the reference configuration")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
        return args.func(args, cfg)
    except CBRError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Durable storage: library files, case-base files, atomic writes, locks.

A library file is JSON lines: a header, then one case per line carrying
its canonical record, metadata, embedding (sparse integer hash counts),
feature postings and cluster. Counts are integers, so a loaded library
scores identically to the saved one.
"""

from __future__ import annotations

import contextlib
import fcntl
import json
import os
import tempfile
from typing import Iterable, List

import numpy as np

from .cases import build_case, format_value, parse_record, parse_terms, format_plan
from .embedding import CaseLibrary, EmbedderConfig
from .env import WorldState
from .exceptions import DigestMismatch, MalformedRecord
from .gda import Mismatch, MismatchCase, PlanningCase

FORMAT = "cbrgda-library"
VERSION = 1


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def atomic_write(path: str, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


@contextlib.contextmanager
def file_lock(path: str, exclusive: bool = True):
    """Advisory lock on ``path + '.lock'`` (flock)."""
    lock_path = os.path.abspath(path) + ".lock"
    with open(lock_path, "a") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX if exclusive else fcntl.LOCK_SH)
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def dumps_library(lib: CaseLibrary) -> str:
    cfg = lib.embedder
    header = {
        "format": FORMAT,
        "version": VERSION,
        "embedder": {"dim": cfg.dim, "ngram": cfg.ngram},
        "digest": cfg.digest(),
        "cluster_threshold": lib.hierarchy.threshold,
        "cases": len(lib),
        "clusters": len(lib.hierarchy),
    }
    from .cases import serialize_case

    lines = [_dump(header)]
    for cid, vec in zip(lib.order, lib.matrix):
        case = lib.cases[cid]
        lines.append(_dump({
            "id": cid,
            "tick": case.meta.created_at,
            "provenance": case.meta.provenance,
            "tags": sorted(case.meta.tags),
            "record": serialize_case(case),
            "postings": [f"{k}={format_value(v)}" for k, v in case.problem.items()],
            "cluster": lib.hierarchy.assignment[cid],
            "vector": {str(i): int(vec[i]) for i in np.flatnonzero(vec)},
        }))
    return "\n".join(lines) + "\n"


def loads_library(text: str, embedder: EmbedderConfig) -> CaseLibrary:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MalformedRecord("library file is empty")
    header = json.loads(lines[0])
    if header.get("format") != FORMAT or header.get("version") != VERSION:
        raise MalformedRecord("not a library file of a supported version")
    if header["digest"] != embedder.digest():
        raise DigestMismatch(
            f"library built with embedder digest {header['digest']}, active config has {embedder.digest()}"
        )
    lib = CaseLibrary(embedder, header["cluster_threshold"])
    for lineno, line in enumerate(lines[1:], start=2):
        row = json.loads(line)
        case = build_case(parse_record(row["record"]), row["tick"], row["provenance"], row["tags"])
        if case.id != row["id"]:
            raise MalformedRecord(f"line {lineno}: stored id {row['id']} does not match content")
        counts = np.zeros(embedder.dim)
        for i, c in row["vector"].items():
            if not isinstance(c, int) or not 0 <= int(i) < embedder.dim:
                raise MalformedRecord(f"line {lineno}: bad embedding entry {i}={c!r}")
            counts[int(i)] = c
        lib.index_case(case, counts)
        if lib.hierarchy.assignment[case.id] != row["cluster"]:
            raise MalformedRecord(f"line {lineno}: cluster assignment differs from stored value")
    return lib


def save_library(lib: CaseLibrary, path: str) -> None:
    atomic_write(path, dumps_library(lib))


def load_library(path: str, embedder: EmbedderConfig) -> CaseLibrary:
    with open(path, encoding="utf-8") as fh:
        return loads_library(fh.read(), embedder)


# -- case bases -------------------------------------------------------------------

def _sections(line: str) -> dict:
    out = {}
    for chunk in line.split("|"):
        name, sep, body = chunk.partition(":")
        if not sep:
            raise MalformedRecord(f"unlabeled section {chunk.strip()!r}")
        out[name.strip()] = body.strip()
    return out


def dumps_pcb(pcb: Iterable[PlanningCase]) -> str:
    return "".join(
        f"state: {c.s} | goal: {c.g} | expect: {c.e} | plan: {format_plan(c.p)}\n" for c in pcb
    )


def loads_pcb(text: str) -> List[PlanningCase]:
    out = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        s = _sections(line)
        out.append(PlanningCase(WorldState.parse(s["state"]), WorldState.parse(s["goal"]),
                                WorldState.parse(s["expect"]), parse_terms(s["plan"])))
    return out


def dumps_mcb(mcb: Iterable[MismatchCase]) -> str:
    return "".join(
        f"missing: {c.m.missing} | unexpected: {c.m.unexpected} | goal: {c.g}\n" for c in mcb
    )


def loads_mcb(text: str) -> List[MismatchCase]:
    out = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        s = _sections(line)
        m = Mismatch(WorldState.parse(s["missing"]), WorldState.parse(s["unexpected"]))
        out.append(MismatchCase(m, WorldState.parse(s["goal"])))
    return out

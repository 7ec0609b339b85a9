"""Embeddings, feature index and cluster hierarchy for the case library."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .cases import Case, FeatureMap, format_value, serialize_problem
from .exceptions import ConfigError, DimMismatch, DuplicateId

Vector = np.ndarray


@dataclass(frozen=True)
class EmbedderConfig:
    dim: int = 256
    ngram: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.dim < 2:
            raise ConfigError("embedder dim must be >= 2")
        if self.ngram < 1:
            raise ConfigError("embedder ngram must be >= 1")

    def digest(self) -> str:
        text = f"hashing-ngram-v1;dim={self.dim};ngram={self.ngram};seed={self.seed}"
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _ngrams(text: str, n: int):
    if len(text) <= n:
        yield text
        return
    for i in range(len(text) - n + 1):
        yield text[i:i + n]


def hash_counts(text: str, cfg: EmbedderConfig = EmbedderConfig()) -> Vector:
    """Signed n-gram counts per hash bucket (integer-valued floats).

    Dot products between count vectors are exact integers, so cosines
    computed from them do not depend on summation order.
    """
    vec = np.zeros(cfg.dim, dtype=np.float64)
    if not text:
        return vec
    key = (cfg.seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    for gram in _ngrams(text, cfg.ngram):
        h = int.from_bytes(
            hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=key).digest(), "little"
        )
        vec[h % cfg.dim] += -1.0 if (h >> 63) & 1 else 1.0
    return vec


def normalize(vec: Vector) -> Vector:
    norm = math.sqrt(float(np.dot(vec, vec)))
    if norm == 0.0:
        return vec.copy()
    return vec / norm


def embed(text: str, cfg: EmbedderConfig = EmbedderConfig()) -> Vector:
    """Signed feature hashing of character n-grams, L2-normalized.

    Empty text maps to the zero vector.
    """
    return normalize(hash_counts(text, cfg))


def problem_counts(problem: FeatureMap, cfg: EmbedderConfig = EmbedderConfig()) -> Vector:
    return hash_counts(serialize_problem(problem), cfg)


def embed_problem(problem: FeatureMap, cfg: EmbedderConfig = EmbedderConfig()) -> Vector:
    return embed(serialize_problem(problem), cfg)


def embed_case(case: Case, cfg: EmbedderConfig = EmbedderConfig()) -> Vector:
    # problem component only: retrieval compares a query against problems
    return embed_problem(case.problem, cfg)


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"{a.shape} vs {b.shape}")
    aa = float(np.dot(a, a))
    bb = float(np.dot(b, b))
    if aa == 0.0 or bb == 0.0:
        return 0.0
    # sqrt(x*x) == x in IEEE arithmetic, so cosine(a, a) is exactly 1
    c = float(np.dot(a, b)) / math.sqrt(aa * bb)
    return min(1.0, max(-1.0, c))


class FeatureIndex:
    """Inverted index from (feature, value) pairs to sorted case ids."""

    def __init__(self):
        self._postings: Dict[tuple, List[str]] = {}

    @staticmethod
    def key(name: str, value) -> tuple:
        return name, format_value(value)

    def add(self, case: Case) -> None:
        for name, value in case.problem.items():
            ids = self._postings.setdefault(self.key(name, value), [])
            ids.append(case.id)
            ids.sort()

    def lookup(self, name: str, value) -> List[str]:
        return list(self._postings.get(self.key(name, value), ()))

    def total_postings(self) -> int:
        return sum(len(v) for v in self._postings.values())

    def __contains__(self, pair) -> bool:
        return self.key(*pair) in self._postings

    def __len__(self) -> int:
        return len(self._postings)


@dataclass
class Cluster:
    leader: Vector
    members: List[str] = field(default_factory=list)
    # smallest cosine between leader and any member; bounds member angles
    min_cos: float = 1.0


class ClusterHierarchy:
    """Single-level greedy leader clustering.

    A case joins the first cluster whose leader has cosine >= threshold,
    otherwise it founds a new cluster with its own embedding as leader.
    """

    def __init__(self, threshold: float = 0.7):
        if not 0.0 < threshold <= 1.0:
            raise ConfigError("cluster threshold must lie in (0, 1]")
        self.threshold = threshold
        self.clusters: List[Cluster] = []
        self.assignment: Dict[str, int] = {}
        # leader rows and squared norms, grown by doubling
        self._leaders: Optional[np.ndarray] = None
        self._norms = np.zeros(0)

    def _leader_cosines(self, vec: Vector) -> np.ndarray:
        n = len(self.clusters)
        if n == 0:
            return np.zeros(0)
        vv = float(np.dot(vec, vec))
        if vv == 0.0:
            return np.zeros(n)
        ll = self._norms[:n]
        with np.errstate(divide="ignore", invalid="ignore"):
            c = (self._leaders[:n] @ vec) / np.sqrt(ll * vv)
        return np.clip(np.where(ll == 0.0, 0.0, c), -1.0, 1.0)

    def _add_leader(self, vec: Vector) -> None:
        n = len(self.clusters)
        if self._leaders is None or n == len(self._leaders):
            grown = np.zeros((max(8, 2 * n), len(vec)))
            norms = np.zeros(len(grown))
            if self._leaders is not None:
                grown[:n] = self._leaders
                norms[:n] = self._norms
            self._leaders, self._norms = grown, norms
        self._leaders[n] = vec
        self._norms[n] = float(np.dot(vec, vec))

    def assign(self, case_id: str, vec: Vector) -> int:
        cos = self._leader_cosines(vec)
        hits = np.flatnonzero(cos >= self.threshold)
        if len(hits):
            i = int(hits[0])
            cl = self.clusters[i]
            cl.members.append(case_id)
            cl.min_cos = min(cl.min_cos, float(cos[i]))
            self.assignment[case_id] = i
            return i
        self._add_leader(vec)
        self.clusters.append(Cluster(vec.copy(), [case_id], 1.0))
        self.assignment[case_id] = len(self.clusters) - 1
        return len(self.clusters) - 1

    def __len__(self) -> int:
        return len(self.clusters)


class CaseLibrary:
    """Indexed case collection: cases, embeddings, feature index, clusters.

    The library keeps the unnormalized hash counts of each problem; the
    cosine is scale-free, and integer counts keep it exactly reproducible.
    Mutating methods need exclusive access; reads are safe to share.
    """

    def __init__(self, embedder: EmbedderConfig = EmbedderConfig(), cluster_threshold: float = 0.7):
        self.embedder = embedder
        self.cases: Dict[str, Case] = {}
        self.order: List[str] = []
        self.features = FeatureIndex()
        self.hierarchy = ClusterHierarchy(cluster_threshold)
        self._vectors: List[Vector] = []
        self._pos: Dict[str, int] = {}
        self._matrix: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.order)

    def __contains__(self, case_id: str) -> bool:
        return case_id in self.cases

    def __iter__(self):
        return (self.cases[i] for i in self.order)

    def index_case(self, case: Case, counts: Optional[Vector] = None) -> None:
        if case.id in self.cases:
            raise DuplicateId(case.id)
        if counts is None:
            vec = problem_counts(case.problem, self.embedder)
        else:
            vec = np.asarray(counts, dtype=np.float64)
        if vec.shape != (self.embedder.dim,):
            raise DimMismatch(f"vector of shape {vec.shape} for dim {self.embedder.dim}")
        self.cases[case.id] = case
        self._pos[case.id] = len(self.order)
        self.order.append(case.id)
        self._vectors.append(vec)
        self._matrix = None
        self.features.add(case)
        self.hierarchy.assign(case.id, vec)

    def organize(self, threshold: Optional[float] = None) -> ClusterHierarchy:
        """Rebuild the hierarchy from scratch in insertion order."""
        h = ClusterHierarchy(self.hierarchy.threshold if threshold is None else threshold)
        for cid, vec in zip(self.order, self._vectors):
            h.assign(cid, vec)
        self.hierarchy = h
        return h

    def counts(self, case_id: str) -> Vector:
        return self._vectors[self._pos[case_id]]

    def vector(self, case_id: str) -> Vector:
        """Unit-norm embedding of the case's problem."""
        return normalize(self.counts(case_id))

    @property
    def matrix(self) -> np.ndarray:
        """Hash counts, one row per case in insertion order."""
        if self._matrix is None:
            if self._vectors:
                self._matrix = np.vstack(self._vectors)
            else:
                self._matrix = np.zeros((0, self.embedder.dim))
        return self._matrix

    def position(self) -> Dict[str, int]:
        return dict(self._pos)


def index_case(lib: CaseLibrary, case: Case) -> CaseLibrary:
    lib.index_case(case)
    return lib


def organize(lib: CaseLibrary, threshold: float) -> ClusterHierarchy:
    return lib.organize(threshold)

"""scikit-learn style front end for the case-based reasoner.

``CaseBasedReasoner.fit`` indexes a case library, ``predict`` adapts the
retrieved precedents into plans, ``transform`` returns the fused
similarity of each query to every library case, and ``partial_fit``
grows the library through the utility gate.
"""

from __future__ import annotations

from typing import List, Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .adaptation import EMPTY_CONSTRAINTS, CandidateSolution, ConstraintSet, adapt
from .cases import Query
from .embedding import CaseLibrary, EmbedderConfig, embed_problem
from .exceptions import NothingRetrieved
from .learning import RetentionConfig, gap_report, retain
from .retrieval import RetrievalConfig, ScoredCase, hybrid_retrieve, score_all
from .validation import check_cases, check_queries, check_query


class CaseEmbedder(BaseEstimator, TransformerMixin):
    """Stateless hashing embedder over problem feature maps."""

    def __init__(self, dim=256, ngram=3, seed=0):
        self.dim = dim
        self.ngram = ngram
        self.seed = seed

    def fit(self, X=None, y=None):
        self.config_ = EmbedderConfig(self.dim, self.ngram, self.seed)
        return self

    def transform(self, X):
        cfg = getattr(self, "config_", None) or EmbedderConfig(self.dim, self.ngram, self.seed)
        queries = check_queries(X)
        if not queries:
            return np.zeros((0, cfg.dim))
        return np.vstack([embed_problem(q.features, cfg) for q in queries])


class CaseBasedReasoner(BaseEstimator):
    def __init__(self, tau=0.3, weights=None, lambdas=(0.4, 0.4, 0.2), top_k=5,
                 dim=256, ngram=3, seed=0, cluster_threshold=0.7,
                 delta=0.6, alpha=0.5, beta=0.3, gamma=0.2, neighborhood_k=3,
                 generator=None):
        self.tau = tau
        self.weights = weights
        self.lambdas = lambdas
        self.top_k = top_k
        self.dim = dim
        self.ngram = ngram
        self.seed = seed
        self.cluster_threshold = cluster_threshold
        self.delta = delta
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.neighborhood_k = neighborhood_k
        self.generator = generator

    def _configs(self):
        self.retrieval_config_ = RetrievalConfig(self.tau, self.weights, tuple(self.lambdas), self.top_k)
        self.retention_config_ = RetentionConfig(self.delta, self.alpha, self.beta, self.gamma,
                                                 self.neighborhood_k)
        self.embedder_config_ = EmbedderConfig(self.dim, self.ngram, self.seed)

    def fit(self, X, y=None):
        self._configs()
        lib = CaseLibrary(self.embedder_config_, self.cluster_threshold)
        for case in check_cases(X):
            lib.index_case(case)
        self.library_ = lib
        self.n_cases_ = len(lib)
        return self

    def partial_fit(self, X, y=None):
        """Offer cases to the library; only those passing the utility gate stay."""
        if not hasattr(self, "library_"):
            self._configs()
            self.library_ = CaseLibrary(self.embedder_config_, self.cluster_threshold)
        flags = []
        for case in check_cases(X, start_tick=len(self.library_)):
            _, kept = retain(self.library_, case, self.retention_config_, self.retrieval_config_)
            flags.append(kept)
        self.retained_ = flags
        self.n_cases_ = len(self.library_)
        return self

    def retrieve(self, X) -> List[List[ScoredCase]]:
        check_is_fitted(self, "library_")
        return [hybrid_retrieve(q, self.library_, self.retrieval_config_) for q in check_queries(X)]

    def solve(self, q, constraints: ConstraintSet = EMPTY_CONSTRAINTS) -> CandidateSolution:
        check_is_fitted(self, "library_")
        q = check_query(q)
        hits = hybrid_retrieve(q, self.library_, self.retrieval_config_)
        if not hits:
            raise NothingRetrieved("no case reached the retrieval threshold")
        return adapt(q, hits, self.library_, constraints, self.generator)

    def predict(self, X, constraints: ConstraintSet = EMPTY_CONSTRAINTS):
        return [self.solve(q, constraints).plan for q in check_queries(X)]

    def transform(self, X) -> np.ndarray:
        """Fused similarity of each query to each library case (insertion order)."""
        check_is_fitted(self, "library_")
        queries = check_queries(X)
        out = np.zeros((len(queries), len(self.library_)))
        for i, q in enumerate(queries):
            out[i] = [s.score for s in score_all(q, self.library_, self.retrieval_config_)]
        return out

    def gap_report(self, probes, coverage_threshold: Optional[float] = None):
        check_is_fitted(self, "library_")
        threshold = self.tau if coverage_threshold is None else coverage_threshold
        return gap_report(self.library_, check_queries(probes), threshold, self.retrieval_config_)

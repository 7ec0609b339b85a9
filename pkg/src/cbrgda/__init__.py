"""Case-based reasoning engine with a goal-driven autonomy simulator."""

__version__ = "0.1.0"

from .cases import Case, CaseMetadata, OutcomeRecord, Query, Term, build_case, make_case, parse_record
from .embedding import CaseLibrary, EmbedderConfig, cosine, embed
from .retrieval import RetrievalConfig, ScoredCase, hybrid_retrieve
from .adaptation import CandidateSolution, ConstraintSet, GeneratorConfig, adapt, compose, transform
from .learning import RetentionConfig, gap_report, retain, transfer_knowledge, utility
from .exceptions import CBRError

__all__ = [
    "Case", "CaseMetadata", "OutcomeRecord", "Query", "Term", "build_case", "make_case", "parse_record",
    "CaseLibrary", "EmbedderConfig", "cosine", "embed",
    "RetrievalConfig", "ScoredCase", "hybrid_retrieve",
    "CandidateSolution", "ConstraintSet", "GeneratorConfig", "adapt", "compose", "transform",
    "RetentionConfig", "gap_report", "retain", "transfer_knowledge", "utility",
    "CaseBasedReasoner", "CaseEmbedder", "CBRError",
]


def __getattr__(name):
    # the estimators pull in scikit-learn; keep it off the CLI's import path
    if name in ("CaseBasedReasoner", "CaseEmbedder"):
        from . import estimator

        return getattr(estimator, name)
    raise AttributeError(f"module 'cbrgda' has no attribute {name!r}")

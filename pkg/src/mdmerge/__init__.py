"""Hybrid match-and-merge deduplication: exact keys, fuzzy similarity, logistic regression."""

from .matchers import FuzzyThresholds, jaccard, levenshtein, levenshtein_similarity, match_deterministic, match_fuzzy
from .pipeline import Blocking, MatchDecision, PipelineConfig, Stage, match_pair, run_pipeline
from .records import CanonicalRecord, RawRecord, completeness_score, normalize_record
from .resolver import LogisticModel, TrainConfig, extract_features, train

__version__ = "0.1.0"

__all__ = [
    "Blocking",
    "CanonicalRecord",
    "FuzzyThresholds",
    "LogisticModel",
    "MatchDecision",
    "PipelineConfig",
    "RawRecord",
    "Stage",
    "TrainConfig",
    "completeness_score",
    "extract_features",
    "jaccard",
    "levenshtein",
    "levenshtein_similarity",
    "match_deterministic",
    "match_fuzzy",
    "match_pair",
    "normalize_record",
    "run_pipeline",
    "train",
]

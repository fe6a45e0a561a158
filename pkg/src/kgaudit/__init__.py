"""Evaluation toolkit for knowledge-graph path-reasoning recommenders.

Covers preprocessing, chronological splits, utility, beyond-accuracy and explanation
metrics, consumer/provider fairness gaps and significance tests between method classes.
"""

__version__ = "0.1.0"

from .evaluation import EvalConfig, compare_methods, evaluate
from .explanation import precompute_weights
from .fairness import GroupAssignment, group_delta, kruskal_h, provider_fairness, welch_ttest
from .ingest import DatasetBundle, PreprocessConfig, compute_stats, load_raw, preprocess, read_bundle, write_bundle
from .kg import Hop, InteractionLog, KnowledgeGraph, ReasoningPath, Vocab
from .models import RecommendedList, recommend_mostpop, recommend_pathcount, train_mostpop
from .split import SplitConfig, chronological_split

__all__ = [
    "DatasetBundle", "EvalConfig", "GroupAssignment", "Hop", "InteractionLog", "KnowledgeGraph",
    "PreprocessConfig", "ReasoningPath", "RecommendedList", "SplitConfig", "Vocab",
    "chronological_split", "compare_methods", "compute_stats", "evaluate", "group_delta", "kruskal_h",
    "load_raw", "precompute_weights", "preprocess", "provider_fairness", "read_bundle",
    "recommend_mostpop", "recommend_pathcount", "train_mostpop", "welch_ttest", "write_bundle",
]

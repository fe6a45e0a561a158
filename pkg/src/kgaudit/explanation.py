"""Explanation-quality metrics over the reasoning paths attached to recommended lists."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .kg import (InteractionLog, KnowledgeGraph, ReasoningPath, is_valid_path, path_pattern_of,
                 path_type_of, shared_entity_of)
from .metrics import UNDEFINED
from .models import Entry, RecommendedList

SELECTION_POLICIES = ("first", "max-lir", "max-sep")


@dataclass(frozen=True, eq=False)
class ExplanationWeights:
    """Per-training-row recency weights and per-entity popularity weights."""

    lir: np.ndarray
    sep: np.ndarray
    linking_row: dict[tuple[int, int], int]
    beta: float

    def lir_of(self, path: ReasoningPath) -> float:
        return float(self.lir[self.linking_row[(path.user, path.linking_product)]])

    def sep_of(self, path: ReasoningPath) -> float:
        return float(self.sep[shared_entity_of(path)])


def recency_weights(timestamps, beta: float) -> np.ndarray:
    """Min-max normalise chronologically sorted timestamps, then smooth exponentially."""
    ts = np.asarray(timestamps, dtype=np.float64)
    if len(ts) == 0:
        return ts
    lo, hi = ts.min(), ts.max()
    values = np.full(len(ts), 0.5) if hi == lo else (ts - lo) / (hi - lo)
    out = np.empty(len(ts))
    out[0] = values[0]
    for i in range(1, len(ts)):
        out[i] = (1 - beta) * out[i - 1] + beta * values[i]
    return out


def entity_popularity(kg: KnowledgeGraph) -> np.ndarray:
    """log(1 + degree) scaled by the same quantity for the best-connected entity of its type."""
    deg = kg.degree.astype(np.float64)
    type_max: dict[str, float] = {}
    for e in kg.entities.tolist():
        t = kg.type_of(e)
        type_max[t] = max(type_max.get(t, 0.0), deg[e])
    out = np.zeros(kg.n_entities)
    for e in kg.entities.tolist():
        m = type_max[kg.type_of(e)]
        out[e] = math.log1p(deg[e]) / math.log1p(m) if m > 0 else 0.0
    return out


def precompute_weights(train: InteractionLog, kg: KnowledgeGraph, beta: float = 0.3) -> ExplanationWeights:
    if not 0 < beta <= 1:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    lir = np.zeros(len(train))
    n = len(train)
    rows = np.arange(n)
    order = np.lexsort((rows, train.timestamps, train.users))
    users = train.users[order]
    cuts = np.flatnonzero(np.diff(users)) + 1
    for chunk in np.split(order, cuts) if n else ():
        lir[chunk] = recency_weights(train.timestamps[chunk], beta)
    return ExplanationWeights(lir=lir, sep=entity_popularity(kg), linking_row=train.latest_row, beta=beta)


def explained(lst: RecommendedList, k: int) -> list[Entry]:
    return [e for e in lst.top(k) if e.path is not None]


def fidelity(lst: RecommendedList, k: int) -> float:
    shown = min(k, len(lst))
    if shown == 0:
        return UNDEFINED
    return len(explained(lst, k)) / shown


def fidelity_at_k(lists: Iterable[RecommendedList], k: int) -> float:
    vals = [v for v in (fidelity(lst, k) for lst in lists) if not math.isnan(v)]
    return math.fsum(vals) / len(vals) if vals else UNDEFINED


def lir(lst: RecommendedList, weights: ExplanationWeights, k: int) -> float:
    paths = [e.path for e in explained(lst, k)]
    if not paths:
        return UNDEFINED
    return math.fsum(weights.lir_of(p) for p in paths) / len(paths)


def lid(lst: RecommendedList, k: int) -> float:
    paths = [e.path for e in explained(lst, k)]
    if not paths:
        return UNDEFINED
    return len({(p.user, p.linking_product) for p in paths}) / len(paths)


def sep(lst: RecommendedList, weights: ExplanationWeights, k: int) -> float:
    paths = [e.path for e in explained(lst, k)]
    if not paths:
        return UNDEFINED
    return math.fsum(weights.sep_of(p) for p in paths) / len(paths)


def sed(lst: RecommendedList, k: int) -> float:
    paths = [e.path for e in explained(lst, k)]
    if not paths:
        return UNDEFINED
    return len({shared_entity_of(p) for p in paths}) / len(paths)


def ptd(lst: RecommendedList, k: int) -> float:
    paths = [e.path for e in explained(lst, k)]
    if not paths:
        return UNDEFINED
    return len({path_type_of(p) for p in paths}) / len(paths)


def normalized_entropy(labels: Iterable, n_total: int) -> float:
    """Base-2 entropy of label frequencies divided by log2(n_total); 0 for degenerate cases."""
    counts = Counter(labels)
    if n_total <= 1 or len(counts) <= 1:
        return 0.0
    m = sum(counts.values())
    h = -math.fsum((c / m) * math.log2(c / m) for c in counts.values())
    return min(1.0, h / math.log2(n_total))


def ptc(lst: RecommendedList, k: int, n_types: int) -> float:
    paths = [e.path for e in explained(lst, k)]
    if not paths:
        return UNDEFINED
    return normalized_entropy((path_type_of(p) for p in paths), n_types)


def ppc(lst: RecommendedList, k: int, kg: KnowledgeGraph, n_patterns: int) -> float:
    paths = [e.path for e in explained(lst, k)]
    if not paths:
        return UNDEFINED
    return normalized_entropy((path_pattern_of(p, kg) for p in paths), n_patterns)


def run_type_counts(lists: Iterable[RecommendedList], k: int, kg: KnowledgeGraph) -> tuple[int, int]:
    """Distinct path types and path patterns among explained top-k entries of a whole run."""
    types, patterns = set(), set()
    for lst in lists:
        for e in explained(lst, k):
            types.add(path_type_of(e.path))
            patterns.add(path_pattern_of(e.path, kg))
    return len(types), len(patterns)


def select_path(candidates: list[ReasoningPath], kg: KnowledgeGraph, train: InteractionLog,
                weights: ExplanationWeights | None = None, policy: str = "first",
                user: int | None = None, product: int | None = None) -> ReasoningPath | None:
    """Pick one valid path for an entry; invalid candidates are skipped."""
    if policy not in SELECTION_POLICIES:
        raise ValueError(f"unknown selection policy {policy!r}")
    valid = [p for p in candidates if is_valid_path(p, kg, train, user, product)]
    if not valid:
        return None
    if policy == "first":
        return valid[0]
    if weights is None:
        raise ValueError(f"policy {policy!r} needs explanation weights")
    score = weights.lir_of if policy == "max-lir" else weights.sep_of
    best = max(score(p) for p in valid)
    return next(p for p in valid if score(p) == best)

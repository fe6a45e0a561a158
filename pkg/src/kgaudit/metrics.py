"""Recommendation utility and beyond-utility metrics.

All per-list functions accept a :class:`RecommendedList` or a plain ranked sequence of
product ids. Undefined values (no relevant items, empty list) are reported as NaN and
left out of means.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping, Sequence

import numpy as np

from .models import RecommendedList

UNDEFINED = math.nan


def _products(lst: RecommendedList | Sequence[int]) -> list[int]:
    return lst.products if isinstance(lst, RecommendedList) else list(lst)


def _check_k(k: int) -> None:
    if k < 1:
        raise ValueError("k must be >= 1")


def ndcg_at_k(lst, relevant: Iterable[int], k: int) -> float:
    _check_k(k)
    relevant = set(relevant)
    if not relevant:
        return UNDEFINED
    top = _products(lst)[:k]
    dcg = sum(1.0 / math.log2(i + 1) for i, p in enumerate(top, 1) if p in relevant)
    idcg = sum(1.0 / math.log2(i + 1) for i in range(1, min(k, len(relevant)) + 1))
    return dcg / idcg


def mrr(lst, relevant: Iterable[int], k: int) -> float:
    _check_k(k)
    relevant = set(relevant)
    if not relevant:
        return UNDEFINED
    for i, p in enumerate(_products(lst)[:k], 1):
        if p in relevant:
            return 1.0 / i
    return 0.0


def coverage(all_lists: Iterable, catalog: Iterable[int], k: int | None = None) -> float:
    """Share of the catalog recommended at least once (within the top-k when given)."""
    catalog = set(catalog)
    if not catalog:
        raise ValueError("catalog is empty")
    recommended: set[int] = set()
    for lst in all_lists:
        products = _products(lst)
        recommended.update(products[:k] if k is not None else products)
    return len(recommended) / len(catalog)


def diversity(lst, category_of: Mapping[int, Iterable[int]], k: int) -> float:
    """Distinct categories across the top-k, per list slot, capped at 1."""
    _check_k(k)
    cats: set = set()
    for p in _products(lst)[:k]:
        cats.update(category_of.get(p, ()))
    return min(1.0, len(cats) / k)


def novelty(lst, pop_counts: Mapping[int, int], k: int) -> float:
    _check_k(k)
    top = _products(lst)[:k]
    if not top:
        return UNDEFINED
    max_count = max(pop_counts.values(), default=0)
    if max_count <= 0:
        raise ValueError("popularity counts need a positive maximum")
    return float(np.mean([1.0 - pop_counts.get(p, 0) / max_count for p in top]))


def serendipity(lst, baseline, k: int) -> float:
    _check_k(k)
    if isinstance(lst, RecommendedList) and isinstance(baseline, RecommendedList) \
            and lst.user != baseline.user:
        raise ValueError(f"serendipity compares lists of different users ({lst.user} vs {baseline.user})")
    base = set(_products(baseline)[:k])
    return sum(1 for p in _products(lst)[:k] if p not in base) / k


def nanmean(values: Iterable[float]) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return math.fsum(vals) / len(vals) if vals else UNDEFINED

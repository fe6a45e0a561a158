"""Reference recommenders: most-popular baseline and a deterministic KG path-count model."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .kg import INTERACTION_RELATION, Hop, InteractionLog, KnowledgeGraph, ReasoningPath, path_type_of

PATH_POLICIES = ("recent", "popular")


class Entry(NamedTuple):
    rank: int
    product: int
    score: float
    path: ReasoningPath | None = None


@dataclass(frozen=True)
class RecommendedList:
    user: int
    entries: tuple[Entry, ...]
    truncated: bool = False

    def __post_init__(self):
        seen = set()
        prev = float("inf")
        for i, e in enumerate(self.entries, 1):
            if e.rank != i:
                raise ValueError(f"ranks must be contiguous from 1 (got {e.rank} at position {i})")
            if e.product in seen:
                raise ValueError(f"product {e.product} listed twice for user {self.user}")
            if e.score > prev:
                raise ValueError(f"scores must be non-increasing (rank {e.rank})")
            if e.path is not None and (e.path.user != self.user or e.path.product != e.product):
                raise ValueError(f"path at rank {e.rank} does not connect user to product")
            seen.add(e.product)
            prev = e.score

    @classmethod
    def from_ranked(cls, user: int, items: Iterable[tuple[int, float, ReasoningPath | None]],
                    truncated: bool = False) -> "RecommendedList":
        return cls(user, tuple(Entry(i, p, s, path) for i, (p, s, path) in enumerate(items, 1)), truncated)

    @property
    def products(self) -> list[int]:
        return [e.product for e in self.entries]

    def top(self, k: int) -> tuple[Entry, ...]:
        return self.entries[:k]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class PopularityModel:
    counts: dict[int, int]
    ranking: tuple[int, ...]


def train_mostpop(train: InteractionLog, catalog: Iterable[int] | None = None) -> PopularityModel:
    """Rank products by training count, ties by id.

    With a catalog, products never seen in training follow at count zero so
    that a large k can reach the whole unseen catalog.
    """
    counts: dict[int, int] = {}
    if len(train):
        products, n = np.unique(train.products, return_counts=True)
        counts = dict(zip(products.tolist(), n.tolist()))
    if catalog is not None:
        counts = {int(p): counts.get(int(p), 0) for p in catalog} | counts
    ranking = tuple(sorted(counts, key=lambda p: (-counts[p], p)))
    return PopularityModel(counts, ranking)


def recommend_mostpop(model: PopularityModel, user: int, k: int,
                      seen: Iterable[int] = ()) -> RecommendedList:
    if k < 1:
        raise ValueError("k must be >= 1")
    seen = set(seen)
    picked = []
    for p in model.ranking:
        if p not in seen:
            picked.append((p, float(model.counts[p]), None))
            if len(picked) == k:
                break
    return RecommendedList.from_ranked(user, picked, truncated=len(picked) < k)


def _path_key(policy: str, timestamp: int, shared_degree: int, path: ReasoningPath):
    if policy == "recent":
        return (-timestamp, shared_degree, path_type_of(path), path.entities)
    return (-shared_degree, -timestamp, path_type_of(path), path.entities)


def enumerate_paths(kg: KnowledgeGraph, train: InteractionLog, user: int, max_hops: int,
                    targets: set[int] | frozenset[int]):
    """Yield every simple path of at most ``max_hops`` from ``user`` to a target product."""
    start = sorted(train.products_by_user.get(user, ()))
    relations = kg.relation_vocab

    def walk(entities: list[int], hops: list[Hop]):
        here = entities[-1]
        steps = [(r, t, False) for r, t in kg.out_edges(here)]
        steps += [(r, h, True) for r, h in kg.in_edges(here)]
        for r, nxt, inverse in steps:
            if nxt in entities:
                continue
            entities.append(nxt)
            hops.append(Hop(relations.label(r), inverse))
            if nxt in targets:
                yield ReasoningPath(user, tuple(entities), tuple(hops))
            if len(hops) < max_hops:
                yield from walk(entities, hops)
            entities.pop()
            hops.pop()

    for p in start:
        if p < kg.n_entities:
            yield from walk([p], [Hop(INTERACTION_RELATION)])


def recommend_pathcount(kg: KnowledgeGraph, train: InteractionLog, user: int, k: int,
                        max_hops: int = 3, *, catalog: Iterable[int] | None = None,
                        seen: Iterable[int] | None = None, policy: str = "recent") -> RecommendedList:
    """Rank unseen products by the number of KG paths reaching them from the user's history.

    Each entry carries one representative path. ``policy="recent"`` prefers the most
    recent linking interaction, then the least connected shared entity; ``"popular"``
    prefers the most connected shared entity first.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if policy not in PATH_POLICIES:
        raise ValueError(f"unknown path policy {policy!r}")
    history = train.products_by_user.get(user)
    if not history:
        raise ValueError(f"user {user} has no training interactions")
    products = set(catalog) if catalog is not None else set(train.distinct_products.tolist())
    seen = set(seen) if seen is not None else set(history)
    targets = frozenset(products - seen)

    counts: dict[int, int] = {}
    best: dict[int, tuple] = {}
    ts = train.timestamps
    latest = train.latest_row
    for path in enumerate_paths(kg, train, user, max_hops, targets):
        p = path.product
        counts[p] = counts.get(p, 0) + 1
        key = _path_key(policy, int(ts[latest[(user, path.linking_product)]]),
                        int(kg.degree[path.entities[-2]]), path)
        if p not in best or key < best[p][0]:
            best[p] = (key, path)
    ranked = sorted(counts, key=lambda p: (-counts[p], p))[:k]
    return RecommendedList.from_ranked(user, ((p, float(counts[p]), best[p][1]) for p in ranked),
                                       truncated=len(ranked) < k)

"""Plain-text exchange formats for recommendations, reasoning paths and split partitions.

recommendations: ``user <TAB> rank <TAB> product <TAB> score``
paths:           ``user <TAB> product <TAB> U<user> rel E<entity> rel~inv P<product>``
"""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Iterable, Mapping

from .explanation import ExplanationWeights, select_path
from .ingest import ParseError, format_rating, iter_rows
from .kg import InteractionLog, KnowledgeGraph, PathError, ReasoningPath, Vocab, format_path, parse_path_tokens
from .models import Entry, RecommendedList

log = logging.getLogger(__name__)


def write_interactions(interactions: InteractionLog, path: str | os.PathLike) -> None:
    uv, ev = interactions.user_vocab, interactions.entity_vocab
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, p, r, t in interactions:
            fh.write(f"{uv.label(u)}\t{ev.label(p)}\t{format_rating(r)}\t{t}\n")


def write_recommendations(lists: Mapping[int, RecommendedList], path: str | os.PathLike,
                          user_vocab: Vocab, entity_vocab: Vocab) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for user in sorted(lists):
            for e in lists[user].entries:
                fh.write(f"{user_vocab.label(user)}\t{e.rank}\t{entity_vocab.label(e.product)}\t{e.score!r}\n")


def write_paths(lists: Mapping[int, RecommendedList], path: str | os.PathLike, user_vocab: Vocab,
                entity_vocab: Vocab, products: Iterable[int] = ()) -> None:
    products = frozenset(products)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for user in sorted(lists):
            for e in lists[user].entries:
                if e.path is not None:
                    fh.write(f"{user_vocab.label(user)}\t{entity_vocab.label(e.product)}\t"
                             f"{format_path(e.path, user_vocab, entity_vocab, products)}\n")


def read_recommendations(source, user_vocab: Vocab, entity_vocab: Vocab, catalog: Iterable[int],
                         *, delimiter: str = "\t", name: str = "recommendations") -> dict[int, RecommendedList]:
    """Parse a ranked recommendation file, rejecting unknown users/products by line."""
    catalog = frozenset(catalog)
    rows: dict[int, list[tuple[int, int, float, int]]] = {}
    for lineno, (u, rank, p, score) in iter_rows(source, 4, delimiter, name):
        user = user_vocab.get(u)
        if user is None:
            raise ParseError(f"unknown user {u!r}", lineno, name)
        product = entity_vocab.get(p)
        if product is None or product not in catalog:
            raise ParseError(f"unknown product {p!r}", lineno, name)
        try:
            rows.setdefault(user, []).append((int(rank), product, float(score), lineno))
        except ValueError:
            raise ParseError(f"non-numeric rank/score {rank!r}/{score!r}", lineno, name) from None
    out = {}
    for user, items in rows.items():
        items.sort()
        try:
            out[user] = RecommendedList(user, tuple(Entry(r, p, s) for r, p, s, _ in items))
        except ValueError as exc:
            raise ParseError(str(exc), items[0][3], name) from None
    return out


def read_paths(source, user_vocab: Vocab, entity_vocab: Vocab, *, delimiter: str = "\t",
               name: str = "paths") -> tuple[dict[tuple[int, int], list[ReasoningPath]], int]:
    """Parse candidate paths per (user, product); malformed path strings are counted, not fatal."""
    out: dict[tuple[int, int], list[ReasoningPath]] = {}
    malformed = 0
    for lineno, (u, p, text) in iter_rows(source, 3, delimiter, name):
        user = user_vocab.get(u)
        product = entity_vocab.get(p)
        if user is None or product is None:
            raise ParseError(f"unknown user/product {u!r}/{p!r}", lineno, name)
        try:
            path = parse_path_tokens(text.split(), user_vocab, entity_vocab)
        except PathError as exc:
            log.info("%s:%d: unusable path (%s)", name, lineno, exc)
            malformed += 1
            continue
        out.setdefault((user, product), []).append(path)
    return out, malformed


def attach_paths(lists: Mapping[int, RecommendedList], paths: Mapping[tuple[int, int], list[ReasoningPath]],
                 kg: KnowledgeGraph, train: InteractionLog, weights: ExplanationWeights | None = None,
                 policy: str = "first") -> tuple[dict[int, RecommendedList], int]:
    """Return lists with one selected valid path per entry, plus the count of rejected entries."""
    out = {}
    invalid = 0
    for user, lst in lists.items():
        entries = []
        for e in lst.entries:
            candidates = paths.get((user, e.product), [])
            chosen = select_path(candidates, kg, train, weights, policy, user, e.product)
            if candidates and chosen is None:
                invalid += 1
            entries.append(e._replace(path=chosen))
        out[user] = RecommendedList(user, tuple(entries), lst.truncated)
    if invalid:
        log.warning("%d recommended entries had only invalid paths and count as unexplained", invalid)
    return out, invalid


def load_method(recs: str | os.PathLike, paths: str | os.PathLike | None, user_vocab: Vocab,
                entity_vocab: Vocab, catalog: Iterable[int], kg: KnowledgeGraph, train: InteractionLog,
                weights: ExplanationWeights | None = None, policy: str = "first"):
    lists = read_recommendations(recs, user_vocab, entity_vocab, catalog, name=Path(recs).name)
    malformed = invalid = 0
    if paths is not None:
        candidates, malformed = read_paths(paths, user_vocab, entity_vocab, name=Path(paths).name)
        lists, invalid = attach_paths(lists, candidates, kg, train, weights, policy)
    return lists, {"malformed_paths": malformed, "invalid_paths": invalid}

"""Domain model: vocabularies, interaction logs, the knowledge graph and reasoning paths."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

UNKNOWN_TYPE = "unknown"
INTERACTION_RELATION = "interacted"


class PathError(ValueError):
    """A reasoning path is structurally malformed or not backed by the data."""


class Vocab:
    """Dense, insertion-ordered mapping between string labels and integer ids."""

    def __init__(self, labels: Iterable[str] = ()):
        self._labels: list[str] = []
        self._index: dict[str, int] = {}
        for label in labels:
            self.add(label)

    def add(self, label: str) -> int:
        idx = self._index.get(label)
        if idx is None:
            idx = len(self._labels)
            self._index[label] = idx
            self._labels.append(label)
        return idx

    def __getitem__(self, label: str) -> int:
        return self._index[label]

    def get(self, label: str, default=None):
        return self._index.get(label, default)

    def label(self, idx: int) -> str:
        return self._labels[idx]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self._labels)

    def __contains__(self, label: object) -> bool:
        return label in self._index

    def __len__(self) -> int:
        return len(self._labels)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self._labels == other._labels

    def __repr__(self) -> str:
        return f"Vocab(n={len(self)})"


class Interaction(NamedTuple):
    user: int
    product: int
    rating: float
    timestamp: int


@dataclass(frozen=True, eq=False)
class InteractionLog:
    """Columnar interaction records; row order is meaningful (input order)."""

    users: np.ndarray
    products: np.ndarray
    ratings: np.ndarray
    timestamps: np.ndarray
    user_vocab: Vocab = field(default_factory=Vocab)
    entity_vocab: Vocab = field(default_factory=Vocab)

    def __post_init__(self):
        n = len(self.users)
        if not (len(self.products) == len(self.ratings) == len(self.timestamps) == n):
            raise ValueError("interaction columns must have equal length")
        if n and self.timestamps.min() < 0:
            raise ValueError("timestamps must be non-negative")

    @classmethod
    def from_records(cls, records: Iterable[Sequence], user_vocab: Vocab | None = None,
                     entity_vocab: Vocab | None = None) -> "InteractionLog":
        rows = list(records)
        cols = list(zip(*rows)) if rows else [(), (), (), ()]
        return cls(
            users=np.asarray(cols[0], dtype=np.int64),
            products=np.asarray(cols[1], dtype=np.int64),
            ratings=np.asarray(cols[2], dtype=np.float64),
            timestamps=np.asarray(cols[3], dtype=np.int64),
            user_vocab=user_vocab if user_vocab is not None else Vocab(),
            entity_vocab=entity_vocab if entity_vocab is not None else Vocab(),
        )

    def __len__(self) -> int:
        return len(self.users)

    def __iter__(self) -> Iterator[Interaction]:
        for u, p, r, t in zip(self.users.tolist(), self.products.tolist(),
                              self.ratings.tolist(), self.timestamps.tolist()):
            yield Interaction(u, p, r, t)

    def __getitem__(self, i: int) -> Interaction:
        return Interaction(int(self.users[i]), int(self.products[i]),
                           float(self.ratings[i]), int(self.timestamps[i]))

    def take(self, selector) -> "InteractionLog":
        """Subset by boolean mask or index array, sharing vocabularies."""
        return InteractionLog(self.users[selector], self.products[selector],
                              self.ratings[selector], self.timestamps[selector],
                              self.user_vocab, self.entity_vocab)

    def equals(self, other: "InteractionLog") -> bool:
        return (np.array_equal(self.users, other.users)
                and np.array_equal(self.products, other.products)
                and np.array_equal(self.ratings, other.ratings)
                and np.array_equal(self.timestamps, other.timestamps))

    @property
    def distinct_users(self) -> np.ndarray:
        return np.unique(self.users)

    @property
    def distinct_products(self) -> np.ndarray:
        return np.unique(self.products)

    @cached_property
    def latest_row(self) -> dict[tuple[int, int], int]:
        """(user, product) -> row of the most recent interaction; later rows win ties."""
        out: dict[tuple[int, int], int] = {}
        ts = self.timestamps
        for i, (u, p) in enumerate(zip(self.users.tolist(), self.products.tolist())):
            j = out.get((u, p))
            if j is None or ts[i] >= ts[j]:
                out[(u, p)] = i
        return out

    @cached_property
    def products_by_user(self) -> dict[int, frozenset[int]]:
        acc: dict[int, set[int]] = {}
        for u, p in zip(self.users.tolist(), self.products.tolist()):
            acc.setdefault(u, set()).add(p)
        return {u: frozenset(ps) for u, ps in acc.items()}


class KnowledgeGraph:
    """Typed entities plus typed directed triples, with degree and adjacency indices.

    Entity ids live in ``entity_vocab``; ``present`` marks which of them belong to
    this graph (filtering keeps the id space and only narrows the present set).
    Instances are treated as immutable once built.
    """

    def __init__(self, entity_vocab: Vocab, relation_vocab: Vocab, entity_types: Sequence[str],
                 heads, relations, tails, present=None, duplicates: int = 0):
        self.entity_vocab = entity_vocab
        self.relation_vocab = relation_vocab
        self.n_entities = len(entity_types)
        self.entity_types = tuple(entity_types)
        self.heads = np.asarray(heads, dtype=np.int64)
        self.relations = np.asarray(relations, dtype=np.int64)
        self.tails = np.asarray(tails, dtype=np.int64)
        self.duplicates = duplicates
        n = self.n_entities
        if len(self.heads) and max(self.heads.max(), self.tails.max()) >= n:
            raise ValueError("triple references an entity outside the vocabulary snapshot")
        self.degree = (np.bincount(self.heads, minlength=n)
                       + np.bincount(self.tails, minlength=n)).astype(np.int64)
        if present is None:
            present = self.degree > 0
        self.present = np.asarray(present, dtype=bool).copy()
        self.present[self.degree > 0] = True
        for arr in (self.heads, self.relations, self.tails, self.degree, self.present):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.heads)

    def __repr__(self) -> str:
        return (f"KnowledgeGraph(entities={self.num_entities}, relation_types="
                f"{len(self.relation_types)}, triples={len(self)})")

    @property
    def entities(self) -> np.ndarray:
        return np.flatnonzero(self.present)

    @property
    def num_entities(self) -> int:
        return int(self.present.sum())

    @cached_property
    def relation_types(self) -> frozenset[int]:
        return frozenset(np.unique(self.relations).tolist())

    @property
    def triples(self) -> Iterator[tuple[int, int, int]]:
        return zip(self.heads.tolist(), self.relations.tolist(), self.tails.tolist())

    def type_of(self, entity: int) -> str:
        return self.entity_types[entity]

    @cached_property
    def _out_edges(self) -> dict[int, tuple[tuple[int, int], ...]]:
        acc: dict[int, list[tuple[int, int]]] = {}
        for h, r, t in self.triples:
            acc.setdefault(h, []).append((r, t))
        return {e: tuple(sorted(v)) for e, v in acc.items()}

    @cached_property
    def _in_edges(self) -> dict[int, tuple[tuple[int, int], ...]]:
        acc: dict[int, list[tuple[int, int]]] = {}
        for h, r, t in self.triples:
            acc.setdefault(t, []).append((r, h))
        return {e: tuple(sorted(v)) for e, v in acc.items()}

    @cached_property
    def _triple_set(self) -> frozenset[tuple[int, int, int]]:
        return frozenset(self.triples)

    def out_edges(self, entity: int) -> tuple[tuple[int, int], ...]:
        """(relation, tail) pairs of triples headed by ``entity``."""
        return self._out_edges.get(entity, ())

    def in_edges(self, entity: int) -> tuple[tuple[int, int], ...]:
        """(relation, head) pairs of triples ending at ``entity``."""
        return self._in_edges.get(entity, ())

    def neighbors(self, entity: int, relation: int, inverse: bool = False) -> list[int]:
        edges = self.in_edges(entity) if inverse else self.out_edges(entity)
        return [other for r, other in edges if r == relation]

    def has_triple(self, head: int, relation: int, tail: int) -> bool:
        return (head, relation, tail) in self._triple_set

    def has_step(self, src: int, relation_label: str, dst: int, inverse: bool) -> bool:
        rel = self.relation_vocab.get(relation_label)
        if rel is None:
            return False
        return self.has_triple(dst, rel, src) if inverse else self.has_triple(src, rel, dst)

    def with_triples(self, mask: np.ndarray) -> "KnowledgeGraph":
        """New graph over the same vocabularies keeping only masked triples."""
        return KnowledgeGraph(self.entity_vocab, self.relation_vocab, self.entity_types,
                              self.heads[mask], self.relations[mask], self.tails[mask])


def degree(kg: KnowledgeGraph, entity: int) -> int:
    if not (0 <= entity < kg.n_entities) or not kg.present[entity]:
        raise KeyError(f"entity {entity} is not in the graph")
    return int(kg.degree[entity])


class Hop(NamedTuple):
    relation: str
    inverse: bool = False

    def token(self) -> str:
        return f"{self.relation}~inv" if self.inverse else self.relation


@dataclass(frozen=True)
class ReasoningPath:
    """Walk user -> linking product -> ... -> recommended product.

    ``entities[i]`` is reached through ``hops[i]``; the first hop is the user's
    interaction with ``entities[0]``.
    """

    user: int
    entities: tuple[int, ...]
    hops: tuple[Hop, ...]

    def __post_init__(self):
        if len(self.entities) != len(self.hops):
            raise PathError("path must alternate entities and relations")
        if len(self.hops) < 2:
            raise PathError("path needs at least two hops")

    @property
    def product(self) -> int:
        return self.entities[-1]

    @property
    def linking_product(self) -> int:
        return self.entities[0]

    def __len__(self) -> int:
        return len(self.hops)


PathType = tuple[Hop, ...]


def path_type_of(path: ReasoningPath) -> PathType:
    return tuple(path.hops)


def path_pattern_of(path: ReasoningPath, kg: KnowledgeGraph) -> tuple:
    """Relation/direction sequence interleaved with intermediate entity types."""
    out: list = [path.hops[0]]
    for entity, hop in zip(path.entities[:-1], path.hops[1:]):
        out.append(kg.type_of(entity) if entity < kg.n_entities else UNKNOWN_TYPE)
        out.append(hop)
    return tuple(out)


def shared_entity_of(path: ReasoningPath) -> int:
    # 2-hop paths: the linking product doubles as the shared entity.
    return path.entities[-2]


def linking_interaction_of(path: ReasoningPath, train: InteractionLog) -> Interaction:
    row = train.latest_row.get((path.user, path.linking_product))
    if row is None:
        raise PathError(f"user {path.user} never interacted with product {path.linking_product} in training")
    return train[row]


def parse_path_tokens(tokens: Sequence[str], user_vocab: Vocab, entity_vocab: Vocab) -> ReasoningPath:
    """Build a path from ``U<id> rel E<id> rel~inv P<id>`` style tokens (labels, not ids)."""
    if len(tokens) < 5 or len(tokens) % 2 == 0:
        raise PathError(f"path needs an odd token count >= 5, got {len(tokens)}")
    head = tokens[0]
    if not head.startswith("U"):
        raise PathError(f"path must start at a user token, got {head!r}")
    user = user_vocab.get(head[1:])
    if user is None:
        raise PathError(f"unknown user {head[1:]!r}")
    entities, hops = [], []
    for rel_tok, ent_tok in zip(tokens[1::2], tokens[2::2]):
        if ent_tok[:1] not in ("E", "P"):
            raise PathError(f"bad entity token {ent_tok!r}")
        entity = entity_vocab.get(ent_tok[1:])
        if entity is None:
            raise PathError(f"unknown entity {ent_tok[1:]!r}")
        inverse = rel_tok.endswith("~inv")
        hops.append(Hop(rel_tok[:-4] if inverse else rel_tok, inverse))
        entities.append(entity)
    if not tokens[-1].startswith("P"):
        raise PathError("path must end at a product token")
    return ReasoningPath(user, tuple(entities), tuple(hops))


def format_path(path: ReasoningPath, user_vocab: Vocab, entity_vocab: Vocab,
                products: frozenset[int] | set[int] = frozenset()) -> str:
    tokens = [f"U{user_vocab.label(path.user)}"]
    last = len(path.entities) - 1
    for i, (entity, hop) in enumerate(zip(path.entities, path.hops)):
        prefix = "P" if i in (0, last) or entity in products else "E"
        tokens.append(hop.token())
        tokens.append(f"{prefix}{entity_vocab.label(entity)}")
    return " ".join(tokens)


def validate_path(path: ReasoningPath, kg: KnowledgeGraph, train: InteractionLog,
                  user: int | None = None, product: int | None = None) -> None:
    """Raise PathError unless every step is backed by the training log or the graph."""
    if user is not None and path.user != user:
        raise PathError("path starts at a different user")
    if product is not None and path.product != product:
        raise PathError("path ends at a different product")
    if (path.user, path.linking_product) not in train.latest_row:
        raise PathError("first hop is not a training interaction")
    for src, dst, hop in zip(path.entities[:-1], path.entities[1:], path.hops[1:]):
        if not (0 <= src < kg.n_entities and 0 <= dst < kg.n_entities):
            raise PathError("path visits an entity outside the graph")
        if not kg.has_step(src, hop.relation, dst, hop.inverse):
            raise PathError(f"missing KG step {src} -{hop.token()}-> {dst}")


def is_valid_path(path: ReasoningPath, kg: KnowledgeGraph, train: InteractionLog,
                  user: int | None = None, product: int | None = None) -> bool:
    try:
        validate_path(path, kg, train, user, product)
    except PathError:
        return False
    return True

"""Parsing of raw data files and the preprocessing pipeline that yields a DatasetBundle."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, TextIO

import numpy as np

from .kg import UNKNOWN_TYPE, InteractionLog, KnowledgeGraph, Vocab

log = logging.getLogger(__name__)

GENDER_GROUPS = ("Male", "Female")
AGE_GROUPS = ("Under 18", "18-24", "25-34", "35-44", "45-49", "50-55", "56+")

# MovieLens encodes age buckets by their lower bound.
_AGE_CODES = {"1": "Under 18", "18": "18-24", "25": "25-34", "35": "35-44",
              "45": "45-49", "50": "50-55", "56": "56+"}
# Which triples the relation-share threshold is measured against.
SHARE_BASES = ("after-head", "before-head")

_GENDER_CODES = {"m": "Male", "male": "Male", "f": "Female", "female": "Female"}


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")
        self.line = line
        self.source = source


class ConfigError(ValueError):
    pass


class Demographics(NamedTuple):
    gender: str
    age: str


@dataclass(frozen=True)
class PreprocessConfig:
    min_user_interactions: int = 20
    min_product_interactions: int = 10
    min_relation_share: float = 0.03
    category_relation: str | None = None
    provider_relation: str | None = None
    require_attributes: bool = True
    sample_users: int | None = None
    seed: int = 0
    share_basis: str = "after-head"

    def __post_init__(self):
        if not 0 <= self.min_relation_share < 1:
            raise ConfigError("min_relation_share must lie in [0, 1)")
        if self.min_user_interactions < 0 or self.min_product_interactions < 0:
            raise ConfigError("interaction thresholds must be non-negative")
        if self.share_basis not in SHARE_BASES:
            raise ConfigError(f"share_basis must be one of {SHARE_BASES}")
        if self.sample_users is not None and self.sample_users < 1:
            raise ConfigError("sample_users must be positive")


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    kg: KnowledgeGraph
    interactions: InteractionLog
    catalog: np.ndarray
    user_attributes: Mapping[int, Demographics] = field(default_factory=dict)
    provider_of: Mapping[int, str] = field(default_factory=dict)
    provider_attributes: Mapping[str, Demographics] = field(default_factory=dict)
    category_of: Mapping[int, frozenset[int]] = field(default_factory=dict)
    config: PreprocessConfig = field(default_factory=PreprocessConfig)

    @property
    def user_vocab(self) -> Vocab:
        return self.interactions.user_vocab

    @property
    def entity_vocab(self) -> Vocab:
        return self.kg.entity_vocab


@dataclass(frozen=True)
class DatasetStats:
    users: int
    products: int
    interactions: int
    density: float
    entities: int
    entity_types: int
    relations: int
    relation_types: int
    kg_sparsity: float
    avg_degree_overall: float
    avg_degree_products: float
    gender_groups: int
    age_groups: int

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# parsing

def _lines(source: TextIO | Iterable[str] | str | os.PathLike):
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            yield from enumerate(fh, 1)
    else:
        yield from enumerate(source, 1)


def iter_rows(source, arity: int, delimiter: str, name: str):
    for lineno, line in _lines(source):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        fields = line.split(delimiter)
        if len(fields) != arity:
            raise ParseError(f"expected {arity} fields, got {len(fields)}", lineno, name)
        yield lineno, [f.strip() for f in fields]


def parse_interactions(source, *, delimiter: str = "\t", user_vocab: Vocab | None = None,
                       entity_vocab: Vocab | None = None, name: str = "interactions") -> InteractionLog:
    """Parse ``user, product, rating, timestamp`` rows, preserving input order."""
    users = user_vocab if user_vocab is not None else Vocab()
    entities = entity_vocab if entity_vocab is not None else Vocab()
    records = []
    for lineno, (u, p, r, t) in iter_rows(source, 4, delimiter, name):
        try:
            rating = float(r)
            ts = int(t)
        except ValueError:
            raise ParseError(f"non-numeric rating/timestamp {r!r}/{t!r}", lineno, name) from None
        if ts < 0:
            raise ParseError("negative timestamp", lineno, name)
        records.append((users.add(u), entities.add(p), rating, ts))
    return InteractionLog.from_records(records, users, entities)


def parse_kg(triples, entity_types=None, *, delimiter: str = "\t",
             entity_vocab: Vocab | None = None) -> KnowledgeGraph:
    """Parse triples plus optional entity-type rows into a graph.

    Entities listed in the type file get ids first, in file order. Entities seen only
    in triples are typed ``unknown``. Duplicate triples are dropped and counted.
    """
    entities = entity_vocab if entity_vocab is not None else Vocab()
    types: dict[int, str] = {}
    if entity_types is not None:
        for lineno, (e, typ) in iter_rows(entity_types, 2, delimiter, "entity_types"):
            eid = entities.add(e)
            if eid in types and types[eid] != typ:
                raise ParseError(f"entity {e!r} typed twice", lineno, "entity_types")
            types[eid] = typ
    typed = set(types)
    relations = Vocab()
    seen: set[tuple[int, int, int]] = set()
    heads, rels, tails = [], [], []
    duplicates = 0
    for _, (h, r, t) in iter_rows(triples, 3, delimiter, "kg_triples"):
        key = (entities.add(h), relations.add(r), entities.add(t))
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        heads.append(key[0])
        rels.append(key[1])
        tails.append(key[2])
    if duplicates:
        log.warning("dropped %d duplicate triples", duplicates)
    type_list = [types.get(i, UNKNOWN_TYPE) for i in range(len(entities))]
    present = np.zeros(len(entities), dtype=bool)
    present[list(typed)] = True
    return KnowledgeGraph(entities, relations, type_list, heads, rels, tails,
                          present=present, duplicates=duplicates)


def _norm_gender(value: str) -> str | None:
    if not value:
        return None
    g = _GENDER_CODES.get(value.lower())
    if g is None:
        raise ValueError(f"unknown gender label {value!r}")
    return g


def _norm_age(value: str) -> str | None:
    if not value:
        return None
    if value in AGE_GROUPS:
        return value
    a = _AGE_CODES.get(value)
    if a is None:
        raise ValueError(f"unknown age bucket {value!r}")
    return a


def parse_attributes(source, *, delimiter: str = "\t", name: str = "attributes") -> dict[str, Demographics]:
    """``subject, gender, age`` rows; subjects with a missing field are left out."""
    out: dict[str, Demographics] = {}
    for lineno, (subject, gender, age) in iter_rows(source, 3, delimiter, name):
        try:
            g, a = _norm_gender(gender), _norm_age(age)
        except ValueError as exc:
            raise ParseError(str(exc), lineno, name) from None
        if g is not None and a is not None:
            out[subject] = Demographics(g, a)
    return out


def parse_pairs(source, *, delimiter: str = "\t", name: str = "pairs") -> dict[str, str]:
    return {k: v for _, (k, v) in iter_rows(source, 2, delimiter, name)}


# ---------------------------------------------------------------------------
# preprocessing steps

def filter_kg(kg: KnowledgeGraph, catalog, cfg: PreprocessConfig) -> KnowledgeGraph:
    """Keep product-headed triples with an external tail, then prune rare relation types."""
    is_product = np.zeros(kg.n_entities, dtype=bool)
    cat = np.asarray(list(catalog) if not isinstance(catalog, np.ndarray) else catalog, dtype=np.int64)
    is_product[cat[cat < kg.n_entities]] = True
    keep = is_product[kg.heads] & ~is_product[kg.tails]
    basis = keep if cfg.share_basis == "after-head" else np.ones(len(keep), dtype=bool)
    total = int(basis.sum())
    if total:
        counts = np.bincount(kg.relations[basis], minlength=len(kg.relation_vocab))
        rare = counts < cfg.min_relation_share * total
        keep &= ~rare[kg.relations]
    return kg.with_triples(keep)


def kcore_filter(interactions: InteractionLog, cfg: PreprocessConfig) -> InteractionLog:
    """Drop users/products under the thresholds until both hold for every survivor."""
    mask = np.ones(len(interactions), dtype=bool)
    users, products = interactions.users, interactions.products
    while True:
        u_counts = np.bincount(users[mask], minlength=int(users.max(initial=-1)) + 1)
        p_counts = np.bincount(products[mask], minlength=int(products.max(initial=-1)) + 1)
        new_mask = (mask & (u_counts[users] >= cfg.min_user_interactions)
                    & (p_counts[products] >= cfg.min_product_interactions))
        if np.array_equal(new_mask, mask):
            break
        mask = new_mask
    return interactions.take(mask)


def align_catalog(interactions: InteractionLog, kg: KnowledgeGraph) -> tuple[InteractionLog, np.ndarray]:
    """Drop interactions on products that have no triple in ``kg``."""
    products = interactions.products
    covered = np.zeros(len(products), dtype=bool)
    inside = products < kg.n_entities
    covered[inside] = kg.degree[products[inside]] > 0
    kept = interactions.take(covered)
    return kept, np.unique(kept.products)


def compute_stats(bundle: DatasetBundle) -> DatasetStats:
    kg, inter = bundle.kg, bundle.interactions
    n_users = len(inter.distinct_users)
    n_products = len(bundle.catalog)
    n_inter = len(inter)
    entities = kg.entities
    n_entities = len(entities)
    n_external = n_entities - int(np.isin(bundle.catalog, entities).sum())
    sparsity_den = n_products * n_external
    genders = {d.gender for d in bundle.user_attributes.values()}
    ages = {d.age for d in bundle.user_attributes.values()}
    return DatasetStats(
        users=n_users,
        products=n_products,
        interactions=n_inter,
        density=n_inter / (n_users * n_products) if n_users and n_products else 0.0,
        entities=n_entities,
        entity_types=len({kg.type_of(e) for e in entities.tolist()}),
        relations=len(kg),
        relation_types=len(kg.relation_types),
        kg_sparsity=len(kg) / sparsity_den if sparsity_den else 0.0,
        avg_degree_overall=float(kg.degree[entities].mean()) if n_entities else 0.0,
        avg_degree_products=float(kg.degree[bundle.catalog].mean()) if n_products else 0.0,
        gender_groups=len(genders),
        age_groups=len(ages),
    )


# ---------------------------------------------------------------------------
# pipeline

@dataclass(eq=False)
class RawDataset:
    interactions: InteractionLog
    kg: KnowledgeGraph
    user_attributes: dict[str, Demographics] | None = None
    product_providers: dict[str, str] | None = None
    provider_attributes: dict[str, Demographics] | None = None


def load_raw(interactions, kg_triples, entity_types=None, user_attributes=None,
             product_providers=None, provider_attributes=None, *, delimiter: str = "\t") -> RawDataset:
    """Parse every raw input; entity ids are shared between the graph and the log."""
    kg = parse_kg(kg_triples, entity_types, delimiter=delimiter)
    entity_vocab = kg.entity_vocab
    log_ = parse_interactions(interactions, delimiter=delimiter, entity_vocab=entity_vocab)
    return RawDataset(
        interactions=log_,
        kg=kg,
        user_attributes=(parse_attributes(user_attributes, delimiter=delimiter, name="user_attributes")
                         if user_attributes is not None else None),
        product_providers=(parse_pairs(product_providers, delimiter=delimiter, name="product_providers")
                           if product_providers is not None else None),
        provider_attributes=(parse_attributes(provider_attributes, delimiter=delimiter,
                                              name="provider_attributes")
                             if provider_attributes is not None else None),
    )


def _sample_users(interactions: InteractionLog, n: int, seed: int) -> InteractionLog:
    users = interactions.distinct_users
    if n >= len(users):
        return interactions
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(users, size=n, replace=False))
    return interactions.take(np.isin(interactions.users, chosen))


def _compact(interactions: InteractionLog, kg: KnowledgeGraph) -> tuple[InteractionLog, KnowledgeGraph]:
    """Re-index users and entities densely over what survived preprocessing."""
    old_entities = kg.entities
    entity_vocab = Vocab(kg.entity_vocab.label(e) for e in old_entities.tolist())
    emap = np.full(kg.n_entities, -1, dtype=np.int64)
    emap[old_entities] = np.arange(len(old_entities))
    new_kg = KnowledgeGraph(entity_vocab, Vocab(kg.relation_vocab.labels),
                            [kg.type_of(e) for e in old_entities.tolist()],
                            emap[kg.heads], kg.relations, emap[kg.tails],
                            present=np.ones(len(old_entities), dtype=bool))
    user_vocab = Vocab()
    old_users = interactions.user_vocab
    new_users = np.array([user_vocab.add(old_users.label(u)) for u in interactions.users.tolist()],
                         dtype=np.int64)
    new_log = InteractionLog(new_users, emap[interactions.products], interactions.ratings,
                             interactions.timestamps, user_vocab, entity_vocab)
    return new_log, new_kg


def _relation_targets(kg: KnowledgeGraph, relation: str | None) -> dict[int, list[int]]:
    if relation is None or relation not in kg.relation_vocab:
        return {}
    rel = kg.relation_vocab[relation]
    out: dict[int, list[int]] = {}
    for h, r, t in kg.triples:
        if r == rel:
            out.setdefault(h, []).append(t)
    return out


def assemble_bundle(interactions: InteractionLog, kg: KnowledgeGraph, cfg: PreprocessConfig,
                    user_attributes: Mapping[str, Demographics] | None,
                    product_providers: Mapping[str, str] | None,
                    provider_attributes: Mapping[str, Demographics] | None) -> DatasetBundle:
    """Attach label-keyed side information to an already-filtered log and graph."""
    users, entities = interactions.user_vocab, kg.entity_vocab
    catalog = np.unique(interactions.products)
    user_attrs = {}
    if user_attributes:
        for u in np.unique(interactions.users).tolist():
            d = user_attributes.get(users.label(u))
            if d is not None:
                user_attrs[u] = d
    categories = {p: frozenset(ts) for p, ts in _relation_targets(kg, cfg.category_relation).items()}
    provider_of: dict[int, str] = {}
    if product_providers:
        for p in catalog.tolist():
            prov = product_providers.get(entities.label(p))
            if prov is not None:
                provider_of[p] = prov
    else:
        for p, ts in _relation_targets(kg, cfg.provider_relation).items():
            provider_of[p] = entities.label(min(ts))
    provider_attrs = dict(sorted((provider_attributes or {}).items()))
    return DatasetBundle(kg=kg, interactions=interactions, catalog=catalog,
                         user_attributes=user_attrs, provider_of=provider_of,
                         provider_attributes=provider_attrs,
                         category_of={p: categories.get(p, frozenset()) for p in catalog.tolist()},
                         config=cfg)


def preprocess(raw: RawDataset, cfg: PreprocessConfig) -> DatasetBundle:
    """Run the full cleaning pipeline on parsed raw inputs."""
    inter = raw.interactions
    if cfg.require_attributes:
        if raw.user_attributes is None:
            raise ConfigError("user attributes are required but were not provided")
        known = np.array([inter.user_vocab.label(u) in raw.user_attributes
                          for u in range(len(inter.user_vocab))], dtype=bool)
        inter = inter.take(known[inter.users]) if len(inter) else inter
        log.info("kept %d interactions from users with sensitive attributes", len(inter))
    in_kg = (inter.products < raw.kg.n_entities)
    in_kg[in_kg] = raw.kg.present[inter.products[in_kg]]
    inter = inter.take(in_kg)
    if cfg.sample_users is not None:
        inter = _sample_users(inter, cfg.sample_users, cfg.seed)

    kg = raw.kg
    while True:
        before = len(inter)
        inter = kcore_filter(inter, cfg)
        kg = filter_kg(raw.kg, np.unique(inter.products), cfg)
        inter, _ = align_catalog(inter, kg)
        if len(inter) == before:
            break
    inter, kg = _compact(inter, kg)
    return assemble_bundle(inter, kg, cfg, raw.user_attributes, raw.product_providers,
                           raw.provider_attributes)


# ---------------------------------------------------------------------------
# canonical on-disk bundle

BUNDLE_FILES = ("entity_types.tsv", "kg_triples.tsv", "interactions.tsv", "user_attributes.tsv",
                "product_providers.tsv", "provider_attributes.tsv", "meta.json")


def format_rating(r: float) -> str:
    return str(int(r)) if float(r).is_integer() else repr(float(r))


def write_bundle(bundle: DatasetBundle, directory: str | os.PathLike) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    kg, inter = bundle.kg, bundle.interactions
    ev, uv, rv = kg.entity_vocab, inter.user_vocab, kg.relation_vocab

    def dump(name: str, rows: Iterable[Iterable[str]]):
        with open(out / name, "w", encoding="utf-8", newline="\n") as fh:
            for row in rows:
                fh.write("\t".join(row) + "\n")

    dump("entity_types.tsv", ((ev.label(e), kg.type_of(e)) for e in kg.entities.tolist()))
    dump("kg_triples.tsv", ((ev.label(h), rv.label(r), ev.label(t)) for h, r, t in kg.triples))
    dump("interactions.tsv", ((uv.label(u), ev.label(p), format_rating(r), str(t)) for u, p, r, t in inter))
    dump("user_attributes.tsv", ((uv.label(u), d.gender, d.age)
                                 for u, d in sorted(bundle.user_attributes.items())))
    dump("product_providers.tsv", ((ev.label(p), prov) for p, prov in sorted(bundle.provider_of.items())))
    dump("provider_attributes.tsv", ((prov, d.gender, d.age)
                                     for prov, d in sorted(bundle.provider_attributes.items())))
    meta = {"preprocess": asdict(bundle.config)}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def read_bundle(directory: str | os.PathLike) -> DatasetBundle:
    """Load a bundle written by :func:`write_bundle` without re-filtering."""
    d = Path(directory)
    missing = [n for n in BUNDLE_FILES if not (d / n).exists()]
    if missing:
        raise FileNotFoundError(f"bundle at {d} lacks {', '.join(missing)}")
    meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
    cfg = PreprocessConfig(**meta["preprocess"])
    kg = parse_kg(d / "kg_triples.tsv", d / "entity_types.tsv")
    inter = parse_interactions(d / "interactions.tsv", entity_vocab=kg.entity_vocab)
    if len(kg.entity_vocab) != kg.n_entities:
        raise ParseError("interactions reference products missing from the graph", source=str(d))
    return assemble_bundle(inter, kg, cfg,
                           parse_attributes(d / "user_attributes.tsv", name="user_attributes"),
                           parse_pairs(d / "product_providers.tsv", name="product_providers"),
                           parse_attributes(d / "provider_attributes.tsv", name="provider_attributes"))

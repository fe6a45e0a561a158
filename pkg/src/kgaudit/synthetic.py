"""Seeded generator of small raw datasets in the input file formats."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import AGE_GROUPS, GENDER_GROUPS

# relation -> (tail type, tails per product)
RELATIONS = {
    "directed_by": ("director", 1),
    "starring": ("actor", 3),
    "belongs_to": ("genre", 2),
    "produced_by": ("company", 1),
}
RARE_RELATION = "trivia_of"


@dataclass(frozen=True)
class SyntheticSpec:
    n_users: int = 40
    n_products: int = 30
    min_history: int = 8
    max_history: int = 16
    n_per_type: int = 6
    n_providers: int = 5
    unattributed_users: int = 2
    seed: int = 0


def write_synthetic(directory: str | os.PathLike, spec: SyntheticSpec | None = None) -> dict[str, Path]:
    """Write raw interaction, graph and attribute files; returns paths keyed like ``load_raw``."""
    spec = spec or SyntheticSpec()
    rng = np.random.default_rng(spec.seed)
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)

    products = [f"m{i}" for i in range(spec.n_products)]
    externals = {typ: [f"{typ}{j}" for j in range(spec.n_per_type)] for typ, _ in RELATIONS.values()}

    types = [(p, "product") for p in products]
    types += [(e, typ) for typ, names in externals.items() for e in names]
    triples = []
    for p in products:
        for rel, (typ, n) in RELATIONS.items():
            for tail in rng.choice(externals[typ], size=n, replace=False).tolist():
                triples.append((p, rel, tail))
    # one rare relation type, an external-headed triple and a duplicate row
    triples.append((products[0], RARE_RELATION, externals["genre"][0]))
    triples.append((externals["actor"][0], "worked_with", externals["director"][0]))
    triples.append(triples[0])

    # Zipf-like popularity so that the most-popular ranking is informative
    weights = 1.0 / np.arange(1, spec.n_products + 1) ** 0.8
    weights /= weights.sum()
    interactions = []
    for u in range(spec.n_users):
        n = int(rng.integers(spec.min_history, spec.max_history + 1))
        items = rng.choice(spec.n_products, size=n, replace=False, p=weights)
        stamps = np.sort(rng.choice(10_000, size=n, replace=False)) + 1_000_000 + 50 * u
        ratings = rng.integers(1, 6, size=n)
        for item, ts, r in zip(items.tolist(), stamps.tolist(), ratings.tolist()):
            interactions.append((f"u{u}", products[item], str(r), str(ts)))
    interactions.sort(key=lambda row: (int(row[3]), row[0]))

    users = [f"u{u}" for u in range(spec.n_users)]
    attributed = users[spec.unattributed_users:]
    user_attrs = [(u, GENDER_GROUPS[int(rng.integers(2))], AGE_GROUPS[int(rng.integers(len(AGE_GROUPS)))])
                  for u in attributed]
    user_attrs += [(u, "", "") for u in users[:spec.unattributed_users]]
    providers = [f"prov{j}" for j in range(spec.n_providers)]
    product_providers = [(p, providers[int(rng.integers(spec.n_providers))]) for p in products]
    provider_attrs = [(prov, GENDER_GROUPS[j % 2], AGE_GROUPS[(2 + j) % len(AGE_GROUPS)])
                      for j, prov in enumerate(providers)]

    files = {
        "interactions": ("interactions.tsv", interactions),
        "kg_triples": ("kg_triples.tsv", triples),
        "entity_types": ("entity_types.tsv", types),
        "user_attributes": ("user_attributes.tsv", user_attrs),
        "product_providers": ("product_providers.tsv", product_providers),
        "provider_attributes": ("provider_attributes.tsv", provider_attrs),
    }
    paths = {}
    for key, (name, rows) in files.items():
        path = out / name
        path.write_text("".join("\t".join(row) + "\n" for row in rows), encoding="utf-8")
        paths[key] = path
    return paths

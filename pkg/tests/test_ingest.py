import numpy as np
import pytest

from kgaudit.ingest import (ConfigError, Demographics, ParseError, PreprocessConfig, align_catalog, compute_stats,
                            filter_kg, kcore_filter, load_raw, parse_attributes, parse_interactions, parse_kg,
                            preprocess, read_bundle, write_bundle)
from kgaudit.kg import InteractionLog, KnowledgeGraph, Vocab


def lines(*rows):
    return ["\t".join(map(str, r)) + "\n" for r in rows]


# ---------------------------------------------------------------------------
# parsing

def test_interaction_row_parses_into_typed_fields():
    log = parse_interactions(["1\t10\t5\t964982703\n"])
    (it,) = list(log)
    assert log.user_vocab.label(it.user) == "1"
    assert log.entity_vocab.label(it.product) == "10"
    assert (it.rating, it.timestamp) == (5.0, 964982703)


def test_interactions_keep_input_order():
    log = parse_interactions(lines((1, "b", 1, 30), (2, "a", 2, 10), (1, "a", 3, 20)))
    assert len(log) == 3
    assert log.timestamps.tolist() == [30, 10, 20]


def test_interaction_arity_error_names_the_line():
    with pytest.raises(ParseError, match="interactions:2:"):
        parse_interactions(lines((1, 2, 3, 4), (1, 2, 3)))


def test_non_numeric_timestamp_is_a_parse_error():
    with pytest.raises(ParseError, match="interactions:1:"):
        parse_interactions(lines((1, 2, 3, "yesterday")))


def test_empty_stream_is_an_empty_log():
    assert len(parse_interactions([])) == 0
    kg = parse_kg([])
    assert len(kg) == 0


def test_shared_tail_gets_degree_two():
    kg = parse_kg(lines(("m1", "genre", "g"), ("m2", "genre", "g")))
    assert kg.degree[kg.entity_vocab["g"]] == 2


def test_duplicate_triples_are_dropped_and_counted():
    kg = parse_kg(lines(("m1", "genre", "g"), ("m1", "genre", "g")))
    assert len(kg) == 1 and kg.duplicates == 1


def test_entities_missing_from_the_type_file_are_unknown():
    kg = parse_kg(lines(("m1", "genre", "g")), lines(("m1", "product")))
    assert kg.type_of(kg.entity_vocab["m1"]) == "product"
    assert kg.type_of(kg.entity_vocab["g"]) == "unknown"


def test_attribute_codes_are_normalised_and_blank_subjects_skipped():
    attrs = parse_attributes(lines(("a", "M", "25"), ("b", "female", "56+"), ("c", "", "18")))
    assert attrs == {"a": Demographics("Male", "25-34"), "b": Demographics("Female", "56+")}
    with pytest.raises(ParseError):
        parse_attributes(lines(("a", "X", "25")))


# ---------------------------------------------------------------------------
# knowledge-graph filtering

def share_graph(n_major, n_minor, extra=()):
    """Products p0..p9, externals e0..e4; relation A has ``n_major`` triples, B ``n_minor``."""
    rows = [(f"p{i % 10}", "A", f"e{i % 5}_{i}") for i in range(n_major)]
    rows += [(f"p{i % 10}", "B", f"e{i}") for i in range(n_minor)]
    rows += list(extra)
    kg = parse_kg(lines(*rows))
    catalog = [kg.entity_vocab[f"p{i}"] for i in range(10)]
    return kg, catalog


def relation_counts(kg):
    return {kg.relation_vocab.label(r): int(c) for r, c in zip(*np.unique(kg.relations, return_counts=True))}


def test_rare_relation_type_is_removed_under_three_percent():
    kg, catalog = share_graph(98, 2)
    out = filter_kg(kg, catalog, PreprocessConfig())
    assert relation_counts(out) == {"A": 98}


@pytest.mark.parametrize("minor,kept", [(2, False), (3, True), (4, True)])
def test_share_threshold_uses_strict_less_than(minor, kept):
    kg, catalog = share_graph(100 - minor, minor)
    out = filter_kg(kg, catalog, PreprocessConfig())
    assert ("B" in relation_counts(out)) is kept


def test_head_rule_drops_external_headed_and_product_tailed_triples():
    kg, catalog = share_graph(10, 0, extra=[("e0", "A", "p1"), ("p1", "A", "p2")])
    out = filter_kg(kg, catalog, PreprocessConfig(min_relation_share=0.0))
    assert len(out) == 10
    ev = kg.entity_vocab
    assert not out.has_triple(ev["e0"], kg.relation_vocab["A"], ev["p1"])
    assert not out.has_triple(ev["p1"], kg.relation_vocab["A"], ev["p2"])


def test_share_basis_changes_the_denominator():
    # 3 B triples among 97 valid ones pass after the head rule; counted against all 110 triples they fail.
    noise = [(f"x{i}", "C", f"y{i}") for i in range(10)]
    kg, catalog = share_graph(97, 3, extra=noise)
    after = filter_kg(kg, catalog, PreprocessConfig())
    before = filter_kg(kg, catalog, PreprocessConfig(share_basis="before-head"))
    assert "B" in relation_counts(after)
    assert "B" not in relation_counts(before)


# ---------------------------------------------------------------------------
# k-core and catalog alignment

def log_from(pairs):
    return InteractionLog.from_records([(u, p, 1.0, i) for i, (u, p) in enumerate(pairs)])


def brute_kcore(pairs, min_u, min_p):
    """Fixed point by repeated recounting over explicit (user, product) lists."""
    alive = list(pairs)
    while True:
        u_cnt = {u: sum(1 for x, _ in alive if x == u) for u, _ in alive}
        p_cnt = {p: sum(1 for _, y in alive if y == p) for _, p in alive}
        nxt = [(u, p) for u, p in alive if u_cnt[u] >= min_u and p_cnt[p] >= min_p]
        if nxt == alive:
            return alive
        alive = nxt


def test_user_below_threshold_is_removed():
    pairs = [(0, p) for p in range(19)] + [(1, p) for p in range(20)]
    out = kcore_filter(log_from(pairs), PreprocessConfig(min_user_interactions=20, min_product_interactions=0))
    assert set(out.users.tolist()) == {1}


def test_zero_thresholds_are_identity():
    pairs = [(0, 1), (1, 2), (2, 2)]
    log = log_from(pairs)
    assert kcore_filter(log, PreprocessConfig(min_user_interactions=0, min_product_interactions=0)).equals(log)


def test_kcore_cascades_to_a_fixed_point():
    # product 9 is held up only by user 4, who itself falls below the user threshold
    pairs = [(u, p) for u in range(4) for p in range(3)] + [(u, 9) for u in range(4)] + [(4, 9), (4, 1)]
    cfg = PreprocessConfig(min_user_interactions=3, min_product_interactions=5)
    out = kcore_filter(log_from(pairs), cfg)
    got = sorted(zip(out.users.tolist(), out.products.tolist()))
    assert got == sorted(brute_kcore(pairs, 3, 5))
    assert 9 not in out.products.tolist()


def test_kcore_matches_brute_force_on_random_logs():
    rng = np.random.default_rng(3)
    for _ in range(30):
        pairs = [(int(rng.integers(6)), int(rng.integers(8))) for _ in range(int(rng.integers(5, 40)))]
        mu, mp = int(rng.integers(0, 5)), int(rng.integers(0, 5))
        out = kcore_filter(log_from(pairs), PreprocessConfig(min_user_interactions=mu, min_product_interactions=mp))
        assert list(zip(out.users.tolist(), out.products.tolist())) == brute_kcore(pairs, mu, mp)


def align_fixture():
    ents = Vocab(["p0", "p1", "p2", "e"])
    kg = KnowledgeGraph(ents, Vocab(["r"]), ["product"] * 3 + ["x"], [0, 1], [0, 0], [3, 3],
                        present=np.ones(4, dtype=bool))
    return kg


def test_product_without_triples_loses_its_interactions():
    kg = align_fixture()
    log = log_from([(0, 0), (0, 2), (1, 1), (1, 2)])
    kept, catalog = align_catalog(log, kg)
    assert kept.products.tolist() == [0, 1]
    assert catalog.tolist() == [0, 1]


def test_fully_covered_log_is_unchanged():
    kg = align_fixture()
    log = log_from([(0, 0), (1, 1)])
    kept, _ = align_catalog(log, kg)
    assert kept.equals(log)


# ---------------------------------------------------------------------------
# full pipeline and statistics

RAW_INTERACTIONS = lines(
    # user, product, rating, ts ; user e has no attributes, product m4 has no triples
    ("a", "m1", 5, 1), ("a", "m2", 4, 2), ("a", "m3", 3, 3),
    ("b", "m1", 5, 4), ("b", "m2", 4, 5), ("b", "m4", 1, 6),
    ("c", "m1", 2, 7), ("c", "m3", 4, 8),
    ("d", "m2", 3, 9), ("d", "m3", 3, 10),
    ("e", "m1", 3, 11), ("e", "m2", 3, 12),
)
RAW_TRIPLES = lines(
    ("m1", "directed_by", "d1"), ("m2", "directed_by", "d1"), ("m3", "directed_by", "d2"),
    ("m1", "genre", "g1"), ("m3", "genre", "g1"), ("d1", "born_in", "c1"),
)
RAW_TYPES = lines(("m1", "product"), ("m2", "product"), ("m3", "product"), ("m4", "product"),
                  ("d1", "director"), ("d2", "director"), ("g1", "genre"), ("c1", "city"))
RAW_USERS = lines(("a", "M", "25"), ("b", "F", "25"), ("c", "F", "35"), ("d", "M", "1"), ("e", "", ""))


def five_user_bundle(**cfg):
    raw = load_raw(RAW_INTERACTIONS, RAW_TRIPLES, RAW_TYPES, RAW_USERS)
    base = dict(min_user_interactions=2, min_product_interactions=2, category_relation="genre")
    return preprocess(raw, PreprocessConfig(**(base | cfg)))


def test_five_user_fixture_statistics_counted_by_hand():
    # e dropped (no attributes); (b, m4) dropped (m4 has no triples); the city triple fails the head rule.
    # Survivors: a:3, b:2, c:2, d:2 over m1..m3 -> 9 interactions, 4 users, 3 products.
    # Graph: 5 triples over m1..m3, d1, d2, g1 (6 entities, 3 types), 2 relation types.
    stats = compute_stats(five_user_bundle())
    assert stats.users == 4
    assert stats.products == 3
    assert stats.interactions == 9
    assert stats.density == pytest.approx(9 / 12)
    assert stats.entities == 6
    assert stats.entity_types == 3
    assert stats.relations == 5
    assert stats.relation_types == 2
    assert stats.kg_sparsity == pytest.approx(5 / (3 * 3))
    assert stats.avg_degree_overall == pytest.approx(10 / 6)
    assert stats.avg_degree_products == pytest.approx(5 / 3)
    assert stats.gender_groups == 2 and stats.age_groups == 3


def test_density_of_two_by_two_with_two_interactions_is_half():
    raw = load_raw(lines(("a", "m1", 1, 1), ("b", "m2", 1, 2)),
                   lines(("m1", "r", "x"), ("m2", "r", "y")), lines(("m1", "product"), ("m2", "product")))
    bundle = preprocess(raw, PreprocessConfig(min_user_interactions=0, min_product_interactions=0,
                                              require_attributes=False, min_relation_share=0))
    assert compute_stats(bundle).density == 0.5


def test_missing_attributes_are_a_config_error_when_required():
    raw = load_raw(RAW_INTERACTIONS, RAW_TRIPLES, RAW_TYPES)
    with pytest.raises(ConfigError):
        preprocess(raw, PreprocessConfig())


def test_category_relation_feeds_product_categories():
    bundle = five_user_bundle()
    ev = bundle.entity_vocab
    assert bundle.category_of[ev["m1"]] == frozenset({ev["g1"]})
    assert bundle.category_of[ev["m2"]] == frozenset()


def test_bundle_round_trip(tmp_path):
    bundle = five_user_bundle()
    write_bundle(bundle, tmp_path)
    again = read_bundle(tmp_path)
    assert again.interactions.equals(bundle.interactions)
    assert compute_stats(again) == compute_stats(bundle)
    assert again.user_attributes == bundle.user_attributes
    assert again.category_of == bundle.category_of
    write_bundle(again, tmp_path / "second")
    for name in ("kg_triples.tsv", "interactions.tsv", "entity_types.tsv", "meta.json"):
        assert (tmp_path / name).read_bytes() == (tmp_path / "second" / name).read_bytes()


def test_sampling_users_is_seeded():
    a = five_user_bundle(sample_users=3, seed=1, min_user_interactions=0, min_product_interactions=0)
    b = five_user_bundle(sample_users=3, seed=1, min_user_interactions=0, min_product_interactions=0)
    assert a.interactions.equals(b.interactions)
    assert len(a.interactions.distinct_users) == 3


def test_invalid_config_values_are_rejected():
    for bad in (dict(min_relation_share=1.0), dict(min_user_interactions=-1), dict(sample_users=0),
                dict(share_basis="sideways")):
        with pytest.raises(ConfigError):
            PreprocessConfig(**bad)

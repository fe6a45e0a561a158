"""Per-user metric computation over method outputs and assembly of the evaluation report."""

from __future__ import annotations

import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

from . import explanation as ex
from . import metrics as mr
from .explanation import ExplanationWeights, precompute_weights
from .fairness import (DIMENSIONS, FairnessReport, GroupAssignment, StatsError, TestResult, group_delta,
                       pairwise_delta, provider_fairness, welch_ttest)
from .ingest import DatasetBundle, compute_stats
from .models import RecommendedList, recommend_mostpop, train_mostpop
from .split import SplitBundle

USER_METRICS = ("NDCG", "MRR", "SER", "DIV", "NOV", "FID", "LIR", "LID", "SEP", "SED", "PTD", "PTC", "PPC")
UTILITY_METRICS = ("NDCG", "MRR", "SER", "DIV", "NOV", "COV")
EXPLANATION_METRICS = ("FID", "LIR", "LID", "SEP", "SED", "PTD", "PTC", "PPC")


@dataclass(frozen=True)
class EvalConfig:
    cutoffs: tuple[int, ...] = (10,)
    fidelity_cutoffs: tuple[int, ...] = (10, 20, 50, 100)
    beta: float = 0.3
    path_policy: str = "first"
    workers: int = 1

    def __post_init__(self):
        for name in ("cutoffs", "fidelity_cutoffs"):
            ks = getattr(self, name)
            if not ks or any(k < 1 for k in ks) or list(ks) != sorted(set(ks)):
                raise ValueError(f"{name} must be strictly increasing positive integers, got {ks}")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True, eq=False)
class _Context:
    bundle: DatasetBundle
    split: SplitBundle
    relevant: Mapping[int, frozenset[int]]
    baseline: Mapping[int, RecommendedList]
    popularity: Mapping[int, int]
    weights: ExplanationWeights
    cfg: EvalConfig


_CTX: _Context | None = None


def _user_row(ctx: _Context, lst: RecommendedList, k: int, n_types: int, n_patterns: int) -> dict[str, float]:
    rel = ctx.relevant[lst.user]
    kg = ctx.bundle.kg
    return {
        "NDCG": mr.ndcg_at_k(lst, rel, k),
        "MRR": mr.mrr(lst, rel, k),
        "SER": mr.serendipity(lst, ctx.baseline[lst.user], k),
        "DIV": mr.diversity(lst, ctx.bundle.category_of, k),
        "NOV": mr.novelty(lst, ctx.popularity, k) if ctx.popularity else mr.UNDEFINED,
        "FID": ex.fidelity(lst, k),
        "LIR": ex.lir(lst, ctx.weights, k),
        "LID": ex.lid(lst, k),
        "SEP": ex.sep(lst, ctx.weights, k),
        "SED": ex.sed(lst, k),
        "PTD": ex.ptd(lst, k),
        "PTC": ex.ptc(lst, k, n_types),
        "PPC": ex.ppc(lst, k, kg, n_patterns),
    }


def _chunk_rows(args):
    lists, k, n_types, n_patterns = args
    return [_user_row(_CTX, lst, k, n_types, n_patterns) for lst in lists]


def _per_user(ctx: _Context, lists: Sequence[RecommendedList], k: int, n_types: int, n_patterns: int,
              pool: ProcessPoolExecutor | None) -> list[dict[str, float]]:
    if pool is None:
        return [_user_row(ctx, lst, k, n_types, n_patterns) for lst in lists]
    size = max(1, math.ceil(len(lists) / (4 * ctx.cfg.workers)))
    chunks = [(lists[i:i + size], k, n_types, n_patterns) for i in range(0, len(lists), size)]
    rows: list[dict[str, float]] = []
    for part in pool.map(_chunk_rows, chunks):
        rows.extend(part)
    return rows


def group_coverage(lists: Sequence[RecommendedList], assignment: GroupAssignment, catalog, k: int) -> FairnessReport:
    """Catalog coverage reached by each group's lists; coverage has no per-user value."""
    by_group: dict[str, list[RecommendedList]] = {}
    for lst in lists:
        g = assignment.groups.get(lst.user)
        if g is not None:
            by_group.setdefault(g, []).append(lst)
    means = {g: mr.coverage(by_group[g], catalog, k) for g in assignment.labels if g in by_group}
    empty = tuple(g for g in assignment.labels if g not in by_group)
    return FairnessReport("COV", assignment.dimension, assignment.side, means, pairwise_delta(means), empty)


def build_context(bundle: DatasetBundle, split: SplitBundle, cfg: EvalConfig) -> _Context:
    relevant = {u: ps for u, ps in split.test.products_by_user.items() if ps}
    popularity = train_mostpop(split.train, bundle.catalog.tolist())
    kmax = max(max(cfg.cutoffs), max(cfg.fidelity_cutoffs))
    baseline = {u: recommend_mostpop(popularity, u, kmax, split.seen_products(u)) for u in sorted(relevant)}
    return _Context(bundle, split, relevant, baseline, popularity.counts,
                    precompute_weights(split.train, bundle.kg, cfg.beta), cfg)


def evaluate_method(ctx: _Context, lists: Mapping[int, RecommendedList],
                    pool: ProcessPoolExecutor | None = None) -> dict:
    """Every metric at every cutoff for one method, plus fairness breakdowns."""
    bundle, cfg = ctx.bundle, ctx.cfg
    users = sorted(ctx.relevant)
    ordered = [lists.get(u) or RecommendedList(u, ()) for u in users]
    ulabel = bundle.user_vocab.label
    consumer = {dim: GroupAssignment.from_demographics(bundle.user_attributes, dim, "consumer")
                for dim in DIMENSIONS}
    provider_groups = {dim: GroupAssignment.from_demographics(bundle.provider_attributes, dim, "provider")
                       for dim in DIMENSIONS}
    catalog = bundle.catalog.tolist()

    out: dict = {"aggregate": {}, "per_user": {}, "consumer_fairness": {}, "provider_fairness": {},
                 "fidelity_sweep": {}, "path_type_counts": {}}
    for k in cfg.cutoffs:
        n_types, n_patterns = ex.run_type_counts(ordered, k, bundle.kg)
        rows = _per_user(ctx, ordered, k, n_types, n_patterns, pool)
        per_metric = {m: {u: row[m] for u, row in zip(users, rows)} for m in USER_METRICS}
        agg = {m: mr.nanmean(per_metric[m][u] for u in users) for m in USER_METRICS}
        agg["COV"] = mr.coverage(ordered, catalog, k)
        cons: dict = {}
        for dim, assignment in consumer.items():
            subset = [u for u in users if u in assignment.groups]
            cons[dim] = {m: group_delta({u: per_metric[m][u] for u in subset}, assignment, m,
                                        with_test=True).as_dict()
                         for m in USER_METRICS}
            cons[dim]["COV"] = group_coverage(ordered, assignment, catalog, k).as_dict()
        prov: dict = {}
        for dim, assignment in provider_groups.items():
            rep = provider_fairness(ordered, bundle.provider_of, assignment, catalog, k)
            prov[dim] = rep.as_dict()
            agg[f"PF_{dim}"] = rep.delta
        out["aggregate"][str(k)] = agg
        out["per_user"][str(k)] = {m: {ulabel(u): per_metric[m][u] for u in users} for m in USER_METRICS}
        out["consumer_fairness"][str(k)] = cons
        out["provider_fairness"][str(k)] = prov
        out["path_type_counts"][str(k)] = {"path_types": n_types, "path_patterns": n_patterns}
    for k in cfg.fidelity_cutoffs:
        out["fidelity_sweep"][str(k)] = ex.fidelity_at_k(ordered, k)
    out["users_evaluated"] = len(users)
    out["truncated_lists"] = sum(1 for lst in ordered if lst.truncated)
    out["missing_lists"] = sum(1 for u in users if u not in lists)
    return out


def evaluate(bundle: DatasetBundle, split: SplitBundle, methods: Mapping[str, Mapping[int, RecommendedList]],
             cfg: EvalConfig | None = None) -> dict:
    """Evaluate each method's lists against the test partition; returns a JSON-ready dict."""
    global _CTX
    cfg = cfg or EvalConfig()
    ctx = build_context(bundle, split, cfg)
    report = {
        "dataset": compute_stats(bundle).as_dict(),
        "eval_config": asdict(cfg) | {"workers": None},
        "cutoffs": list(cfg.cutoffs),
        "fidelity_cutoffs": list(cfg.fidelity_cutoffs),
        "methods": {},
    }
    _CTX = ctx
    pool = None
    if cfg.workers > 1:
        # forked workers inherit the context instead of pickling it per task
        pool = ProcessPoolExecutor(cfg.workers, mp_context=multiprocessing.get_context("fork"))
    try:
        for name in sorted(methods):
            report["methods"][name] = evaluate_method(ctx, methods[name], pool)
    finally:
        if pool is not None:
            pool.shutdown()
        _CTX = None
    return report


# ---------------------------------------------------------------------------
# class comparison

@dataclass(frozen=True)
class CompareResult:
    classes: tuple[str, str]
    tests: dict[str, TestResult | None]
    absent: tuple[str, ...] = ()
    alpha: float = 0.05
    members: dict[str, list[str]] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "members": self.members,
            "alpha": self.alpha,
            "absent_metrics": list(self.absent),
            "tests": {m: (t.as_dict() | {"significant": t.p_value < self.alpha}) if t is not None else None
                      for m, t in self.tests.items()},
        }


def compare_methods(method_metrics: Mapping[str, Mapping[str, float]], grouping: Mapping[str, str],
                    metrics: Sequence[str] | None = None, alpha: float = 0.05) -> CompareResult:
    """Welch t-test per metric between two classes of methods."""
    classes = sorted(set(grouping.values()))
    if len(classes) != 2:
        raise ValueError(f"grouping must define exactly two classes, got {classes}")
    unknown = sorted(set(grouping) - set(method_metrics))
    if unknown:
        raise ValueError(f"grouping names methods without metrics: {unknown}")
    members = {c: sorted(m for m, g in grouping.items() if g == c) for c in classes}
    if metrics is None:
        names: list[str] = []
        for m in sorted(grouping):
            names.extend(x for x in method_metrics[m] if x not in names)
        metrics = names
    tests: dict[str, TestResult | None] = {}
    absent = []
    for metric in metrics:
        samples = []
        for c in classes:
            vals = [method_metrics[m].get(metric) for m in members[c]]
            samples.append(vals)
        if any(v is None or (isinstance(v, float) and math.isnan(v)) for s in samples for v in s):
            tests[metric] = None
            absent.append(metric)
            continue
        try:
            tests[metric] = welch_ttest(samples[0], samples[1])
        except StatsError:
            tests[metric] = None
            absent.append(metric)
    return CompareResult((classes[0], classes[1]), tests, tuple(absent), alpha, members)

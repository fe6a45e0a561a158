"""Demographic-parity fairness, provider exposure and significance tests."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .ingest import AGE_GROUPS, GENDER_GROUPS, Demographics
from .models import RecommendedList

UNATTRIBUTED = "unattributed"
DIMENSIONS = {"gender": GENDER_GROUPS, "age": AGE_GROUPS}


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class GroupAssignment:
    dimension: str
    side: str
    groups: Mapping

    @property
    def labels(self) -> tuple[str, ...]:
        return DIMENSIONS[self.dimension]

    @classmethod
    def from_demographics(cls, attributes: Mapping, dimension: str, side: str) -> "GroupAssignment":
        if dimension not in DIMENSIONS:
            raise ValueError(f"unknown dimension {dimension!r}")
        return cls(dimension, side, {s: getattr(d, dimension) for s, d in attributes.items()})


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: float
    p_value: float
    kind: str

    def as_dict(self) -> dict:
        return {"statistic": self.statistic, "df": self.df, "p_value": self.p_value, "kind": self.kind}


@dataclass(frozen=True)
class FairnessReport:
    metric: str
    dimension: str
    side: str
    group_means: dict[str, float]
    delta: float
    empty_groups: tuple[str, ...] = ()
    test: TestResult | None = None
    compared: tuple[str, str] | None = None
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {"metric": self.metric, "dimension": self.dimension, "side": self.side,
               "group_means": dict(self.group_means), "delta": self.delta,
               "empty_groups": list(self.empty_groups)}
        if self.test is not None:
            out["test"] = self.test.as_dict()
            out["compared"] = list(self.compared)
        out.update(self.extra)
        return out


def pairwise_delta(group_means: Mapping[str, float]) -> float:
    """Mean absolute difference over all unordered pairs of groups; NaN with fewer than two groups."""
    values = list(group_means.values())
    pairs = list(itertools.combinations(values, 2))
    if not pairs:
        return math.nan
    return math.fsum(abs(a - b) for a, b in pairs) / len(pairs)


def group_delta(per_user_values: Mapping, assignment: GroupAssignment, metric: str = "",
                with_test: bool = False) -> FairnessReport:
    samples: dict[str, list[float]] = {g: [] for g in assignment.labels}
    for subject in sorted(per_user_values):
        v = per_user_values[subject]
        if v is None or math.isnan(v):
            continue
        g = assignment.groups.get(subject)
        if g is None:
            raise KeyError(f"subject {subject!r} has no {assignment.dimension} group")
        samples.setdefault(g, []).append(v)
    means = {g: math.fsum(vs) / len(vs) for g, vs in samples.items() if vs}
    empty = tuple(g for g, vs in samples.items() if not vs)
    test = compared = None
    if with_test and len(means) >= 2:
        best = max(means, key=lambda g: (means[g], g))
        worst = min(means, key=lambda g: (means[g], g))
        test = best_worst_test(samples[best], samples[worst])
        compared = (best, worst)
    return FairnessReport(metric, assignment.dimension, assignment.side, means,
                          pairwise_delta(means), empty, test, compared)


def best_worst_test(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Welch t-test where its preconditions hold, Kruskal-Wallis H otherwise."""
    try:
        return welch_ttest(a, b)
    except StatsError:
        pass
    try:
        return kruskal_h([a, b])
    except StatsError:
        return TestResult(math.nan, math.nan, math.nan, "none")


def exposure_share(lst: RecommendedList | Sequence[int], provider_of: Mapping[int, str],
                   provider_group: Mapping[str, str], k: int) -> dict[str, float]:
    """Positionally discounted share of list attention received by each provider group."""
    products = lst.products if isinstance(lst, RecommendedList) else list(lst)
    weights: dict[str, float] = {}
    for rank, p in enumerate(products[:k], 1):
        prov = provider_of.get(p)
        g = provider_group.get(prov, UNATTRIBUTED) if prov is not None else UNATTRIBUTED
        weights[g] = weights.get(g, 0.0) + 1.0 / math.log2(rank + 1)
    total = math.fsum(weights.values())
    return {g: w / total for g, w in sorted(weights.items())} if total else {}


def provider_fairness(lists: Iterable[RecommendedList], provider_of: Mapping[int, str],
                      assignment: GroupAssignment, catalog: Iterable[int], k: int) -> FairnessReport:
    """Average per-list exposure share by provider group, then the mean pairwise gap."""
    labels = assignment.labels
    represented = {assignment.groups.get(provider_of.get(p)) for p in catalog}
    active = [g for g in labels if g in represented]
    totals = {g: 0.0 for g in active}
    unattributed = 0.0
    n = 0
    for lst in lists:
        shares = exposure_share(lst, provider_of, assignment.groups, k)
        if not shares:
            continue
        n += 1
        for g, s in shares.items():
            if g in totals:
                totals[g] += s
            else:
                unattributed += s
    means = {g: totals[g] / n for g in active} if n else {}
    return FairnessReport("EXP", assignment.dimension, "provider", means, pairwise_delta(means),
                          tuple(g for g in labels if g not in represented),
                          extra={"unattributed_share": unattributed / n if n else 0.0})


def welch_ttest(sample_a: Sequence[float], sample_b: Sequence[float]) -> TestResult:
    """Two-sided unequal-variance t-test with Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise StatsError("each sample needs at least two values")
    ma, mb = math.fsum(a) / na, math.fsum(b) / nb
    # two-pass variance; tiny residues from float sums are not real spread
    va = math.fsum((a - ma) ** 2) / (na - 1)
    vb = math.fsum((b - mb) ** 2) / (nb - 1)
    scale = max(abs(ma), abs(mb), 1.0)
    va = 0.0 if va < (1e-12 * scale) ** 2 else va
    vb = 0.0 if vb < (1e-12 * scale) ** 2 else vb
    if va == 0.0 and vb == 0.0:
        if math.isclose(ma, mb, rel_tol=1e-12, abs_tol=1e-15):
            return TestResult(0.0, float(na + nb - 2), 1.0, "welch-t")
        raise StatsError("both samples are constant with different means")
    sa, sb = va / na, vb / nb
    t = (ma - mb) / math.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa ** 2 / (na - 1) + sb ** 2 / (nb - 1))
    p = min(1.0, 2.0 * float(stats.t.sf(abs(t), df)))
    return TestResult(t, df, p, "welch-t")


def kruskal_h(samples: Sequence[Sequence[float]]) -> TestResult:
    """Kruskal-Wallis H with mid-ranks and tie correction; chi-squared p-value."""
    groups = [np.asarray(s, dtype=np.float64) for s in samples]
    if len(groups) < 2:
        raise StatsError("Kruskal-Wallis needs at least two groups")
    if any(len(g) == 0 for g in groups):
        raise StatsError("every group must be non-empty")
    pooled = np.concatenate(groups)
    n = len(pooled)
    if n < 3:
        raise StatsError("Kruskal-Wallis needs at least three observations")
    ranks = stats.rankdata(pooled)
    df = len(groups) - 1
    _, tie_counts = np.unique(pooled, return_counts=True)
    correction = 1.0 - float(np.sum(tie_counts ** 3 - tie_counts)) / (n ** 3 - n)
    if correction == 0.0:
        return TestResult(0.0, float(df), 1.0, "kruskal-h")
    h = 0.0
    start = 0
    for g in groups:
        r = ranks[start:start + len(g)]
        h += r.sum() ** 2 / len(g)
        start += len(g)
    h = (12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)) / correction
    h = max(h, 0.0)
    return TestResult(h, float(df), float(stats.chi2.sf(h, df)), "kruskal-h")

"""Per-user chronological hold-out split."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .kg import InteractionLog

log = logging.getLogger(__name__)

_EPS = 1e-9


class SplitConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.6
    valid_fraction: float = 0.2
    test_fraction: float = 0.2

    def __post_init__(self):
        fracs = (self.train_fraction, self.valid_fraction, self.test_fraction)
        if any(f < 0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
            raise SplitConfigError(f"split fractions must be non-negative and sum to 1, got {fracs}")


@dataclass(frozen=True, eq=False)
class SplitBundle:
    train: InteractionLog
    valid: InteractionLog
    test: InteractionLog
    # user -> (train_size, valid_size, test_size)
    sizes: dict[int, tuple[int, int, int]] = field(default_factory=dict)
    dropped_users: tuple[int, ...] = ()

    def seen_products(self, user: int) -> frozenset[int]:
        """Products a user touched in train or validation, excluded at test time."""
        return (self.train.products_by_user.get(user, frozenset())
                | self.valid.products_by_user.get(user, frozenset()))


def partition_sizes(n: int, cfg: SplitConfig) -> tuple[int, int, int]:
    n_train = max(1, math.floor(cfg.train_fraction * n + _EPS))
    train_valid = max(n_train, math.floor((cfg.train_fraction + cfg.valid_fraction) * n + _EPS))
    train_valid = min(train_valid, n)
    return n_train, train_valid - n_train, n - train_valid


def chronological_split(interactions: InteractionLog, cfg: SplitConfig | None = None) -> SplitBundle:
    """Oldest interactions of each user go to train, newest to test.

    Equal timestamps keep input order, then product id. Users with fewer than three
    interactions are dropped. Output rows are grouped by user id, chronological within.
    """
    cfg = cfg or SplitConfig()
    n = len(interactions)
    rows = np.arange(n)
    # lexsort: last key is primary
    order = np.lexsort((interactions.products, rows, interactions.timestamps, interactions.users))
    users_sorted = interactions.users[order]
    boundaries = np.flatnonzero(np.diff(users_sorted)) + 1
    starts = np.concatenate(([0], boundaries)) if n else np.array([], dtype=np.int64)
    ends = np.concatenate((boundaries, [n])) if n else np.array([], dtype=np.int64)

    part = np.full(n, -1, dtype=np.int8)
    sizes: dict[int, tuple[int, int, int]] = {}
    dropped = []
    for s, e in zip(starts.tolist(), ends.tolist()):
        user = int(users_sorted[s])
        count = e - s
        if count < 3:
            dropped.append(user)
            continue
        n_tr, n_va, n_te = partition_sizes(count, cfg)
        sizes[user] = (n_tr, n_va, n_te)
        part[s:s + n_tr] = 0
        part[s + n_tr:s + n_tr + n_va] = 1
        part[s + n_tr + n_va:e] = 2
    if dropped:
        log.warning("dropped %d users with fewer than 3 interactions", len(dropped))
    return SplitBundle(
        train=interactions.take(order[part == 0]),
        valid=interactions.take(order[part == 1]),
        test=interactions.take(order[part == 2]),
        sizes=sizes,
        dropped_users=tuple(dropped),
    )

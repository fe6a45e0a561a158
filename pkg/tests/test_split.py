import pytest

from kgaudit.kg import InteractionLog
from kgaudit.split import SplitConfig, SplitConfigError, chronological_split, partition_sizes


def user_log(timestamps, user=0, products=None):
    products = products or list(range(len(timestamps)))
    return InteractionLog.from_records([(user, p, 1.0, t) for p, t in zip(products, timestamps)])


@pytest.mark.parametrize("n,expected", [(10, (6, 2, 2)), (5, (3, 1, 1)), (3, (1, 1, 1)), (4, (2, 1, 1)),
                                        (7, (4, 1, 2))])
def test_partition_sizes(n, expected):
    assert partition_sizes(n, SplitConfig()) == expected


def test_ten_interactions_split_oldest_first():
    log = user_log([50, 10, 90, 20, 80, 30, 70, 40, 60, 100])
    s = chronological_split(log)
    assert s.train.timestamps.tolist() == [10, 20, 30, 40, 50, 60]
    assert s.valid.timestamps.tolist() == [70, 80]
    assert s.test.timestamps.tolist() == [90, 100]


def test_equal_timestamps_follow_input_order():
    log = user_log([5, 5, 5, 5, 5], products=[4, 2, 3, 0, 1])
    s = chronological_split(log)
    assert s.train.products.tolist() == [4, 2, 3]
    assert s.valid.products.tolist() == [0]
    assert s.test.products.tolist() == [1]


def test_users_with_fewer_than_three_interactions_are_dropped():
    rows = [(0, 1, 1.0, 1), (0, 2, 1.0, 2), (1, 1, 1.0, 1), (1, 2, 1.0, 2), (1, 3, 1.0, 3)]
    s = chronological_split(InteractionLog.from_records(rows))
    assert s.dropped_users == (0,)
    assert set(s.sizes) == {1}


def test_seen_products_cover_train_and_validation():
    s = chronological_split(user_log([1, 2, 3, 4, 5]))
    assert s.seen_products(0) == frozenset({0, 1, 2, 3})


@pytest.mark.parametrize("fracs", [(0.5, 0.2, 0.2), (-0.1, 0.6, 0.5), (0.7, 0.3, 0.1)])
def test_invalid_fractions(fracs):
    with pytest.raises(SplitConfigError):
        SplitConfig(*fracs)

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgeroute.cache import CacheEntry, PathCache
from edgeroute.graph import generate_city, update_graph
from edgeroute.sssp import dijkstra_sequential

from oracles import LruModel

BASE = generate_city(12, 0.4, {}, seed=0)
GRAPHS = [BASE]
for _ in range(5):
    GRAPHS.append(update_graph(GRAPHS[-1], []))


def entry(key: int, version: int, now: int = 0) -> CacheEntry:
    return CacheEntry(key, dijkstra_sequential(GRAPHS[version], key), version, now)


def test_empty_lookup_misses():
    c = PathCache(4)
    assert c.lookup(3, 0) is None
    assert c.stats.misses == 1 and c.stats.hits == 0


def test_round_trip_hit_returns_identical_result():
    c = PathCache(4)
    e = entry(2, 3)
    c.insert(e)
    got = c.lookup(2, 3, now=9)
    assert got is e and got.result is e.result and got.last_used == 9


def test_stale_lookup_misses_and_evicts():
    c = PathCache(4)
    c.insert(entry(2, 3))
    assert c.lookup(2, 4) is None
    assert 2 not in c and len(c) == 0
    assert c.stats.invalidations == 1 and c.stats.misses == 1


def test_lru_eviction():
    c = PathCache(2)
    c.insert(entry(0, 0))
    c.insert(entry(1, 0))
    assert c.lookup(0, 0) is not None
    c.insert(entry(2, 0))
    assert 1 not in c and 0 in c and 2 in c
    assert c.stats.evictions == 1


def test_reinsert_newer_version_replaces():
    c = PathCache(2)
    c.insert(entry(0, 1))
    c.insert(entry(0, 2))
    assert len(c) == 1
    assert c.lookup(0, 2).graph_version == 2


def test_entry_invariants():
    r = dijkstra_sequential(GRAPHS[1], 0)
    with pytest.raises(ValueError):
        CacheEntry(0, r, 2)
    with pytest.raises(ValueError):
        CacheEntry(1, r, 1)


def test_invalidate_all():
    c = PathCache(8)
    for k in range(3):
        c.insert(entry(k, 1))
    assert c.invalidate_all(2) == 3 and len(c) == 0
    assert PathCache(4).invalidate_all(0) == 0


def test_invalidate_selective():
    c = PathCache(8)
    c.insert(entry(0, 1))
    c.insert(entry(1, 2))
    c.insert(entry(2, 1))
    assert c.invalidate_all(2) == 2
    assert list(c._entries) == [1]


def test_invalidate_rejects_regression():
    c = PathCache(4)
    c.insert(entry(0, 3))
    with pytest.raises(ValueError):
        c.invalidate_all(2)


def test_capacity_must_be_positive():
    with pytest.raises(ValueError):
        PathCache(0)


ops = st.lists(st.tuples(st.sampled_from(["lookup", "insert"]), st.integers(0, 11),
                         st.integers(0, 5)), min_size=1, max_size=200)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), ops)
def test_matches_reference_model(capacity, sequence):
    c, model = PathCache(capacity), LruModel(capacity)
    lookups = 0
    for op, key, version in sequence:
        if op == "lookup":
            lookups += 1
            got = c.lookup(key, version)
            assert (got is not None) == model.lookup(key, version)
            if got is not None:
                assert got.graph_version == version and got.result.source == key
        else:
            c.insert(entry(key, version))
            model.insert(key, version)
        assert list(c._entries) == list(model.data)
    assert c.stats.hits + c.stats.misses == lookups == c.stats.lookups


def test_thousand_random_ops_vs_reference():
    import random
    rng = random.Random(5)
    c, model = PathCache(8), LruModel(8)
    seq_c, seq_m = [], []
    for _ in range(1000):
        key, version = rng.randrange(12), rng.randrange(6)
        if rng.random() < 0.5:
            seq_c.append(c.lookup(key, version) is not None)
            seq_m.append(model.lookup(key, version))
        else:
            c.insert(entry(key, version))
            model.insert(key, version)
    assert seq_c == seq_m
    assert c.stats.lookups == len(seq_c)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from latentserve.errors import ConfigError
from latentserve.trace_kit import mrc
from latentserve.trace_kit.records import ObjectMeta, Trace


def brute_belady(ids, capacity):
    """Evict the cached object whose next use is farthest (O(n^2))."""
    cache, misses = set(), 0
    for i, o in enumerate(ids):
        if o in cache:
            continue
        misses += 1
        if capacity == 0:
            continue
        if len(cache) >= capacity:
            def nxt(x):
                for j in range(i + 1, len(ids)):
                    if ids[j] == x:
                        return j
                return float("inf")

            cache.remove(max(sorted(cache), key=nxt))
        cache.add(o)
    return misses


traces = hst.lists(hst.integers(1, 12), min_size=1, max_size=120)


@given(traces, hst.integers(1, 10))
@settings(max_examples=150, deadline=None)
def test_lru_stack_distance_matches_reference(ids, cap):
    t = Trace.from_ids(ids)
    assert mrc.lru_misses(t, [cap]) == [mrc.lru_misses_reference(ids, cap)]


@given(traces, hst.integers(1, 10))
@settings(max_examples=150, deadline=None)
def test_belady_matches_brute_force(ids, cap):
    assert mrc.belady_misses(Trace.from_ids(ids), cap) == brute_belady(ids, cap)


@given(traces, hst.integers(1, 10))
@settings(max_examples=100, deadline=None)
def test_belady_never_worse_than_lru(ids, cap):
    t = Trace.from_ids(ids)
    assert mrc.belady_misses(t, cap) <= mrc.lru_misses(t, [cap])[0]


@given(traces)
@settings(max_examples=80, deadline=None)
def test_lru_mrc_monotone(ids):
    caps = list(range(1, 14))
    m = mrc.lru_misses(Trace.from_ids(ids), caps)
    assert all(b <= a for a, b in zip(m, m[1:]))
    # enough room for everything: only compulsory misses
    assert m[-1] == len(set(ids))


def test_byte_sized_lru_matches_brute_force():
    rng = np.random.default_rng(1)
    ids = rng.integers(1, 30, size=800).tolist()
    sizes = {o: int(rng.integers(1, 6)) for o in set(ids)}
    cat = {o: ObjectMeta(s + 1, s) for o, s in sizes.items()}
    t = Trace.from_ids(ids)
    for cap in (5, 17, 40):
        got = mrc.miss_ratio_curve(t, [cap], "lru", cat, "latent_bytes")[0][1]
        # brute force byte LRU; objects larger than the cache never enter
        cache, used, miss = {}, 0, 0
        for o in ids:
            if o in cache:
                cache[o] = cache.pop(o)
                continue
            miss += 1
            s = sizes[o]
            if s > cap:
                continue
            cache[o] = s
            used += s
            while used > cap:
                k = next(iter(cache))
                used -= cache.pop(k)
        assert got == pytest.approx(miss / len(ids))


def test_mrc_shape_and_errors():
    t = Trace.from_ids([1, 2, 1, 3, 1, 2])
    pts = mrc.miss_ratio_curve(t, [1, 2, 3], "belady")
    assert [c for c, _ in pts] == [1, 2, 3]
    assert pts[-1][1] == pytest.approx(3 / 6)
    with pytest.raises(ConfigError):
        mrc.miss_ratio_curve(t, [3, 1])
    with pytest.raises(ConfigError):
        mrc.miss_ratio_curve(t, [1], "fifo")

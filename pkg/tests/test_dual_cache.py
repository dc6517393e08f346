import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from latentserve.dual_cache import (
    FULL_MISS,
    IMAGE_HIT,
    LATENT_HIT,
    DualCache,
    DualCacheConfig,
)
from latentserve.errors import ConfigError
from latentserve.trace_kit.mrc import lru_misses_reference
from latentserve.trace_kit.records import ObjectMeta

META = ObjectMeta(10, 2)
UNIT = ObjectMeta(2, 1)


def serve(cache, oid, meta=META):
    out = cache.lookup(oid, meta)
    if out.kind is FULL_MISS:
        cache.admit(oid, meta)
    return out


def test_budgets_split_by_alpha():
    c = DualCache(DualCacheConfig(1000, alpha=0.3, tail_fraction=0.1))
    assert c.image.budget == 300 and c.latent.budget == 700
    assert c.image.tail.budget == 30 and c.latent.tail.budget == 70


def test_cascade_and_promotion():
    c = DualCache(DualCacheConfig(1000, alpha=0.5, promotion_threshold=3))
    assert serve(c, 1).kind is FULL_MISS
    assert c.where(1) == "latent"
    assert serve(c, 1).kind is LATENT_HIT
    assert serve(c, 1).kind is LATENT_HIT
    out = serve(c, 1)
    assert out.kind is LATENT_HIT and out.promoted
    assert c.where(1) == "image"
    assert serve(c, 1).kind is IMAGE_HIT


def test_object_lives_in_one_tier():
    c = DualCache(DualCacheConfig(200, alpha=0.5, promotion_threshold=2))
    for oid in [1, 2, 1, 1, 3, 2, 2, 4, 1, 5, 6, 7, 1]:
        serve(c, oid)
        assert not set(c.image.ids()) & set(c.latent.ids())


def test_counters():
    c = DualCache(DualCacheConfig(1000, alpha=0.5))
    for oid in [1, 1, 2]:
        serve(c, oid)
    k = c.snapshot_and_reset_counters()
    assert (k.total_requests, k.image_misses, k.full_misses) == (3, 3, 2)
    assert c.counters.total_requests == 0


def test_set_alpha_evicts_and_respects_budgets():
    c = DualCache(DualCacheConfig(100, alpha=0.0, tail_fraction=0.1))
    for oid in range(60):
        serve(c, oid)
    assert c.latent.used <= 100
    evicted = c.set_alpha(0.8)
    assert evicted
    assert c.latent.used <= c.latent.budget == 20
    for t in (c.image, c.latent):
        assert t.main.used <= t.main.budget and t.tail.used <= t.tail.budget
    with pytest.raises(ConfigError):
        c.set_alpha(1.5)


def test_alpha_one_admits_images():
    c = DualCache(DualCacheConfig(100, alpha=1.0))
    serve(c, 7)
    assert c.where(7) == "image"
    assert serve(c, 7).kind is IMAGE_HIT


def test_oversized_objects_bypass():
    c = DualCache(DualCacheConfig(10, alpha=0.5))
    assert c.admit(1, ObjectMeta(100, 50)) == [1]
    assert 1 not in c


def test_double_admit_rejected():
    c = DualCache(DualCacheConfig(100))
    c.admit(1, META)
    with pytest.raises(ValueError):
        c.admit_latent(1, META)


def test_copy_is_independent():
    c = DualCache(DualCacheConfig(100))
    serve(c, 1)
    d = c.copy()
    serve(d, 2)
    assert 2 in d and 2 not in c


def test_config_validation():
    for kw in (dict(alpha=-0.1), dict(tail_fraction=0.0), dict(promotion_threshold=0)):
        with pytest.raises(ConfigError):
            DualCacheConfig(100, **kw).validate()


@given(
    hst.lists(hst.integers(1, 40), min_size=1, max_size=300),
    hst.integers(1, 15),
    hst.sampled_from([0.0, 1.0]),
)
@settings(max_examples=150, deadline=None)
def test_tail_hits_equal_lru_miss_difference(ids, quarters, alpha):
    # capacity in objects is a multiple of 4 so the tail holds whole objects
    cap = 4 * quarters
    # one tier holds everything (alpha 0: latent, alpha 1: image)
    size = UNIT.latent_bytes if alpha == 0.0 else UNIT.image_bytes
    c = DualCache(DualCacheConfig(cap * size, alpha, 0.25, promotion_threshold=10**9))
    tier = c.latent if alpha == 0.0 else c.image
    for o in ids:
        serve(c, o, UNIT)
    k = c.counters
    tail = k.latent_tail_hits if alpha == 0.0 else k.image_tail_hits
    full = tier.budget // size
    main = tier.main.budget // size
    assert tail == lru_misses_reference(ids, main) - lru_misses_reference(ids, full)


@given(hst.lists(hst.integers(1, 30), min_size=1, max_size=300), hst.floats(0.0, 1.0))
@settings(max_examples=100, deadline=None)
def test_budget_invariants_hold(ids, alpha):
    c = DualCache(DualCacheConfig(40, alpha, 0.1, promotion_threshold=2))
    for i, o in enumerate(ids):
        serve(c, o, UNIT)
        if i % 37 == 0:
            c.set_alpha(1.0 - c.alpha)
        for t in (c.image, c.latent):
            assert t.main.used <= t.main.budget
            assert t.tail.used <= t.tail.budget
            assert t.used == sum(e.stored_bytes for e in list(t.main.entries.values()) + list(t.tail.entries.values()))
        assert c.image.budget + c.latent.budget <= 40

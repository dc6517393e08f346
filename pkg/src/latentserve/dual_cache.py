"""Per-node dual-format cache.

One byte budget ``C`` is split into an image tier (``alpha * C``) and a
latent tier (``(1 - alpha) * C``). Each tier is a segmented LRU: a main
segment holding ``1 - tau`` of the tier's bytes and a tail segment holding
the rest. Fresh entries and hits land at main MRU, main overflow is
demoted to tail MRU and tail overflow leaves the cache, so main plus tail
is exactly the tier's LRU stack and a tail hit is precisely a hit that a
tier ``tau`` smaller would have missed.

Lookups cascade image -> latent -> miss. A latent entry is promoted to the
image tier once it has collected ``h`` latent hits.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, asdict
from enum import Enum
from typing import Callable, NamedTuple

from .errors import ConfigError
from .trace_kit.records import ObjectMeta

_EPS = 1e-9


def _floor(x: float) -> int:
    return int(math.floor(x + _EPS))


class OutcomeKind(str, Enum):
    IMAGE_HIT = "image_hit"
    LATENT_HIT = "latent_hit"
    FULL_MISS = "full_miss"


IMAGE_HIT = OutcomeKind.IMAGE_HIT
LATENT_HIT = OutcomeKind.LATENT_HIT
FULL_MISS = OutcomeKind.FULL_MISS


class Outcome(NamedTuple):
    kind: OutcomeKind
    promoted: bool = False
    tail_hit: bool = False


_IMAGE_MAIN = Outcome(IMAGE_HIT)
_IMAGE_TAIL = Outcome(IMAGE_HIT, tail_hit=True)
_MISS = Outcome(FULL_MISS)


@dataclass(frozen=True)
class DualCacheConfig:
    capacity_bytes: int
    alpha: float = 0.5
    tail_fraction: float = 0.10
    promotion_threshold: int = 8

    def validate(self) -> "DualCacheConfig":
        if self.capacity_bytes < 0:
            raise ConfigError("capacity_bytes", "must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha", "must be in [0, 1]")
        if not 0.0 < self.tail_fraction < 1.0:
            raise ConfigError("tail_fraction", "must be in (0, 1)")
        if self.promotion_threshold < 1:
            raise ConfigError("promotion_threshold", "must be >= 1")
        return self


@dataclass
class WindowCounters:
    total_requests: int = 0
    image_misses: int = 0
    full_misses: int = 0
    image_tail_hits: int = 0
    latent_tail_hits: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


class CacheEntry:
    __slots__ = ("object_id", "stored_bytes", "latent_hit_count")

    def __init__(self, object_id: int, stored_bytes: int, latent_hit_count: int = 0):
        self.object_id = object_id
        self.stored_bytes = stored_bytes
        self.latent_hit_count = latent_hit_count

    def copy(self) -> "CacheEntry":
        return CacheEntry(self.object_id, self.stored_bytes, self.latent_hit_count)

    def __repr__(self):
        return f"CacheEntry({self.object_id}, {self.stored_bytes}, {self.latent_hit_count})"


class Segment:
    """Recency-ordered entries with a byte budget; first key is LRU."""

    __slots__ = ("entries", "used", "budget")

    def __init__(self, budget: int = 0):
        self.entries: OrderedDict[int, CacheEntry] = OrderedDict()
        self.used = 0
        self.budget = budget

    def __len__(self):
        return len(self.entries)

    def __contains__(self, oid):
        return oid in self.entries

    def push_mru(self, e: CacheEntry):
        self.entries[e.object_id] = e
        self.used += e.stored_bytes

    def push_lru(self, e: CacheEntry):
        self.entries[e.object_id] = e
        self.entries.move_to_end(e.object_id, last=False)
        self.used += e.stored_bytes

    def pop(self, oid) -> CacheEntry:
        e = self.entries.pop(oid)
        self.used -= e.stored_bytes
        return e

    def pop_lru(self) -> CacheEntry:
        _, e = self.entries.popitem(last=False)
        self.used -= e.stored_bytes
        return e

    def pop_mru(self) -> CacheEntry:
        _, e = self.entries.popitem(last=True)
        self.used -= e.stored_bytes
        return e

    def peek_mru(self) -> CacheEntry:
        return self.entries[next(reversed(self.entries))]

    def copy(self) -> "Segment":
        s = Segment(self.budget)
        s.entries = OrderedDict((k, e.copy()) for k, e in self.entries.items())
        s.used = self.used
        return s


class Tier:
    """Segmented LRU tier: main + tail under one byte budget."""

    __slots__ = ("name", "budget", "tail_fraction", "main", "tail")

    def __init__(self, name: str, budget: int, tail_fraction: float):
        self.name = name
        self.tail_fraction = tail_fraction
        self.main = Segment()
        self.tail = Segment()
        self.budget = 0
        self._set_budgets(budget)

    def _set_budgets(self, budget: int):
        self.budget = budget
        self.tail.budget = _floor(self.tail_fraction * budget)
        self.main.budget = budget - self.tail.budget

    @property
    def used(self) -> int:
        return self.main.used + self.tail.used

    def __contains__(self, oid):
        return oid in self.main.entries or oid in self.tail.entries

    def __len__(self):
        return len(self.main) + len(self.tail)

    def get(self, oid) -> CacheEntry | None:
        e = self.main.entries.get(oid)
        return e if e is not None else self.tail.entries.get(oid)

    def ids(self) -> list[int]:
        """Object ids, MRU first."""
        return list(reversed(self.main.entries)) + list(reversed(self.tail.entries))

    def fits(self, nbytes: int) -> bool:
        return nbytes <= self.main.budget

    def rebalance(self) -> list[int]:
        main, tail = self.main, self.tail
        while main.used > main.budget:
            tail.push_mru(main.pop_lru())
        while tail.entries and tail.peek_mru().stored_bytes <= main.budget - main.used:
            main.push_lru(tail.pop_mru())
        evicted = []
        while tail.used > tail.budget:
            evicted.append(tail.pop_lru().object_id)
        return evicted

    def insert(self, e: CacheEntry) -> list[int]:
        self.main.push_mru(e)
        return self.rebalance()

    def remove(self, oid) -> CacheEntry:
        seg = self.main if oid in self.main.entries else self.tail
        e = seg.pop(oid)
        self.rebalance()
        return e

    def set_budget(self, budget: int) -> list[int]:
        self._set_budgets(budget)
        return self.rebalance()

    def copy(self) -> "Tier":
        t = Tier.__new__(Tier)
        t.name = self.name
        t.budget = self.budget
        t.tail_fraction = self.tail_fraction
        t.main = self.main.copy()
        t.tail = self.tail.copy()
        return t

    def to_dict(self) -> dict:
        def seg(s: Segment):
            return {
                "budget": s.budget,
                "used": s.used,
                # MRU first
                "entries": [
                    [e.object_id, e.stored_bytes, e.latent_hit_count]
                    for e in reversed(s.entries.values())
                ],
            }

        return {"budget": self.budget, "main": seg(self.main), "tail": seg(self.tail)}


class DualCache:
    """Image tier + latent tier with cascading lookup and promotion.

    ``on_insert(object_id, tier_name)`` is called on every insertion; the
    simulator uses it to check that entries only land on their owner node.
    """

    def __init__(self, config: DualCacheConfig, on_insert: Callable[[int, str], None] | None = None):
        self.config = config.validate()
        self.alpha = config.alpha
        self.h = config.promotion_threshold
        img_b, lat_b = self._budgets(config.alpha)
        self.image = Tier("image", img_b, config.tail_fraction)
        self.latent = Tier("latent", lat_b, config.tail_fraction)
        self.counters = WindowCounters()
        self.on_insert = on_insert

    def _budgets(self, alpha: float) -> tuple[int, int]:
        c = self.config.capacity_bytes
        return _floor(alpha * c), _floor((1.0 - alpha) * c)

    def __contains__(self, oid):
        return oid in self.image or oid in self.latent

    def where(self, oid) -> str | None:
        if oid in self.image:
            return "image"
        if oid in self.latent:
            return "latent"
        return None

    # -- lookup -------------------------------------------------------------

    def lookup(self, object_id: int, meta: ObjectMeta) -> Outcome:
        if meta is None:
            raise ValueError(f"no size metadata for object {object_id}")
        c = self.counters
        c.total_requests += 1

        img = self.image
        e = img.main.entries.get(object_id)
        if e is not None:
            img.main.entries.move_to_end(object_id)
            return _IMAGE_MAIN
        if object_id in img.tail.entries:
            c.image_tail_hits += 1
            img.insert(img.tail.pop(object_id))
            return _IMAGE_TAIL

        c.image_misses += 1
        lat = self.latent
        tail_hit = False
        e = lat.main.entries.get(object_id)
        if e is None:
            if object_id not in lat.tail.entries:
                c.full_misses += 1
                return _MISS
            tail_hit = True
            c.latent_tail_hits += 1
            e = lat.tail.entries[object_id]

        e.latent_hit_count += 1
        if e.latent_hit_count >= self.h:
            if img.fits(meta.image_bytes):
                lat.remove(object_id)
                self._insert(img, CacheEntry(object_id, meta.image_bytes))
                return Outcome(LATENT_HIT, True, tail_hit)
            e.latent_hit_count = self.h - 1
        if tail_hit:
            lat.insert(lat.tail.pop(object_id))
        else:
            lat.main.entries.move_to_end(object_id)
        return Outcome(LATENT_HIT, False, tail_hit)

    # -- admission ----------------------------------------------------------

    def _insert(self, tier: Tier, entry: CacheEntry) -> list[int]:
        if self.on_insert is not None:
            self.on_insert(entry.object_id, tier.name)
        return tier.insert(entry)

    def admit_latent(self, object_id: int, meta: ObjectMeta) -> list[int]:
        """Insert a freshly fetched latent; returns evicted ids.

        A latent that cannot sit in the latent tier's main segment bypasses
        the cache and is reported as evicted itself.
        """
        if object_id in self:
            raise ValueError(f"object {object_id} already cached")
        if not self.latent.fits(meta.latent_bytes):
            return [object_id]
        return self._insert(self.latent, CacheEntry(object_id, meta.latent_bytes))

    def admit_image(self, object_id: int, meta: ObjectMeta) -> list[int]:
        """Insert a decoded image directly, bypassing the latent tier."""
        if object_id in self:
            raise ValueError(f"object {object_id} already cached")
        if not self.image.fits(meta.image_bytes):
            return [object_id]
        return self._insert(self.image, CacheEntry(object_id, meta.image_bytes))

    def admit(self, object_id: int, meta: ObjectMeta) -> list[int]:
        """Full-miss admission: latent tier, or image tier when the latent
        tier is too small to hold the latent (e.g. ``alpha = 1``)."""
        if self.latent.fits(meta.latent_bytes):
            return self.admit_latent(object_id, meta)
        return self.admit_image(object_id, meta)

    # -- resizing and counters ---------------------------------------------

    def set_alpha(self, alpha: float) -> list[int]:
        if not 0.0 <= alpha <= 1.0:
            raise ConfigError("alpha", f"must be in [0, 1], got {alpha}")
        self.alpha = alpha
        img_b, lat_b = self._budgets(alpha)
        evicted = self.image.set_budget(img_b)
        evicted += self.latent.set_budget(lat_b)
        return evicted

    def snapshot_and_reset_counters(self) -> WindowCounters:
        snap = self.counters
        self.counters = WindowCounters()
        return snap

    def copy(self) -> "DualCache":
        d = DualCache.__new__(DualCache)
        d.config = self.config
        d.alpha = self.alpha
        d.h = self.h
        d.image = self.image.copy()
        d.latent = self.latent.copy()
        d.counters = WindowCounters(**asdict(self.counters))
        d.on_insert = None
        return d

    def to_dict(self) -> dict:
        return {
            "capacity_bytes": self.config.capacity_bytes,
            "alpha": self.alpha,
            "tail_fraction": self.config.tail_fraction,
            "promotion_threshold": self.h,
            "image": self.image.to_dict(),
            "latent": self.latent.to_dict(),
            "counters": self.counters.as_dict(),
        }

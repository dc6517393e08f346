"""Miss-ratio curves under LRU and Belady (farthest next use).

LRU uses one pass of stack distances (Mattson) over a Fenwick tree, which
also works in bytes: LRU with per-object sizes always holds the longest
recency prefix that fits, so an access hits iff the total size of the
distinct objects touched since its previous access, itself included, fits
in the capacity.

Belady is simulated per capacity with a lazy max-heap keyed on next use.
"""

from __future__ import annotations

import heapq
from collections import OrderedDict

import numpy as np

from ..errors import ConfigError
from .records import ObjectMeta, Trace

INF = float("inf")


class _Fenwick:
    __slots__ = ("n", "tree")

    def __init__(self, n):
        self.n = n
        self.tree = [0] * (n + 1)

    def add(self, i, v):
        i += 1
        n = self.n
        tree = self.tree
        while i <= n:
            tree[i] += v
            i += i & -i

    def prefix(self, i):
        """Sum over positions ``[0, i)``."""
        s = 0
        tree = self.tree
        while i > 0:
            s += tree[i]
            i -= i & -i
        return s


def _sizes_for(trace: Trace, catalog, size_field: str | None) -> list[int] | None:
    if size_field is None:
        return None
    if catalog is None:
        raise ConfigError("catalog", "byte capacities need a catalog")
    return [getattr(catalog[o], size_field) for o in trace.object_id.tolist()]


def stack_distances(trace: Trace, sizes: list[int] | None = None) -> np.ndarray:
    """LRU stack distance of every access (``inf`` for first accesses).

    With ``sizes`` the distance is in bytes, otherwise in objects.
    """
    ids = trace.object_id.tolist()
    n = len(ids)
    fw = _Fenwick(n)
    last: dict[int, int] = {}
    out = np.empty(n, dtype=np.float64)
    for i, oid in enumerate(ids):
        w = 1 if sizes is None else sizes[i]
        p = last.get(oid)
        if p is None:
            out[i] = INF
        else:
            out[i] = fw.prefix(i) - fw.prefix(p + 1) + w
            fw.add(p, -w)
        fw.add(i, w)
        last[oid] = i
    return out


def lru_misses(trace: Trace, capacities, sizes=None) -> list[int]:
    d = stack_distances(trace, sizes)
    return [int(np.count_nonzero(d > c)) for c in capacities]


def next_use(ids: list[int]) -> list[int]:
    n = len(ids)
    nxt = [n] * n
    seen: dict[int, int] = {}
    for i in range(n - 1, -1, -1):
        nxt[i] = seen.get(ids[i], n)
        seen[ids[i]] = i
    return nxt


def belady_misses(trace: Trace, capacity, sizes: dict[int, int] | None = None) -> int:
    """Misses of farthest-next-use eviction at one capacity.

    In object units this is Belady's MIN and is optimal. With ``sizes``
    (object id -> bytes) the same rule evicts until the new object fits,
    which is a heuristic rather than an optimum when sizes differ.
    """
    ids = trace.object_id.tolist()
    size_of = (lambda _o: 1) if sizes is None else sizes.__getitem__
    return _belady(ids, next_use(ids), capacity, size_of)


def _belady(ids, nxt, capacity, size_of) -> int:
    cached: dict[int, int] = {}
    used = 0
    heap: list[tuple[int, int]] = []
    misses = 0
    for i, oid in enumerate(ids):
        if oid in cached:
            cached[oid] = nxt[i]
            heapq.heappush(heap, (-nxt[i], oid))
            continue
        misses += 1
        w = size_of(oid)
        if w > capacity:
            continue
        while used + w > capacity:
            neg, victim = heapq.heappop(heap)
            if cached.get(victim) != -neg:
                continue
            del cached[victim]
            used -= size_of(victim)
        cached[oid] = nxt[i]
        used += w
        heapq.heappush(heap, (-nxt[i], oid))
    return misses


def lru_misses_reference(ids, capacity: int) -> int:
    """Plain OrderedDict LRU in object units; slow, used as a test oracle."""
    cache: OrderedDict = OrderedDict()
    misses = 0
    for oid in ids:
        if oid in cache:
            cache.move_to_end(oid)
            continue
        misses += 1
        if capacity <= 0:
            continue
        cache[oid] = True
        if len(cache) > capacity:
            cache.popitem(last=False)
    return misses


def miss_ratio_curve(
    trace: Trace,
    capacities,
    policy: str = "lru",
    catalog: dict[int, ObjectMeta] | None = None,
    size_field: str | None = None,
) -> list[tuple[float, float]]:
    """Return ``[(capacity, miss_ratio), ...]``.

    Capacities are in objects unless ``size_field`` names an
    :class:`ObjectMeta` attribute (``"image_bytes"`` or ``"latent_bytes"``),
    in which case they are bytes and sizes come from ``catalog``.
    """
    caps = list(capacities)
    if any(c <= 0 for c in caps):
        raise ConfigError("capacities", "must be positive")
    if any(b < a for a, b in zip(caps, caps[1:])):
        raise ConfigError("capacities", "must be ascending")
    n = len(trace)
    if n == 0:
        return [(c, 0.0) for c in caps]
    policy = policy.lower()
    if policy == "lru":
        sizes = _sizes_for(trace, catalog, size_field)
        misses = lru_misses(trace, caps, sizes)
    elif policy == "belady":
        ids = trace.object_id.tolist()
        nxt = next_use(ids)
        if size_field is None:
            size_of = lambda _oid: 1  # noqa: E731
        else:
            if catalog is None:
                raise ConfigError("catalog", "byte capacities need a catalog")
            size_of = lambda oid: getattr(catalog[oid], size_field)  # noqa: E731
        misses = [_belady(ids, nxt, c, size_of) for c in caps]
    else:
        raise ConfigError("policy", f"unknown policy {policy!r}")
    return [(c, m / n) for c, m in zip(caps, misses)]

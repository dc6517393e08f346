"""Frontend routing: consistent-hash ownership, spillover and coalescing."""

from __future__ import annotations

import bisect
import json
import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def fmix64(k: int) -> int:
    """MurmurHash3 64-bit finalizer."""
    k ^= k >> 33
    k = (k * 0xFF51AFD7ED558CCD) & _MASK64
    k ^= k >> 33
    k = (k * 0xC4CEB9FE1A85EC53) & _MASK64
    k ^= k >> 33
    return k


def hash64(data: bytes) -> int:
    # FNV-1a alone leaves the trailing bytes poorly mixed into the high
    # bits, which clusters vnode points; the finalizer spreads them.
    return fmix64(fnv1a64(data))


def object_hash(object_id: int) -> int:
    return hash64(struct.pack("<Q", object_id))


def vnode_hash(node_id: int, vnode: int) -> int:
    return hash64(struct.pack("<QI", node_id, vnode))


class Ring:
    """Consistent-hash ring with ``vnodes_per_node`` points per node."""

    def __init__(self, nodes: Iterable[int], vnodes_per_node: int = 128):
        self.nodes = sorted(set(int(n) for n in nodes))
        if vnodes_per_node < 1:
            raise ValueError("vnodes_per_node must be >= 1")
        self.vnodes_per_node = vnodes_per_node
        pts = [(vnode_hash(n, v), n) for n in self.nodes for v in range(vnodes_per_node)]
        pts.sort()
        self.points = pts
        self._keys = [p[0] for p in pts]

    def __len__(self):
        return len(self.nodes)

    def with_node(self, node_id: int) -> "Ring":
        return Ring(self.nodes + [node_id], self.vnodes_per_node)

    def owner_of(self, object_id: int) -> int:
        if not self.points:
            raise ValueError("empty ring")
        i = bisect.bisect_left(self._keys, object_hash(object_id))
        if i == len(self._keys):
            i = 0
        return self.points[i][1]

    def layout(self) -> dict:
        out = {str(n): [] for n in self.nodes}
        for h, n in self.points:
            out[str(n)].append(h)
        return {"vnodes_per_node": self.vnodes_per_node, "points": out}

    def layout_json(self) -> str:
        return json.dumps(self.layout(), indent=1, sort_keys=True)


def owner_of(ring: Ring, object_id: int) -> int:
    return ring.owner_of(object_id)


@dataclass(frozen=True)
class RouteDecision:
    owner_node: int
    executor_node: int
    spilled: bool
    writeback_required: bool


def route(ring: Ring, object_id: int, queue_depths: Mapping[int, int], theta: float = math.inf) -> RouteDecision:
    """Dispatch to the owner unless its depth has reached ``theta``; then
    to the globally least-loaded node (ties to the lowest id)."""
    owner = ring.owner_of(object_id)
    if queue_depths[owner] < theta:
        return RouteDecision(owner, owner, False, False)
    executor = min(ring.nodes, key=lambda n: (queue_depths[n], n))
    spilled = executor != owner
    return RouteDecision(owner, executor, spilled, spilled)


class Role(str, Enum):
    LEADER = "leader"
    FOLLOWER = "follower"


@dataclass
class InFlightMap:
    """Object id -> request ids waiting on the one in-flight job."""

    entries: dict[int, list] = field(default_factory=dict)

    def __contains__(self, object_id):
        return object_id in self.entries

    def __len__(self):
        return len(self.entries)

    def begin(self, object_id: int, request_id) -> Role:
        waiters = self.entries.get(object_id)
        if waiters is None:
            self.entries[object_id] = [request_id]
            return Role.LEADER
        waiters.append(request_id)
        return Role.FOLLOWER

    def complete(self, object_id: int) -> list:
        try:
            return self.entries.pop(object_id)
        except KeyError:
            raise KeyError(f"no in-flight ticket for object {object_id}") from None


def coalesce_begin(inflight: InFlightMap, object_id: int, request_id) -> Role:
    return inflight.begin(object_id, request_id)


def coalesce_complete(inflight: InFlightMap, object_id: int) -> list:
    return inflight.complete(object_id)

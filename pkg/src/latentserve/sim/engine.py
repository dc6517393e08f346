"""Discrete-event replay of a trace through router, caches, tuners and GPUs.

Virtual time is in float milliseconds. Trace arrivals are merged with a
heap of internal events (fetch completion, transfer completion, GPU
completion); internal events due at or before an arrival are processed
first, and ties inside the heap break on insertion order, so a run is a
pure function of (trace, catalog, config).

Request paths:

* image hit: ``net``
* latent hit: ``queue + decode + net`` (a spilled latent hit first pays
  the intra-cluster transfer, recorded as its fetch stage)
* full miss: ``fetch + queue + decode + net``
* coalesced follower: waits for the leader's result, then ``net``; the
  wait is recorded in the queue stage
* ImgStore miss: ``fetch * image_bytes / latent_bytes + net``
* DecodeAll: every leader is a full miss with no cache

Cache state changes (lookup, admission, promotion) are applied on the
owner node at arrival time; the in-flight map makes later arrivals for
the same object wait on the running job instead of observing a cache hit
early.
"""

from __future__ import annotations

import heapq
import io
import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..dual_cache import DualCache, DualCacheConfig, OutcomeKind
from ..errors import UnknownObjectError
from ..router import InFlightMap, Ring, Role, route
from ..trace_kit.records import ObjectMeta, Trace
from ..tuner import LatencyKind, Tuner, TunerConfig, WindowRecord, expected_latency, scaled_window
from .config import ClusterConfig, Policy

IMAGE_HIT, LATENT_HIT, FULL_MISS, COALESCED = 0, 1, 2, 3
OUTCOME_NAMES = ("image_hit", "latent_hit", "full_miss", "coalesced")
REQUEST_CSV_HEADER = "req_idx,ts_ms,object_id,outcome,queue_ms,fetch_ms,decode_ms,net_ms,total_ms,node,spilled"

_EV_FETCH, _EV_XFER, _EV_GPU = 0, 1, 2


class _Job:
    __slots__ = (
        "oid", "leader", "owner", "executor", "spilled", "fetch_ms",
        "t_enqueue", "t_start", "gpu", "background", "cloud_fetch",
    )

    def __init__(self, oid, leader, owner, executor, spilled, fetch_ms, background=False):
        self.oid = oid
        self.leader = leader
        self.owner = owner
        self.executor = executor
        self.spilled = spilled
        self.fetch_ms = fetch_ms
        self.t_enqueue = 0.0
        self.t_start = 0.0
        self.gpu = -1
        self.background = background
        self.cloud_fetch = False


class _Gpu:
    __slots__ = ("queue", "busy")

    def __init__(self):
        self.queue: deque = deque()
        self.busy = False

    @property
    def depth(self) -> int:
        return len(self.queue) + self.busy


class _Node:
    __slots__ = ("idx", "cache", "tuner", "gpus", "win_cost", "decodes", "alphas")

    def __init__(self, idx, cache, tuner, n_gpus):
        self.idx = idx
        self.cache = cache
        self.tuner = tuner
        self.gpus = [_Gpu() for _ in range(n_gpus)]
        self.win_cost = 0.0
        self.decodes = 0
        self.alphas = [] if cache is None else [cache.alpha]

    def depth(self) -> int:
        return min(g.depth for g in self.gpus)


@dataclass
class SimWindow:
    node: int
    record: WindowRecord
    # mean of decode + fetch stage over the window's cache lookups
    measured_cost_ms: float
    t_end_ms: float

    @property
    def expected_cost_ms(self) -> float:
        r = self.record
        return expected_latency(r.rates, r.t_decode, r.t_fetch)


def _pct(x: np.ndarray, q: float) -> float:
    return float(np.percentile(x, q)) if len(x) else 0.0


@dataclass
class SimReport:
    policy: str
    config: dict
    n_requests: int
    warmup_requests: int
    # per-request columns, all requests including warmup
    ts_ms: np.ndarray = field(repr=False)
    object_id: np.ndarray = field(repr=False)
    outcome: np.ndarray = field(repr=False)
    queue_ms: np.ndarray = field(repr=False)
    fetch_ms: np.ndarray = field(repr=False)
    decode_ms: np.ndarray = field(repr=False)
    net_ms: np.ndarray = field(repr=False)
    total_ms: np.ndarray = field(repr=False)
    node: np.ndarray = field(repr=False)
    spilled: np.ndarray = field(repr=False)
    # GPU queue wait of every measured request that ran a GPU job
    gpu_wait_ms: np.ndarray = field(repr=False)
    per_node_decodes: list[int] = field(default_factory=list)
    alpha_trajectory: list[list[float]] = field(default_factory=list)
    windows: list[SimWindow] = field(default_factory=list, repr=False)
    n_fetches: int = 0
    n_decodes: int = 0
    n_spilled: int = 0
    n_writebacks: int = 0
    n_promotions: int = 0

    @property
    def measured(self) -> slice:
        return slice(self.warmup_requests, self.n_requests)

    @property
    def latencies(self) -> np.ndarray:
        return self.total_ms[self.measured]

    @property
    def mean_ms(self) -> float:
        x = self.latencies
        return float(x.mean()) if len(x) else 0.0

    def percentile(self, q: float) -> float:
        return _pct(self.latencies, q)

    @property
    def p99_ms(self) -> float:
        return self.percentile(99)

    def outcome_counts(self) -> dict[str, int]:
        oc = self.outcome[self.measured]
        return {name: int(np.count_nonzero(oc == k)) for k, name in enumerate(OUTCOME_NAMES)}

    def outcome_fractions(self) -> dict[str, float]:
        """Fractions over cache lookups; coalesced followers are excluded."""
        c = self.outcome_counts()
        n = c["image_hit"] + c["latent_hit"] + c["full_miss"]
        if n == 0:
            return {k: 0.0 for k in OUTCOME_NAMES[:3]}
        return {k: c[k] / n for k in OUTCOME_NAMES[:3]}

    def stage_means(self) -> dict[str, float]:
        m = self.measured
        out = {}
        for name in ("queue_ms", "fetch_ms", "decode_ms", "net_ms"):
            x = getattr(self, name)[m]
            out[name] = float(x.mean()) if len(x) else 0.0
        return out

    def queue_wait_stats(self) -> dict[str, float]:
        w = self.gpu_wait_ms
        return {
            "n": int(len(w)),
            "mean_ms": float(w.mean()) if len(w) else 0.0,
            "p50_ms": _pct(w, 50),
            "p95_ms": _pct(w, 95),
            "p99_ms": _pct(w, 99),
        }

    def summary(self) -> dict:
        return {
            "policy": self.policy,
            "n_requests": self.n_requests,
            "warmup_requests": self.warmup_requests,
            "mean_ms": self.mean_ms,
            "p50_ms": self.percentile(50),
            "p95_ms": self.percentile(95),
            "p99_ms": self.percentile(99),
            "outcome_counts": self.outcome_counts(),
            "outcome_fractions": self.outcome_fractions(),
            "stage_means_ms": self.stage_means(),
            "gpu_queue_wait": self.queue_wait_stats(),
            "per_node_decodes": list(self.per_node_decodes),
            "n_fetches": self.n_fetches,
            "n_decodes": self.n_decodes,
            "n_spilled": self.n_spilled,
            "n_writebacks": self.n_writebacks,
            "n_promotions": self.n_promotions,
            "final_alpha": [a[-1] for a in self.alpha_trajectory],
            "n_windows": len(self.windows),
        }

    def to_json(self, extra: dict | None = None) -> str:
        d = {"summary": self.summary(), "config": self.config}
        d["alpha_trajectory"] = self.alpha_trajectory
        if extra:
            d.update(extra)
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    def requests_csv(self, comment: str | None = None) -> str:
        buf = io.StringIO()
        if comment:
            for line in comment.splitlines():
                buf.write(f"# {line}\n")
        buf.write(REQUEST_CSV_HEADER + "\n")
        cols = zip(
            self.ts_ms.tolist(), self.object_id.tolist(), self.outcome.tolist(),
            self.queue_ms.tolist(), self.fetch_ms.tolist(), self.decode_ms.tolist(),
            self.net_ms.tolist(), self.total_ms.tolist(), self.node.tolist(), self.spilled.tolist(),
        )
        for i, (ts, oid, oc, q, f, d, n, t, nd, sp) in enumerate(cols):
            buf.write(
                f"{i},{ts!r},{oid},{OUTCOME_NAMES[oc]},{q!r},{f!r},{d!r},{n!r},{t!r},{nd},{int(sp)}\n"
            )
        return buf.getvalue()

    def windows_csv(self, comment: str | None = None) -> str:
        buf = io.StringIO()
        if comment:
            for line in comment.splitlines():
                buf.write(f"# {line}\n")
        buf.write(
            "node,window_idx,alpha,MR_img,MR_lat,delta_img,delta_lat,D,T_decode,T_fetch,"
            "new_alpha,measured_cost_ms,expected_cost_ms\n"
        )
        for w in self.windows:
            r = w.record
            buf.write(
                f"{w.node},{r.csv_row()},{r.new_alpha!r},{w.measured_cost_ms!r},{w.expected_cost_ms!r}\n"
            )
        return buf.getvalue()


def check_catalog(trace: Trace, catalog: dict[int, ObjectMeta]) -> None:
    for oid in np.unique(trace.object_id).tolist():
        if oid not in catalog:
            raise UnknownObjectError(oid)


def run(trace: Trace, catalog: dict[int, ObjectMeta], cfg: ClusterConfig) -> SimReport:
    """Replay ``trace`` through a simulated cluster."""
    cfg = cfg.validate()
    if not trace.is_sorted():
        raise ValueError("trace must be sorted by ts_ms")
    check_catalog(trace, catalog)
    return _Sim(trace, catalog, cfg).run()


class _Sim:
    def __init__(self, trace: Trace, catalog, cfg: ClusterConfig):
        self.trace = trace
        self.catalog = catalog
        self.cfg = cfg
        self.policy = cfg.policy
        lat = cfg.latency
        self.net = float(lat.net_transfer_ms)
        self.dec = float(lat.decode_ms)
        self.xfer = float(lat.intra_cluster_transfer_ms)
        self.rng = np.random.default_rng(cfg.seed)
        self.sample_fetch = lat.fetch_sampler(self.rng)
        self.ring = Ring(range(cfg.n_nodes), cfg.vnodes_per_node)
        self.inflight = InFlightMap()
        self.window = cfg.window or scaled_window(len(trace))
        self.nodes = [self._make_node(i) for i in range(cfg.n_nodes)]
        self.heap: list = []
        self.seq = 0
        self._owner: dict[int, int] = {}
        # per-object leader job, for followers
        self.jobs: dict[int, _Job] = {}

        n = len(trace)
        self.n = n
        self.arrival = trace.ts_ms.astype(np.float64) * cfg.time_scale
        self.outcome = np.zeros(n, dtype=np.int8)
        self.q = np.zeros(n)
        self.f = np.zeros(n)
        self.d = np.zeros(n)
        self.nt = np.zeros(n)
        self.node_of = np.zeros(n, dtype=np.int32)
        self.spilled = np.zeros(n, dtype=bool)
        self.warmup = int(math.floor(cfg.warmup_fraction * n))
        self.gpu_waits: list[float] = []
        self.n_fetches = self.n_decodes = self.n_spilled = 0
        self.n_writebacks = self.n_promotions = 0
        self.windows: list[SimWindow] = []

    def _make_node(self, idx) -> _Node:
        cfg = self.cfg
        cache = tuner = None
        if self.policy.has_dual_cache or self.policy is Policy.IMG_STORE:
            pinned = 1.0 if self.policy is Policy.IMG_STORE else cfg.pinned_alpha()
            alpha = cfg.alpha if pinned is None else pinned
            cache = DualCache(
                DualCacheConfig(cfg.per_node_cache_bytes, alpha, cfg.tail_fraction, cfg.promotion_threshold),
                on_insert=self._check_pinning(idx),
            )
        if self.policy.has_dual_cache:
            t = cfg.tuner
            bounds = t.alpha_bounds if pinned is None else (pinned, pinned)
            tuner = Tuner(
                TunerConfig(self.window, t.step, t.ewma_weight, bounds, t.normalize_gradient),
                alpha,
                prior_decode=cfg.latency.decode_ms,
                prior_fetch=cfg.latency.fetch_ms,
            )
        return _Node(idx, cache, tuner, cfg.gpus_per_node)

    def _check_pinning(self, node_idx):
        def hook(oid, _tier):
            if self.owner(oid) != node_idx:
                raise AssertionError(f"object {oid} inserted on node {node_idx}, owner is {self.owner(oid)}")
        return hook

    def owner(self, oid) -> int:
        o = self._owner.get(oid)
        if o is None:
            o = self._owner[oid] = self.ring.owner_of(oid)
        return o

    # -- event plumbing -------------------------------------------------------

    def push(self, t, kind, job):
        heapq.heappush(self.heap, (t, self.seq, kind, job))
        self.seq += 1

    def depths(self) -> dict[int, int]:
        return {n.idx: n.depth() for n in self.nodes}

    def route(self, oid):
        if math.isinf(self.cfg.theta):
            o = self.owner(oid)
            return o, o, False
        rd = route(self.ring, oid, self.depths(), self.cfg.theta)
        return rd.owner_node, rd.executor_node, rd.spilled

    def enqueue(self, t, job: _Job):
        node = self.nodes[job.executor]
        gi = min(range(len(node.gpus)), key=lambda k: (node.gpus[k].depth, k))
        gpu = node.gpus[gi]
        job.gpu = gi
        job.t_enqueue = t
        if gpu.busy:
            gpu.queue.append(job)
        else:
            self.start(t, node, gpu, job)

    def start(self, t, node: _Node, gpu: _Gpu, job: _Job):
        gpu.busy = True
        job.t_start = t
        self.push(t + self.dec, _EV_GPU, job)

    def handle(self, t, kind, job: _Job):
        if kind == _EV_FETCH:
            if job.cloud_fetch:
                tuner = self.nodes[job.owner].tuner
                if tuner is not None:
                    tuner.observe_latency(LatencyKind.FETCH, job.fetch_ms)
            if self.policy is Policy.IMG_STORE:
                self.finish(t, job)
            else:
                self.enqueue(t, job)
        elif kind == _EV_XFER:
            self.enqueue(t, job)
        else:
            node = self.nodes[job.executor]
            gpu = node.gpus[job.gpu]
            node.decodes += 1
            self.n_decodes += 1
            wait = job.t_start - job.t_enqueue
            tuner = self.nodes[job.owner].tuner
            if tuner is not None:
                sample = self.dec + wait if self.cfg.observe_queue_wait else self.dec
                tuner.observe_latency(LatencyKind.DECODE, sample)
            gpu.busy = False
            if gpu.queue:
                self.start(t, node, gpu, gpu.queue.popleft())
            if job.background:
                return
            if job.spilled:
                # write-back to the owner, off the critical path
                self.n_writebacks += 1
            i = job.leader
            self.q[i] = wait
            if i >= self.warmup:
                self.gpu_waits.append(wait)
            self.finish(t, job)

    def finish(self, t, job: _Job):
        waiters = self.inflight.complete(job.oid)
        del self.jobs[job.oid]
        for r in waiters:
            if r == job.leader:
                continue
            self.q[r] = t - self.arrival[r]

    # -- arrivals -----------------------------------------------------------

    def arrive(self, i: int, t: float, oid: int):
        self.nt[i] = self.net
        if oid in self.inflight:
            self.inflight.begin(oid, i)
            self.outcome[i] = COALESCED
            lead = self.jobs[oid]
            self.node_of[i] = lead.executor
            return
        p = self.policy
        meta = self.catalog[oid]
        if p is Policy.DECODE_ALL:
            self.full_miss(i, t, oid, meta, None)
        elif p is Policy.IMG_STORE:
            self.img_store(i, t, oid, meta)
        else:
            self.dual(i, t, oid, meta)

    def leader(self, i, oid, job: _Job):
        role = self.inflight.begin(oid, i)
        assert role is Role.LEADER
        self.jobs[oid] = job

    def img_store(self, i, t, oid, meta):
        owner = self.owner(oid)
        node = self.nodes[owner]
        self.node_of[i] = owner
        out = node.cache.lookup(oid, meta)
        if out.kind is OutcomeKind.IMAGE_HIT:
            self.outcome[i] = IMAGE_HIT
            return
        self.outcome[i] = FULL_MISS
        node.cache.admit_image(oid, meta)
        f = self.sample_fetch() * (meta.image_bytes / meta.latent_bytes)
        self.f[i] = f
        self.n_fetches += 1
        job = _Job(oid, i, owner, owner, False, f)
        self.leader(i, oid, job)
        self.push(t + f, _EV_FETCH, job)

    def full_miss(self, i, t, oid, meta, node: _Node | None):
        owner, ex, spilled = self.route(oid)
        self.outcome[i] = FULL_MISS
        self.node_of[i] = ex
        self.spilled[i] = spilled
        self.n_spilled += spilled
        f = self.sample_fetch()
        self.f[i] = f
        self.d[i] = self.dec
        self.n_fetches += 1
        job = _Job(oid, i, owner, ex, spilled, f)
        job.cloud_fetch = True
        self.leader(i, oid, job)
        self.push(t + f, _EV_FETCH, job)
        return f

    def dual(self, i, t, oid, meta):
        owner = self.owner(oid)
        node = self.nodes[owner]
        cache = node.cache
        out = cache.lookup(oid, meta)
        cost = 0.0
        if out.kind is OutcomeKind.IMAGE_HIT:
            self.outcome[i] = IMAGE_HIT
            self.node_of[i] = owner
        elif out.kind is OutcomeKind.LATENT_HIT:
            self.outcome[i] = LATENT_HIT
            if out.promoted:
                self.n_promotions += 1
            _, ex, spilled = self.route(oid)
            self.node_of[i] = ex
            self.spilled[i] = spilled
            self.n_spilled += spilled
            self.d[i] = self.dec
            job = _Job(oid, i, owner, ex, spilled, 0.0)
            self.leader(i, oid, job)
            if spilled:
                self.f[i] = self.xfer
                job.fetch_ms = self.xfer
                self.push(t + self.xfer, _EV_XFER, job)
            else:
                self.enqueue(t, job)
            cost = self.d[i] + self.f[i]
            if out.promoted and self.cfg.promotion_offpath:
                self.enqueue(t, _Job(oid, -1, owner, owner, False, 0.0, background=True))
        else:
            cache.admit(oid, meta)
            f = self.full_miss(i, t, oid, meta, node)
            cost = self.dec + f
        node.win_cost += cost
        if cache.counters.total_requests >= self.window:
            self.end_window(t, node)

    def end_window(self, t, node: _Node):
        counters = node.cache.snapshot_and_reset_counters()
        rec = node.tuner.end_window(counters)
        measured = node.win_cost / counters.total_requests
        node.win_cost = 0.0
        if rec.new_alpha != node.cache.alpha:
            node.cache.set_alpha(rec.new_alpha)
        node.alphas.append(node.cache.alpha)
        self.windows.append(SimWindow(node.idx, rec, measured, t))

    # -- main loop ------------------------------------------------------------

    def run(self) -> SimReport:
        heap = self.heap
        arrival = self.arrival.tolist()
        ids = self.trace.object_id.tolist()
        for i in range(self.n):
            t = arrival[i]
            while heap and heap[0][0] <= t:
                te, _, kind, job = heapq.heappop(heap)
                self.handle(te, kind, job)
            self.arrive(i, t, ids[i])
        while heap:
            te, _, kind, job = heapq.heappop(heap)
            self.handle(te, kind, job)
        assert not self.inflight, "in-flight tickets left after drain"

        total = self.q + self.f + self.d + self.nt
        cfg = self.cfg
        return SimReport(
            policy=cfg.policy.value,
            config=cfg.to_dict() | {"window_effective": self.window},
            n_requests=self.n,
            warmup_requests=self.warmup,
            ts_ms=self.trace.ts_ms.copy(),
            object_id=self.trace.object_id.copy(),
            outcome=self.outcome,
            queue_ms=self.q,
            fetch_ms=self.f,
            decode_ms=self.d,
            net_ms=self.nt,
            total_ms=total,
            node=self.node_of,
            spilled=self.spilled,
            gpu_wait_ms=np.asarray(self.gpu_waits, dtype=np.float64),
            per_node_decodes=[n.decodes for n in self.nodes],
            alpha_trajectory=[n.alphas for n in self.nodes if n.tuner is not None],
            windows=self.windows,
            n_fetches=self.n_fetches,
            n_decodes=self.n_decodes,
            n_spilled=self.n_spilled,
            n_writebacks=self.n_writebacks,
            n_promotions=self.n_promotions,
        )

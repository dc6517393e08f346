"""Ablation drivers: static-alpha sweep, spillover comparison and the
shadow-replay check of the gradient sign."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from ..dual_cache import DualCache, DualCacheConfig, OutcomeKind
from ..errors import ConfigError
from ..trace_kit.records import ObjectMeta, Trace
from ..tuner import gradient_D, gradient_D_normalized, rates_from_counters, scaled_window, step_alpha
from .config import ClusterConfig, Policy
from .engine import SimReport, run


def _csv(header: str, rows, comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    buf.write(header + "\n")
    for r in rows:
        buf.write(",".join(_fmt(v) for v in r) + "\n")
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


# -- static alpha sweep -------------------------------------------------------

@dataclass
class SweepRow:
    alpha: float
    mean_ms: float
    p99_ms: float
    report: SimReport = field(repr=False)


def sweep_alpha(trace: Trace, catalog, cfg: ClusterConfig, alphas) -> list[SweepRow]:
    """One static-alpha run per value; alpha 0 and 1 are the single-format caches."""
    rows = []
    for a in alphas:
        if not 0.0 <= a <= 1.0:
            raise ConfigError("alphas", f"alpha {a} outside [0, 1]")
        rep = run(trace, catalog, cfg.replace(policy=Policy.LB_STATIC, alpha=float(a)))
        rows.append(SweepRow(float(a), rep.mean_ms, rep.p99_ms, rep))
    return rows


def sweep_csv(rows: list[SweepRow], comment: str | None = None) -> str:
    return _csv("alpha,mean_ms,p99_ms", [(r.alpha, r.mean_ms, r.p99_ms) for r in rows], comment)


# -- spillover ------------------------------------------------------------------

@dataclass
class SpillRow:
    theta: float
    mean_ms: float
    p99_ms: float
    queue_wait_mean_ms: float
    queue_wait_p99_ms: float
    spilled: int
    report: SimReport = field(repr=False)


def compare_spillover(trace: Trace, catalog, cfg: ClusterConfig, thetas) -> list[SpillRow]:
    """Run once per threshold; include ``inf`` for the no-spillover baseline."""
    rows = []
    for th in thetas:
        rep = run(trace, catalog, cfg.replace(theta=float(th)))
        qw = rep.queue_wait_stats()
        rows.append(SpillRow(float(th), rep.mean_ms, rep.p99_ms, qw["mean_ms"], qw["p99_ms"], rep.n_spilled, rep))
    return rows


def spillover_csv(rows: list[SpillRow], comment: str | None = None) -> str:
    return _csv(
        "theta,mean_ms,p99_ms,queue_wait_mean_ms,queue_wait_p99_ms,spilled",
        [(r.theta, r.mean_ms, r.p99_ms, r.queue_wait_mean_ms, r.queue_wait_p99_ms, r.spilled) for r in rows],
        comment,
    )


# -- gradient sign vs shadow replay -------------------------------------------

def _replay(cache: DualCache, ids, catalog, t_decode, t_fetch) -> float:
    """Serve ``ids`` on ``cache`` (admitting on full miss); mean cost in ms."""
    cost = 0.0
    for oid in ids:
        meta = catalog[oid]
        k = cache.lookup(oid, meta).kind
        if k is OutcomeKind.LATENT_HIT:
            cost += t_decode
        elif k is OutcomeKind.FULL_MISS:
            cost += t_decode + t_fetch
            cache.admit(oid, meta)
    return cost / len(ids)


@dataclass
class GradientWindow:
    window_idx: int
    alpha: float
    D: float
    cost_lo: float
    cost_mid: float
    cost_hi: float
    rates: object = field(default=None, repr=False)

    @property
    def predicted(self) -> int:
        """+1 if D favors alpha + step, -1 for alpha - step, 0 if D = 0."""
        return -int(np.sign(self.D))

    @property
    def agrees(self) -> bool:
        """Strict: the predicted neighbor must be cheaper than the other one."""
        if self.predicted > 0:
            return self.cost_hi < self.cost_lo
        if self.predicted < 0:
            return self.cost_lo < self.cost_hi
        return False


@dataclass
class GradientCheck:
    windows: list[GradientWindow]
    step: float

    def selected(self, quantile: float = 0.5) -> list[GradientWindow]:
        """Windows whose |D| is at or above the given magnitude quantile."""
        ws = [w for w in self.windows if w.D != 0]
        if not ws:
            return []
        cut = float(np.quantile([abs(w.D) for w in ws], quantile))
        return [w for w in ws if abs(w.D) >= cut]

    def agreement(self, quantile: float = 0.5) -> float:
        ws = self.selected(quantile)
        if not ws:
            return float("nan")
        return sum(w.agrees for w in ws) / len(ws)

    def to_csv(self, comment: str | None = None) -> str:
        return _csv(
            "window_idx,alpha,D,cost_lo,cost_mid,cost_hi,agrees",
            [(w.window_idx, w.alpha, w.D, w.cost_lo, w.cost_mid, w.cost_hi, int(w.agrees)) for w in self.windows],
            comment,
        )


def gradient_agreement(
    trace: Trace,
    catalog: dict[int, ObjectMeta],
    capacity_bytes: int,
    *,
    alpha: float = 0.5,
    step: float = 0.005,
    window: int | None = None,
    tail_fraction: float = 0.10,
    promotion_threshold: int = 8,
    t_decode: float = 40.0,
    t_fetch: float = 140.0,
    adaptive: bool = True,
    shadow_step: float | None = None,
    shadow: str = "snapshot",
    normalize_gradient: bool = False,
) -> GradientCheck:
    """Compare sign(D) with shadow replays of each window at alpha +/- step.

    ``shadow="snapshot"``: one cache serves the trace; at each window start
    its state is copied, the copies are resized to the neighboring alphas
    and replay the window. With ``adaptive`` the main cache follows the
    step rule. This measures the one-window effect of a resize, which
    includes the transient of refilling the grown tier.

    ``shadow="persistent"``: three caches pinned at alpha - step, alpha and
    alpha + step replay the whole trace side by side and are compared
    window by window, measuring the warmed-up neighbor difference. Alpha is
    static in this mode.

    ``shadow_step`` defaults to ``step``. ``normalize_gradient`` scores
    :func:`gradient_D_normalized` instead of the plain gradient.
    """
    if shadow not in ("snapshot", "persistent"):
        raise ConfigError("shadow", f"unknown shadow mode {shadow!r}")
    W = window or scaled_window(len(trace))
    ds = shadow_step or step

    def make(a):
        return DualCache(DualCacheConfig(capacity_bytes, a, tail_fraction, promotion_threshold))

    cache = make(alpha)
    ids = trace.object_id.tolist()
    if shadow == "persistent":
        lo_c, hi_c = make(max(0.0, alpha - ds)), make(min(1.0, alpha + ds))
    out = []
    for k, start in enumerate(range(0, len(ids), W)):
        chunk = ids[start : start + W]
        a = cache.alpha
        if shadow == "snapshot":
            snap = cache.copy()
        cache.snapshot_and_reset_counters()
        mid = _replay(cache, chunk, catalog, t_decode, t_fetch)
        rates = rates_from_counters(cache.snapshot_and_reset_counters())
        if normalize_gradient:
            D = gradient_D_normalized(rates, t_decode, t_fetch, a)
        else:
            D = gradient_D(rates, t_decode, t_fetch)
        if shadow == "persistent":
            costs = [_replay(c, chunk, catalog, t_decode, t_fetch) for c in (lo_c, hi_c)]
        else:
            costs = []
            for na in (max(0.0, a - ds), min(1.0, a + ds)):
                sh = snap.copy()
                sh.set_alpha(na)
                costs.append(_replay(sh, chunk, catalog, t_decode, t_fetch))
            if adaptive:
                cache.set_alpha(step_alpha(a, D, step))
        out.append(GradientWindow(k, a, D, costs[0], mid, costs[1], rates))
    return GradientCheck(out, ds)

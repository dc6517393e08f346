"""Trace statistics: popularity fit, CDFs, age decay and downsampling."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, InsufficientDataError
from .records import Trace
from .synth import MS_PER_DAY

MS_PER_HOUR = 3_600_000


def fit_zipf(trace: Trace) -> float:
    """Rank-frequency Zipf exponent.

    Least-squares slope of ``log(count)`` against ``log(rank)``, negated,
    over ranks whose count is at least 2.
    """
    if len(trace) == 0:
        raise InsufficientDataError("empty trace")
    _, counts = trace.object_counts()
    if len(counts) < 10:
        raise InsufficientDataError(f"need >= 10 distinct objects, got {len(counts)}")
    counts = np.sort(counts)[::-1]
    ranks = np.arange(1, len(counts) + 1)
    keep = counts >= 2
    if keep.sum() < 2:
        raise InsufficientDataError("fewer than 2 objects with count >= 2")
    x = np.log(ranks[keep])
    y = np.log(counts[keep].astype(np.float64))
    slope = np.polyfit(x, y, 1)[0]
    return float(-slope) + 0.0


@dataclass
class TraceStats:
    n_requests: int
    n_objects: int
    # (fraction of objects, cumulative fraction of requests), most popular first
    popularity_cdf: np.ndarray
    share_top_1pct: float
    share_top_10pct: float
    # (interval_ms, cumulative fraction) over distinct interval values
    reaccess_interval_cdf: np.ndarray
    # quartile label -> rate per object per day, indexed by age in days
    per_age_access_rate: dict[str, np.ndarray]

    def summary(self) -> dict:
        iv = self.reaccess_interval_cdf

        def frac_within(ms):
            if len(iv) == 0:
                return None
            i = np.searchsorted(iv[:, 0], ms, side="right")
            return float(iv[i - 1, 1]) if i else 0.0

        return {
            "n_requests": self.n_requests,
            "n_objects": self.n_objects,
            "share_top_1pct": self.share_top_1pct,
            "share_top_10pct": self.share_top_10pct,
            "reaccess_within_1h": frac_within(MS_PER_HOUR),
            "reaccess_within_1d": frac_within(MS_PER_DAY),
        }

    def popularity_csv(self) -> str:
        buf = io.StringIO()
        buf.write("object_fraction,request_fraction\n")
        for x, y in self.popularity_cdf.tolist():
            buf.write(f"{x!r},{y!r}\n")
        return buf.getvalue()

    def reaccess_csv(self) -> str:
        buf = io.StringIO()
        buf.write("interval_ms,cdf\n")
        for x, y in self.reaccess_interval_cdf.tolist():
            buf.write(f"{int(x)},{y!r}\n")
        return buf.getvalue()

    def age_decay_csv(self) -> str:
        buf = io.StringIO()
        labels = list(self.per_age_access_rate)
        buf.write("age_days," + ",".join(labels) + "\n")
        n = max((len(v) for v in self.per_age_access_rate.values()), default=0)
        for a in range(n):
            vals = []
            for lab in labels:
                v = self.per_age_access_rate[lab]
                vals.append(repr(float(v[a])) if a < len(v) else "")
            buf.write(f"{a}," + ",".join(vals) + "\n")
        return buf.getvalue()


def _top_share(sorted_counts: np.ndarray, frac: float) -> float:
    k = math.ceil(len(sorted_counts) * frac)
    return float(sorted_counts[:k].sum() / sorted_counts.sum())


def reaccess_intervals(trace: Trace) -> np.ndarray:
    """Gaps in ms between consecutive accesses to the same object."""
    if len(trace) < 2:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((trace.ts_ms, trace.object_id))
    ids = trace.object_id[order]
    ts = trace.ts_ms[order].astype(np.int64)
    same = ids[1:] == ids[:-1]
    return (ts[1:] - ts[:-1])[same]


def _empirical_cdf(values: np.ndarray) -> np.ndarray:
    if len(values) == 0:
        return np.zeros((0, 2))
    uniq, counts = np.unique(values, return_counts=True)
    return np.column_stack([uniq.astype(np.float64), np.cumsum(counts) / len(values)])


def age_decay(trace: Trace) -> dict[str, np.ndarray]:
    """Mean per-object access rate vs age, split by lifetime-count quartile.

    Age is measured from an object's first access in the trace. The rate at
    age ``a`` divides the accesses made at that age by the number of objects
    in the quartile that were still inside the trace window at that age.
    """
    ids, inverse, counts = np.unique(trace.object_id, return_inverse=True, return_counts=True)
    ts = trace.ts_ms.astype(np.int64)
    first = np.full(len(ids), np.iinfo(np.int64).max)
    np.minimum.at(first, inverse, ts)
    end = int(ts.max())
    age = (ts - first[inverse]) // MS_PER_DAY
    # observable full or partial days per object
    span_days = (end - first) // MS_PER_DAY + 1

    order = np.argsort(counts, kind="stable")
    quart = np.empty(len(ids), dtype=np.int64)
    quart[order] = (np.arange(len(ids)) * 4) // len(ids)
    out = {}
    max_age = int(span_days.max())
    for q in range(4):
        members = quart == q
        if not members.any():
            out[f"q{q + 1}"] = np.zeros(0)
            continue
        hits = np.bincount(age[members[inverse]], minlength=max_age)[:max_age]
        exposure = np.bincount(span_days[members], minlength=max_age + 1)
        # objects observable at age a: span_days > a
        alive = exposure[::-1].cumsum()[::-1][1 : max_age + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            rate = np.where(alive > 0, hits / np.maximum(alive, 1), 0.0)
        out[f"q{q + 1}"] = rate
    return out


def trace_stats(trace: Trace) -> TraceStats:
    if len(trace) == 0:
        raise InsufficientDataError("empty trace")
    _, counts = trace.object_counts()
    sorted_counts = np.sort(counts)[::-1]
    n_obj = len(sorted_counts)
    pop = np.column_stack(
        [np.arange(1, n_obj + 1) / n_obj, np.cumsum(sorted_counts) / sorted_counts.sum()]
    )
    return TraceStats(
        n_requests=len(trace),
        n_objects=n_obj,
        popularity_cdf=pop,
        share_top_1pct=_top_share(sorted_counts, 0.01),
        share_top_10pct=_top_share(sorted_counts, 0.10),
        reaccess_interval_cdf=_empirical_cdf(reaccess_intervals(trace)),
        per_age_access_rate=age_decay(trace),
    )


def downsample(trace: Trace, k_objects: int, seed: int = 0) -> Trace:
    """Keep every access of ``k_objects`` uniformly sampled distinct objects."""
    if k_objects <= 0:
        raise ConfigError("k_objects", "must be >= 1")
    ids = trace.distinct_objects()
    if k_objects > len(ids):
        raise ConfigError("k_objects", f"only {len(ids)} distinct objects in trace")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(ids, size=k_objects, replace=False)
    return trace[np.isin(trace.object_id, chosen)]

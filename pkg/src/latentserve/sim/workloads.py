"""Synthetic workloads for the ablations: regime shifts and hot spots."""

from __future__ import annotations

import numpy as np

from ..router import Ring
from ..trace_kit.records import ObjectMeta, Trace
from ..trace_kit.synth import DEFAULT_IMAGE_BYTES as DEFAULT_IMAGE
from ..trace_kit.synth import DEFAULT_LATENT_BYTES as DEFAULT_LATENT
from ..trace_kit.synth import AliasTable, zipf_weights


def _ids(rng: np.random.Generator, n: int, taken: set[int]) -> np.ndarray:
    out = []
    while len(out) < n:
        for v in rng.integers(1, 2**63, size=n - len(out), dtype=np.int64).tolist():
            if v not in taken:
                taken.add(v)
                out.append(v)
    return np.asarray(out, dtype=np.uint64)


def _zipf_stream(rng, ids: np.ndarray, n: int, exponent: float) -> np.ndarray:
    table = AliasTable(zipf_weights(len(ids), exponent))
    return ids[rng.permutation(len(ids))][table.sample(rng, n)]


def two_regime_trace(
    n_small: int,
    n_large: int,
    requests_per_regime: int,
    zipf_exponent: float = 1.11,
    seed: int = 0,
    step_ms: int = 100,
    image_bytes: int = DEFAULT_IMAGE,
    latent_bytes: int = DEFAULT_LATENT,
) -> tuple[Trace, dict[int, ObjectMeta]]:
    """Zipf traffic over ``n_small`` objects, then over ``n_large`` fresh ones.

    Requests are evenly spaced ``step_ms`` apart.
    """
    rng = np.random.default_rng(seed)
    taken: set[int] = set()
    small = _ids(rng, n_small, taken)
    large = _ids(rng, n_large, taken)
    ids = np.concatenate([
        _zipf_stream(rng, small, requests_per_regime, zipf_exponent),
        _zipf_stream(rng, large, requests_per_regime, zipf_exponent),
    ])
    ts = np.arange(len(ids), dtype=np.uint64) * step_ms
    meta = ObjectMeta(image_bytes, latent_bytes)
    catalog = {int(o): meta for o in np.concatenate([small, large]).tolist()}
    return Trace(ts, ids), catalog


def hotspot_trace(
    n_nodes: int,
    hot_node: int,
    duration_s: float,
    hot_rate_per_s: float,
    background_rate_per_s: float,
    n_objects: int = 200_000,
    zipf_exponent: float = 0.6,
    seed: int = 0,
    vnodes_per_node: int = 128,
    image_bytes: int = DEFAULT_IMAGE,
    latent_bytes: int = DEFAULT_LATENT,
) -> tuple[Trace, dict[int, ObjectMeta]]:
    """Poisson traffic where one node owns a disproportionate share.

    ``hot_rate_per_s`` requests/s go to objects owned by ``hot_node`` and
    ``background_rate_per_s`` to objects spread over the whole ring. A
    large, flat popularity keeps most requests off the image tier, so the
    hot stream turns into decode work on the hot node's GPU.
    """
    rng = np.random.default_rng(seed)
    ring = Ring(range(n_nodes), vnodes_per_node)
    ids = _ids(rng, n_objects, set())
    owners = np.fromiter((ring.owner_of(o) for o in ids.tolist()), dtype=np.int64, count=len(ids))
    hot_ids = ids[owners == hot_node]

    def stream(rate, pool):
        n = int(rng.poisson(rate * duration_s))
        ts = np.sort(rng.uniform(0.0, duration_s * 1000.0, size=n))
        return ts, _zipf_stream(rng, pool, n, zipf_exponent)

    ts_h, id_h = stream(hot_rate_per_s, hot_ids)
    ts_b, id_b = stream(background_rate_per_s, ids)
    ts = np.concatenate([ts_h, ts_b])
    oid = np.concatenate([id_h, id_b])
    order = np.argsort(ts, kind="stable")
    meta = ObjectMeta(image_bytes, latent_bytes)
    catalog = {int(o): meta for o in ids.tolist()}
    return Trace(np.floor(ts[order]).astype(np.uint64), oid[order]), catalog

"""Synthetic workload generator.

Objects get Zipf lifetime popularity (random rank permutation), a
power-law post-birth decay ``(age_days + 1) ** -decay_exponent`` and are
born either at trace start, spread over a prior period, or arrive during
the trace under a linear or compound-growth arrival model.

Generation runs in two vectorised passes: every request first draws its
object from an alias table over the Zipf weights, then draws an age from
that object's decay kernel restricted to the part of its life visible in
the trace window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from ..errors import ConfigError
from .records import ObjectMeta, Trace

MS_PER_DAY = 86_400_000
MIB = 1 << 20

DEFAULT_IMAGE_BYTES = int(1.5 * MIB)
DEFAULT_LATENT_BYTES = int(0.29 * MIB)


@dataclass(frozen=True)
class SizeModel:
    """Per-object sizes. ``kind`` is ``"fixed"`` or ``"lognormal"``.

    The lognormal option draws image sizes with median ``image_bytes`` and
    shape ``sigma``; latent sizes keep the ``latent_bytes / image_bytes``
    ratio, perturbed by a second lognormal of shape ``ratio_sigma``.
    """

    kind: str = "fixed"
    image_bytes: int = DEFAULT_IMAGE_BYTES
    latent_bytes: int = DEFAULT_LATENT_BYTES
    sigma: float = 0.3
    ratio_sigma: float = 0.1

    def validate(self):
        if self.kind not in ("fixed", "lognormal"):
            raise ConfigError("size_model.kind", f"unknown kind {self.kind!r}")
        if not 0 < self.latent_bytes < self.image_bytes:
            raise ConfigError("size_model.latent_bytes", "need 0 < latent_bytes < image_bytes")
        if self.sigma < 0 or self.ratio_sigma < 0:
            raise ConfigError("size_model.sigma", "must be >= 0")

    def draw(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "fixed":
            return (
                np.full(n, self.image_bytes, dtype=np.int64),
                np.full(n, self.latent_bytes, dtype=np.int64),
            )
        img = np.maximum(2, np.round(self.image_bytes * rng.lognormal(0.0, self.sigma, n))).astype(np.int64)
        ratio = (self.latent_bytes / self.image_bytes) * rng.lognormal(0.0, self.ratio_sigma, n)
        ratio = np.clip(ratio, 0.01, 0.99)
        lat = np.clip(np.round(img * ratio), 1, img - 1).astype(np.int64)
        return img, lat


@dataclass(frozen=True)
class SynthConfig:
    n_objects_initial: int = 10_000
    arrival_rate: float = 0.0
    zipf_exponent: float = 1.11
    decay_exponent: float = 1.3
    duration_days: float = 30.0
    requests_per_day: int = 10_000
    seed: int = 0
    size_model: SizeModel = field(default_factory=SizeModel)
    # "linear": arrival_rate objects/day; "cagr": cumulative count grows by
    # (1 + cagr) per 365 days.
    arrival_model: str = "linear"
    cagr: float = 0.127
    # Initial objects are born uniformly in [-initial_age_days, 0].
    initial_age_days: float = 0.0
    n_models: int = 64

    def validate(self) -> "SynthConfig":
        if self.n_objects_initial < 1:
            raise ConfigError("n_objects_initial", "must be >= 1")
        if self.arrival_rate < 0:
            raise ConfigError("arrival_rate", "must be >= 0")
        if not self.zipf_exponent > 0:
            raise ConfigError("zipf_exponent", "must be > 0")
        if self.decay_exponent < 0:
            raise ConfigError("decay_exponent", "must be >= 0")
        if self.duration_days < 1:
            raise ConfigError("duration_days", "must be >= 1")
        if self.requests_per_day < 1:
            raise ConfigError("requests_per_day", "must be >= 1")
        if self.arrival_model not in ("linear", "cagr"):
            raise ConfigError("arrival_model", f"unknown model {self.arrival_model!r}")
        if self.cagr < 0:
            raise ConfigError("cagr", "must be >= 0")
        if self.initial_age_days < 0:
            raise ConfigError("initial_age_days", "must be >= 0")
        if self.n_models < 1:
            raise ConfigError("n_models", "must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "must fit in 64 bits")
        self.size_model.validate()
        return self

    @property
    def n_requests(self) -> int:
        return int(round(self.requests_per_day * self.duration_days))

    def intensity_ratio(self, age_days: float) -> float:
        """Per-object request intensity at ``age_days`` relative to birth."""
        return float((age_days + 1.0) ** -self.decay_exponent)

    def to_dict(self) -> dict:
        return asdict(self)


class AliasTable:
    """Walker/Vose alias table for O(1) categorical draws."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or len(w) == 0 or np.any(w < 0) or not w.sum() > 0:
            raise ValueError("weights must be a non-empty, non-negative vector")
        n = len(w)
        scaled = w * (n / w.sum())
        prob = np.ones(n)
        alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        scaled = scaled.tolist()
        while small and large:
            s = small.pop()
            g = large[-1]
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] = scaled[g] + scaled[s] - 1.0
            if scaled[g] < 1.0:
                large.pop()
                small.append(g)
        # leftovers are 1.0 up to rounding
        self.prob = prob
        self.alias = alias

    def __len__(self):
        return len(self.prob)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.integers(0, len(self.prob), size=size)
        keep = rng.random(size) < self.prob[idx]
        return np.where(keep, idx, self.alias[idx])

    def probabilities(self) -> np.ndarray:
        """Reconstruct the categorical distribution the table encodes."""
        n = len(self.prob)
        p = self.prob / n
        np.add.at(p, self.alias, (1.0 - self.prob) / n)
        return p


def zipf_weights(n: int, exponent: float) -> np.ndarray:
    return np.arange(1, n + 1, dtype=np.float64) ** -exponent


def _birth_days(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    n0 = cfg.n_objects_initial
    if cfg.initial_age_days > 0:
        initial = -rng.uniform(0.0, cfg.initial_age_days, n0)
    else:
        initial = np.zeros(n0)
    T = cfg.duration_days
    if cfg.arrival_model == "linear":
        n_new = int(round(cfg.arrival_rate * T))
        new = np.sort(rng.uniform(0.0, T, n_new)) if n_new else np.zeros(0)
    else:
        g = math.log1p(cfg.cagr)
        n_new = int(math.floor(n0 * math.expm1(g * T / 365.0))) if g > 0 else 0
        k = np.arange(1, n_new + 1, dtype=np.float64)
        new = 365.0 * np.log1p(k / n0) / g if n_new else np.zeros(0)
        new = np.minimum(new, np.nextafter(T, 0))
    return np.concatenate([initial, new])


def sample_decay_age(u, lo, hi, exponent):
    """Inverse-CDF draw of ages in ``[lo, hi)`` with density ``(a+1)^-exponent``."""
    u = np.asarray(u, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if exponent == 0:
        return lo + u * (hi - lo)
    if exponent == 1:
        a = np.log1p(lo)
        b = np.log1p(hi)
        return np.expm1(a + u * (b - a))
    k = 1.0 - exponent
    a = (lo + 1.0) ** k
    b = (hi + 1.0) ** k
    return (a + u * (b - a)) ** (1.0 / k) - 1.0


def _unique_ids(rng: np.random.Generator, n: int) -> np.ndarray:
    ids = rng.integers(1, 2**63, size=n, dtype=np.uint64)
    while len(np.unique(ids)) < n:  # pragma: no cover - astronomically rare
        _, first = np.unique(ids, return_index=True)
        dup = np.setdiff1d(np.arange(n), first)
        ids[dup] = rng.integers(1, 2**63, size=len(dup), dtype=np.uint64)
    return ids


def generate_trace(cfg: SynthConfig) -> tuple[Trace, dict[int, ObjectMeta]]:
    """Generate ``(trace, catalog)``; a pure function of ``cfg``."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    births = _birth_days(cfg, rng)
    n_obj = len(births)

    object_ids = _unique_ids(rng, n_obj)
    ranks = rng.permutation(n_obj) + 1  # 1 = most popular
    model_ids = rng.integers(0, cfg.n_models, size=n_obj).astype(np.uint32)
    versions = rng.integers(1, 5, size=n_obj).astype(np.uint32)
    img, lat = cfg.size_model.draw(rng, n_obj)

    weights = np.asarray(ranks, dtype=np.float64) ** -cfg.zipf_exponent
    table = AliasTable(weights)
    n_req = cfg.n_requests
    obj = table.sample(rng, n_req)

    T = float(cfg.duration_days)
    lo = np.maximum(0.0, -births)[obj]
    hi = (T - births)[obj]
    ages = sample_decay_age(rng.random(n_req), lo, hi, cfg.decay_exponent)
    t_days = births[obj] + ages
    ts = np.floor(np.clip(t_days, 0.0, np.nextafter(T, 0)) * MS_PER_DAY).astype(np.uint64)

    order = np.lexsort((np.arange(n_req), ts))
    obj = obj[order]
    trace = Trace(ts[order], object_ids[obj], model_ids[obj], versions[obj])
    catalog = {
        int(o): ObjectMeta(int(i), int(l))
        for o, i, l in zip(object_ids.tolist(), img.tolist(), lat.tolist())
    }
    return trace, catalog


def zipf_ranks(cfg: SynthConfig) -> dict[int, int]:
    """The configured popularity rank of every object ``generate_trace`` emits."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    births = _birth_days(cfg, rng)
    ids = _unique_ids(rng, len(births))
    ranks = rng.permutation(len(births)) + 1
    return dict(zip(ids.tolist(), ranks.tolist()))


def generation_report(cfg: SynthConfig) -> dict:
    """Summary the generator reports alongside a trace."""
    cfg.validate()
    return {
        "n_requests": cfg.n_requests,
        "zipf_exponent": cfg.zipf_exponent,
        "decay_exponent": cfg.decay_exponent,
        "intensity_ratio_30d": cfg.intensity_ratio(30),
        "intensity_ratio_365d": cfg.intensity_ratio(365),
    }

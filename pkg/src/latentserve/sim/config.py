"""Cluster, policy and latency configuration for the simulator."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..tuner import TunerConfig

GIB = 1 << 30


class Policy(str, Enum):
    IMG_STORE = "ImgStore"
    DECODE_ALL = "DecodeAll"
    LB_IMG_CACHE = "LbImgCache"
    LB_LATENT_CACHE = "LbLatentCache"
    LB_ADAPTIVE = "LbAdaptive"
    # dual cache with alpha pinned at ClusterConfig.alpha (static sweeps)
    LB_STATIC = "LbStatic"

    @classmethod
    def parse(cls, s: str) -> "Policy":
        for p in cls:
            if p.value.lower() == s.lower() or p.name.lower() == s.lower():
                return p
        raise ConfigError("policy", f"unknown policy {s!r}")

    @property
    def has_dual_cache(self) -> bool:
        return self in _DUAL


_DUAL = {Policy.LB_IMG_CACHE, Policy.LB_LATENT_CACHE, Policy.LB_ADAPTIVE, Policy.LB_STATIC}


@dataclass(frozen=True)
class LatencyModel:
    net_transfer_ms: float = 10.0
    decode_ms: float = 40.0
    # constant | lognormal | empirical
    fetch_kind: str = "constant"
    # constant value, or the mean of the lognormal
    fetch_ms: float = 140.0
    fetch_sigma: float = 0.5
    fetch_table: tuple[float, ...] = ()
    intra_cluster_transfer_ms: float = 5.0

    def validate(self) -> "LatencyModel":
        for name in ("net_transfer_ms", "decode_ms", "fetch_ms", "intra_cluster_transfer_ms"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be > 0")
        if self.fetch_kind not in ("constant", "lognormal", "empirical"):
            raise ConfigError("fetch_kind", f"unknown fetch distribution {self.fetch_kind!r}")
        if self.fetch_kind == "lognormal" and not self.fetch_sigma > 0:
            raise ConfigError("fetch_sigma", "must be > 0")
        if self.fetch_kind == "empirical":
            if not self.fetch_table:
                raise ConfigError("fetch_table", "empirical fetch needs a non-empty table")
            if min(self.fetch_table) <= 0:
                raise ConfigError("fetch_table", "entries must be > 0")
        return self

    @property
    def is_constant(self) -> bool:
        return self.fetch_kind == "constant"

    def fetch_sampler(self, rng: np.random.Generator):
        """Return a zero-argument callable drawing one fetch time in ms."""
        if self.fetch_kind == "constant":
            v = float(self.fetch_ms)
            return lambda: v
        if self.fetch_kind == "lognormal":
            # parameterized by the mean so that fetch_ms keeps its meaning
            sigma = self.fetch_sigma
            mu = math.log(self.fetch_ms) - 0.5 * sigma * sigma
            return lambda: float(rng.lognormal(mu, sigma))
        table = np.asarray(self.fetch_table, dtype=np.float64)
        return lambda: float(table[rng.integers(len(table))])


@dataclass(frozen=True)
class ClusterConfig:
    n_nodes: int = 3
    per_node_cache_bytes: int = 2 * GIB
    theta: float = math.inf
    gpus_per_node: int = 1
    policy: Policy = Policy.LB_ADAPTIVE
    # initial alpha for LbAdaptive, pinned alpha for LbStatic
    alpha: float = 0.5
    tuner: TunerConfig = field(default_factory=TunerConfig)
    # None -> scaled to trace length
    window: int | None = None
    tail_fraction: float = 0.10
    promotion_threshold: int = 8
    latency: LatencyModel = field(default_factory=LatencyModel)
    seed: int = 0
    warmup_fraction: float = 0.2
    vnodes_per_node: int = 128
    # trace timestamps are multiplied by this (0.1 = 10x replay speed)
    time_scale: float = 1.0
    # feed queue wait into the decode EWMA as well as service time
    observe_queue_wait: bool = False
    # run the promotion decode as an extra background GPU job
    promotion_offpath: bool = False

    def validate(self) -> "ClusterConfig":
        if self.n_nodes < 1:
            raise ConfigError("n_nodes", "must be >= 1")
        if self.gpus_per_node < 1:
            raise ConfigError("gpus_per_node", "must be >= 1")
        if self.per_node_cache_bytes < 0:
            raise ConfigError("per_node_cache_bytes", "must be >= 0")
        if self.theta < 0:
            raise ConfigError("theta", "must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha", "must be in [0, 1]")
        if not 0.0 < self.tail_fraction < 1.0:
            raise ConfigError("tail_fraction", "must be in (0, 1)")
        if self.promotion_threshold < 1:
            raise ConfigError("promotion_threshold", "must be >= 1")
        if self.window is not None and self.window < 1:
            raise ConfigError("window", "must be >= 1")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigError("warmup_fraction", "must be in [0, 1)")
        if self.vnodes_per_node < 1:
            raise ConfigError("vnodes_per_node", "must be >= 1")
        if not self.time_scale > 0:
            raise ConfigError("time_scale", "must be > 0")
        self.tuner.validate()
        self.latency.validate()
        return self

    def replace(self, **kw) -> "ClusterConfig":
        return dataclasses.replace(self, **kw)

    def pinned_alpha(self) -> float | None:
        p = self.policy
        if p is Policy.LB_IMG_CACHE:
            return 1.0
        if p is Policy.LB_LATENT_CACHE:
            return 0.0
        if p is Policy.LB_STATIC:
            return self.alpha
        return None

    def to_dict(self) -> dict:
        lat = dataclasses.asdict(self.latency)
        lat["fetch_table"] = list(self.latency.fetch_table)
        return {
            "n_nodes": self.n_nodes,
            "per_node_cache_bytes": self.per_node_cache_bytes,
            "theta": _num_out(self.theta),
            "gpus_per_node": self.gpus_per_node,
            "policy": self.policy.value,
            "alpha": self.alpha,
            "window": self.window,
            "step": self.tuner.step,
            "ewma_weight": self.tuner.ewma_weight,
            "alpha_bounds": list(self.tuner.alpha_bounds),
            "normalize_gradient": self.tuner.normalize_gradient,
            "tail_fraction": self.tail_fraction,
            "promotion_threshold": self.promotion_threshold,
            "latency": lat,
            "seed": self.seed,
            "warmup_fraction": self.warmup_fraction,
            "vnodes_per_node": self.vnodes_per_node,
            "time_scale": self.time_scale,
            "observe_queue_wait": self.observe_queue_wait,
            "promotion_offpath": self.promotion_offpath,
        }


def _num_out(x: float):
    return "inf" if math.isinf(x) else x


# -- flat key = value config files -------------------------------------------

def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.split(",") if x.strip())


_TOP_KEYS = {
    "n_nodes": int,
    "per_node_cache_bytes": int,
    "theta": float,
    "gpus_per_node": int,
    "policy": Policy.parse,
    "alpha": float,
    "window": int,
    "tail_fraction": float,
    "promotion_threshold": int,
    "seed": int,
    "warmup_fraction": float,
    "vnodes_per_node": int,
    "time_scale": float,
    "observe_queue_wait": _bool,
    "promotion_offpath": _bool,
}
_TUNER_KEYS = {
    "step": float,
    "ewma_weight": float,
    "alpha_lo": float,
    "alpha_hi": float,
    "normalize_gradient": _bool,
}
_LATENCY_KEYS = {
    "net_transfer_ms": float,
    "decode_ms": float,
    "fetch_kind": str,
    "fetch_ms": float,
    "fetch_sigma": float,
    "fetch_table": _floats,
    "intra_cluster_transfer_ms": float,
}
CONFIG_KEYS = sorted([*_TOP_KEYS, *_TUNER_KEYS, *_LATENCY_KEYS])


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("config", f"line {lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def apply_overrides(cfg: ClusterConfig, values: dict[str, str]) -> ClusterConfig:
    """Apply string-valued overrides keyed as in :data:`CONFIG_KEYS`."""
    top, tun, lat = {}, {}, {}
    for k, v in values.items():
        for table, dst in ((_TOP_KEYS, top), (_TUNER_KEYS, tun), (_LATENCY_KEYS, lat)):
            if k in table:
                try:
                    dst[k] = table[k](v)
                except ConfigError:
                    raise
                except ValueError as e:
                    raise ConfigError(k, str(e)) from None
                break
        else:
            raise ConfigError(k, "unknown config key")
    if tun:
        lo, hi = cfg.tuner.alpha_bounds
        cfg = cfg.replace(
            tuner=TunerConfig(
                window=cfg.tuner.window,
                step=tun.get("step", cfg.tuner.step),
                ewma_weight=tun.get("ewma_weight", cfg.tuner.ewma_weight),
                alpha_bounds=(tun.get("alpha_lo", lo), tun.get("alpha_hi", hi)),
                normalize_gradient=tun.get("normalize_gradient", cfg.tuner.normalize_gradient),
            )
        )
    if lat:
        cfg = cfg.replace(latency=dataclasses.replace(cfg.latency, **lat))
    if top:
        cfg = cfg.replace(**top)
    return cfg.validate()


def load_config(path, base: ClusterConfig | None = None) -> ClusterConfig:
    return apply_overrides(base or ClusterConfig(), parse_kv(Path(path).read_text()))

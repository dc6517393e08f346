"""Online marginal-hit tuning of the image/latent split.

Per window the cache's counters become four rates, the rates feed an
expected-latency model and its gradient ``D`` with respect to ``alpha``,
and ``alpha`` moves one fixed step against the sign of ``D``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

from .dual_cache import WindowCounters
from .errors import ConfigError, EmptyWindowError

WINDOW_CSV_HEADER = "window_idx,alpha,MR_img,MR_lat,delta_img,delta_lat,D,T_decode,T_fetch"


class LatencyKind(str, Enum):
    DECODE = "decode"
    FETCH = "fetch"


class WindowRates(NamedTuple):
    mr_img: float
    mr_lat: float
    delta_img: float
    delta_lat: float


@dataclass(frozen=True)
class TunerConfig:
    window: int = 1_000_000
    step: float = 0.005
    ewma_weight: float = 0.1
    alpha_bounds: tuple[float, float] = (0.0, 1.0)
    # divide each tail rate by its tier's share of capacity (off by default)
    normalize_gradient: bool = False

    def validate(self) -> "TunerConfig":
        if self.window < 1:
            raise ConfigError("window", "must be >= 1")
        if not 0.0 < self.step < 1.0:
            raise ConfigError("step", "must be in (0, 1)")
        if not 0.0 < self.ewma_weight <= 1.0:
            raise ConfigError("ewma_weight", "must be in (0, 1]")
        lo, hi = self.alpha_bounds
        if not 0.0 <= lo <= hi <= 1.0:
            raise ConfigError("alpha_bounds", "need 0 <= lo <= hi <= 1")
        return self


def scaled_window(trace_len: int, minimum: int = 10_000) -> int:
    """Desk-scale window: one sixtieth of the trace, at least ``minimum``."""
    return max(minimum, trace_len // 60)


def rates_from_counters(c: WindowCounters) -> WindowRates:
    """Window rates. With no image misses the conditional latent rates are 0."""
    if c.total_requests <= 0:
        raise EmptyWindowError("window has no requests")
    total = c.total_requests
    if c.image_misses:
        mr_lat = c.full_misses / c.image_misses
        d_lat = c.latent_tail_hits / c.image_misses
    else:
        mr_lat = d_lat = 0.0
    return WindowRates(c.image_misses / total, mr_lat, c.image_tail_hits / total, d_lat)


def expected_latency(r: WindowRates, t_decode: float, t_fetch: float) -> float:
    """Expected per-request cost; an image hit costs nothing."""
    return r.mr_img * ((1.0 - r.mr_lat) * t_decode + r.mr_lat * (t_decode + t_fetch))


def gradient_D(r: WindowRates, t_decode: float, t_fetch: float) -> float:
    return -r.delta_img * (t_decode + t_fetch * r.mr_lat) + t_fetch * r.mr_img * r.delta_lat


def gradient_D_normalized(r: WindowRates, t_decode: float, t_fetch: float, alpha: float) -> float:
    """``gradient_D`` with each tail rate scaled to a per-unit-alpha change.

    A tail hit measures the last ``tau`` of its own tier, which is
    ``tau * alpha * C`` bytes for images and ``tau * (1 - alpha) * C`` for
    latents, so the two rates only compare like-for-like after dividing by
    ``alpha`` and ``1 - alpha``. An empty tier contributes nothing.
    """
    img = r.delta_img / alpha if alpha > 0 else 0.0
    lat = r.delta_lat / (1.0 - alpha) if alpha < 1 else 0.0
    return -img * (t_decode + t_fetch * r.mr_lat) + t_fetch * r.mr_img * lat


def step_alpha(alpha: float, D: float, step: float, bounds=(0.0, 1.0)) -> float:
    """``D < 0`` grows the image tier, ``D > 0`` shrinks it."""
    lo, hi = bounds
    if D < 0:
        alpha = alpha + step
    elif D > 0:
        alpha = alpha - step
    return min(hi, max(lo, alpha))


@dataclass
class TunerState:
    alpha: float
    t_decode: float | None = None
    t_fetch: float | None = None
    last_D: float = 0.0


@dataclass
class WindowRecord:
    window_idx: int
    alpha: float  # alpha in force during the window
    rates: WindowRates
    D: float
    t_decode: float
    t_fetch: float
    new_alpha: float
    counters: WindowCounters = field(repr=False)

    def csv_row(self) -> str:
        r = self.rates
        vals = [self.alpha, r.mr_img, r.mr_lat, r.delta_img, r.delta_lat, self.D, self.t_decode, self.t_fetch]
        return f"{self.window_idx}," + ",".join(repr(float(v)) for v in vals)


class Tuner:
    """Owns the EWMA latency estimates and the alpha trajectory of one node.

    ``prior_decode``/``prior_fetch`` stand in for the EWMA values until the
    first sample of each kind arrives.
    """

    def __init__(self, config: TunerConfig, alpha: float, prior_decode=40.0, prior_fetch=140.0):
        self.config = config.validate()
        lo, hi = config.alpha_bounds
        self.state = TunerState(alpha=min(hi, max(lo, alpha)))
        self.prior_decode = prior_decode
        self.prior_fetch = prior_fetch
        self.history: list[WindowRecord] = []

    @property
    def alpha(self) -> float:
        return self.state.alpha

    def observe_latency(self, kind: LatencyKind | str, sample_ms: float) -> None:
        if not sample_ms > 0:
            raise ValueError(f"latency sample must be positive, got {sample_ms}")
        w = self.config.ewma_weight
        s = self.state
        if LatencyKind(kind) is LatencyKind.DECODE:
            s.t_decode = sample_ms if s.t_decode is None else (1 - w) * s.t_decode + w * sample_ms
        else:
            s.t_fetch = sample_ms if s.t_fetch is None else (1 - w) * s.t_fetch + w * sample_ms

    def costs(self) -> tuple[float, float]:
        s = self.state
        return (
            self.prior_decode if s.t_decode is None else s.t_decode,
            self.prior_fetch if s.t_fetch is None else s.t_fetch,
        )

    def end_window(self, counters: WindowCounters) -> WindowRecord:
        """Consume one window of counters and step alpha. Returns the record."""
        rates = rates_from_counters(counters)
        t_dec, t_fetch = self.costs()
        old = self.state.alpha
        if self.config.normalize_gradient:
            D = gradient_D_normalized(rates, t_dec, t_fetch, old)
        else:
            D = gradient_D(rates, t_dec, t_fetch)
        new = step_alpha(old, D, self.config.step, self.config.alpha_bounds)
        self.state.alpha = new
        self.state.last_D = D
        rec = WindowRecord(len(self.history), old, rates, D, t_dec, t_fetch, new, counters)
        self.history.append(rec)
        return rec


def windows_csv(records) -> str:
    buf = io.StringIO()
    buf.write(WINDOW_CSV_HEADER + "\n")
    for rec in records:
        buf.write(rec.csv_row() + "\n")
    return buf.getvalue()

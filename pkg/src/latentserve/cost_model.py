"""Long-horizon storage and decode cost projection.

Strategies:

* ``ImgStore``: every image stored as pixels in object storage.
* ``ImgStore+Glacier``: as above, objects older than the archive cutoff
  move to an archive tier and pay retrieval on access.
* ``LB-H100`` / ``LB-5090``: latents plus a pixel-cache fraction in object
  storage, and GPU time for the decodes that miss the pixel cache.

Months are counted from 1 at the trace start; the trace ends at
``GrowthModel.start``. During the trace the catalog ramps up from zero
with a linearly increasing arrival rate; after it, growth is either
linear or compound. Sizes are MB per image with 1 GB = 1024 MB.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import ConfigError

MB_PER_GB = 1024.0
DAYS_PER_MONTH = 365.25 / 12
# calendar anchor: month 1 is April 2023
FIRST_YEAR = 2023
FIRST_MONTH_OF_YEAR = 4

CSV_HEADER = "month,strategy,N_images,storage_usd,decode_usd,retrieval_usd,cumulative_usd,normalized"


class Strategy(str, Enum):
    IMG_STORE = "ImgStore"
    IMG_GLACIER = "ImgStore+Glacier"
    LB_H100 = "LB-H100"
    LB_5090 = "LB-5090"

    @classmethod
    def parse(cls, s: str) -> "Strategy":
        for st in cls:
            if s.lower() in (st.value.lower(), st.name.lower()):
                return st
        raise ConfigError("strategy", f"unknown strategy {s!r}")


@dataclass(frozen=True)
class CostParams:
    s_px_mb: float = 1.5
    s_lat_mb: float = 0.29
    p_s3: float = 0.023  # $/GB-month
    p_glacier: float = 0.004  # $/GB-month
    glacier_retrieval_per_gb: float = 0.01
    glacier_retrieval_per_request: float = 0.0001
    p_gpu_h100: float = 2.50  # $/GPU-hour
    p_gpu_5090: float = 0.69
    t_dec_ms: float = 40.0
    pixel_cache_fraction: float = 0.01
    m_gpu: float = 0.632
    views_per_image_year: float = 10.2
    archive_after_months: int = 60
    # power-law exponent of per-object access decay with age in days
    decay_exponent: float = 1.3

    def validate(self) -> "CostParams":
        for name in (
            "s_px_mb", "s_lat_mb", "p_s3", "p_glacier", "glacier_retrieval_per_gb",
            "glacier_retrieval_per_request", "p_gpu_h100", "p_gpu_5090", "t_dec_ms",
            "views_per_image_year", "decay_exponent",
        ):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be > 0")
        for name in ("pixel_cache_fraction", "m_gpu"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(name, "must be in [0, 1]")
        if self.archive_after_months < 1:
            raise ConfigError("archive_after_months", "must be >= 1")
        return self

    def gpu_price(self, strategy: Strategy) -> float:
        return self.p_gpu_h100 if strategy is Strategy.LB_H100 else self.p_gpu_5090


@dataclass(frozen=True)
class GrowthModel:
    mode: str = "linear"
    monthly_new: float = 3.76e6
    cagr: float = 0.127
    n0: float = 92.3e6
    start: int = 35

    def validate(self) -> "GrowthModel":
        if self.mode not in ("linear", "cagr"):
            raise ConfigError("mode", f"unknown growth mode {self.mode!r}")
        if not self.n0 > 0:
            raise ConfigError("n0", "must be > 0")
        if self.start < 1:
            raise ConfigError("start", "must be >= 1")
        if self.monthly_new < 0:
            raise ConfigError("monthly_new", "must be >= 0")
        if self.cagr < 0:
            raise ConfigError("cagr", "must be >= 0")
        return self

    def n_images(self, month: float) -> float:
        """Catalog size at the end of ``month`` (0 before the trace)."""
        if month <= 0:
            return 0.0
        s = self.start
        if month <= s:
            # arrival rate ramps linearly from r0 to monthly_new, reaching n0 at s
            r0 = 2.0 * self.n0 / s - self.monthly_new
            return r0 * month + (self.monthly_new - r0) / (2.0 * s) * month * month
        if self.mode == "linear":
            return self.n0 + self.monthly_new * (month - s)
        return self.n0 * (1.0 + self.cagr) ** ((month - s) / 12.0)


@dataclass(frozen=True)
class PriceDecay:
    gpu_decay: float = 0.20
    storage_decay: float = 0.10
    enabled: bool = False
    # prices fall once per full year after this month
    start: int = 35

    def validate(self) -> "PriceDecay":
        for name in ("gpu_decay", "storage_decay"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(name, "must be in [0, 1)")
        return self

    def years_elapsed(self, month: int) -> int:
        return max(0, (month - self.start) // 12)

    def storage_factor(self, month: int) -> float:
        return (1 - self.storage_decay) ** self.years_elapsed(month) if self.enabled else 1.0

    def gpu_factor(self, month: int) -> float:
        return (1 - self.gpu_decay) ** self.years_elapsed(month) if self.enabled else 1.0


CONSTANT_PRICES = PriceDecay(enabled=False)
DECAYING_PRICES = PriceDecay(enabled=True)


@dataclass
class MonthlyCost:
    storage: float = 0.0
    decode: float = 0.0
    retrieval: float = 0.0

    @property
    def total(self) -> float:
        return self.storage + self.decode + self.retrieval


def horizon_month(year: int) -> int:
    """Month index of December of ``year``."""
    return (year - FIRST_YEAR) * 12 + (12 - FIRST_MONTH_OF_YEAR + 1)


def decay_share(exponent: float, cutoff_days: float, lifetime_days: float) -> float:
    """Fraction of an object's views at ages beyond ``cutoff_days``.

    Views at age ``a`` days have intensity ``(a + 1) ** -exponent`` over a
    lifetime of ``lifetime_days``.
    """
    if lifetime_days <= cutoff_days:
        return 0.0

    def cum(a):
        if exponent == 1.0:
            return math.log(a + 1.0)
        return (1.0 - (a + 1.0) ** (1.0 - exponent)) / (exponent - 1.0)

    return (cum(lifetime_days) - cum(cutoff_days)) / cum(lifetime_days)


def monthly_decodes(n: float, params: CostParams) -> float:
    return params.m_gpu * params.views_per_image_year * n / 12.0


def monthly_cost(
    strategy: Strategy | str,
    n: float,
    month: int,
    params: CostParams = CostParams(),
    decay: PriceDecay = CONSTANT_PRICES,
    n_archived: float = 0.0,
    archive_view_share: float = 0.0,
) -> MonthlyCost:
    """Cost of one month with ``n`` images, ``n_archived`` of them archived.

    ``n_archived`` and ``archive_view_share`` only matter for the Glacier
    strategy; ``project`` fills them in.
    """
    if not isinstance(strategy, Strategy):
        strategy = Strategy.parse(strategy)
    if n < 0:
        raise ValueError("n must be >= 0")
    p = params
    sf = decay.storage_factor(month)
    if strategy is Strategy.IMG_STORE:
        return MonthlyCost(storage=n * p.s_px_mb / MB_PER_GB * p.p_s3 * sf)
    if strategy is Strategy.IMG_GLACIER:
        arch = min(max(n_archived, 0.0), n)
        hot_gb = (n - arch) * p.s_px_mb / MB_PER_GB
        cold_gb = arch * p.s_px_mb / MB_PER_GB
        storage = (hot_gb * p.p_s3 + cold_gb * p.p_glacier) * sf
        reqs = p.views_per_image_year * archive_view_share * arch / 12.0
        per_req = p.s_px_mb / MB_PER_GB * p.glacier_retrieval_per_gb + p.glacier_retrieval_per_request
        return MonthlyCost(storage=storage, retrieval=reqs * per_req * sf)
    gb = n * (p.s_lat_mb + p.pixel_cache_fraction * p.s_px_mb) / MB_PER_GB
    decode = monthly_decodes(n, p) * p.t_dec_ms * p.gpu_price(strategy) / 3_600_000.0
    return MonthlyCost(storage=gb * p.p_s3 * sf, decode=decode * decay.gpu_factor(month))


@dataclass
class ProjectionRow:
    month: int
    strategy: str
    n_images: float
    cost: MonthlyCost
    cumulative: float
    normalized: float

    def csv_row(self) -> str:
        c = self.cost
        return (
            f"{self.month},{self.strategy},{self.n_images!r},{c.storage!r},{c.decode!r},"
            f"{c.retrieval!r},{self.cumulative!r},{self.normalized!r}"
        )


@dataclass
class Projection:
    strategy: Strategy
    rows: list[ProjectionRow] = field(default_factory=list)

    @property
    def cumulative(self) -> float:
        return self.rows[-1].cumulative if self.rows else 0.0

    @property
    def normalized(self) -> float:
        return self.rows[-1].normalized if self.rows else 0.0

    def at(self, month: int) -> ProjectionRow:
        return self.rows[month - 1]


def trace_end_normalizer(growth: GrowthModel, params: CostParams = CostParams()) -> float:
    """Cumulative ImgStore cost from month 1 through the trace end."""
    return sum(
        monthly_cost(Strategy.IMG_STORE, growth.n_images(m), m, params).total
        for m in range(1, growth.start + 1)
    )


def project(
    strategy: Strategy | str,
    growth: GrowthModel = GrowthModel(),
    params: CostParams = CostParams(),
    decay: PriceDecay = CONSTANT_PRICES,
    horizon_months: int = horizon_month(2050),
    normalizer: float | None = None,
) -> Projection:
    """Month-by-month cumulative cost from the trace start to the horizon.

    ``normalized`` divides by ``normalizer``, by default the cumulative
    ImgStore cost at the trace end under constant prices.
    """
    if not isinstance(strategy, Strategy):
        strategy = Strategy.parse(strategy)
    if horizon_months < 1:
        raise ConfigError("horizon_months", "must be >= 1")
    growth.validate()
    params.validate()
    decay.validate()
    norm = trace_end_normalizer(growth, params) if normalizer is None else normalizer
    share = decay_share(
        params.decay_exponent,
        params.archive_after_months * DAYS_PER_MONTH,
        horizon_months * DAYS_PER_MONTH,
    )
    out = Projection(strategy)
    cum = 0.0
    for m in range(1, horizon_months + 1):
        n = growth.n_images(m)
        arch = growth.n_images(m - params.archive_after_months)
        c = monthly_cost(strategy, n, m, params, decay, arch, share)
        cum += c.total
        out.rows.append(ProjectionRow(m, strategy.value, n, c, cum, cum / norm if norm > 0 else 0.0))
    return out


def projection_csv(projections: list[Projection], comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        for line in comment.splitlines():
            buf.write(f"# {line}\n")
    buf.write(CSV_HEADER + "\n")
    for pr in projections:
        for row in pr.rows:
            buf.write(row.csv_row() + "\n")
    return buf.getvalue()

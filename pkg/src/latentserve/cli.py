"""Command-line entry point.

Every subcommand writes its artifacts into ``--out`` (default: the
``LB_OUT_DIR`` environment variable, else the current directory). Text
artifacts start with ``#`` comment lines recording the invocation and
seed; JSON artifacts carry the same under an ``invocation`` key. Exit
status is 0 on success, 2 for configuration or usage errors and 1 for
any other failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import cost_model as cm
from .errors import ConfigError, InsufficientDataError
from .sim import experiments as ex
from .sim.config import CONFIG_KEYS, ClusterConfig, Policy, apply_overrides, load_config
from .sim.engine import run
from .trace_kit import mrc as mrc_mod
from .trace_kit import records as rec
from .trace_kit import stats as st
from .trace_kit.synth import SizeModel, SynthConfig, generate_trace, generation_report

PROG = "latentserve"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


class Ctx:
    """Output directory plus the provenance header for this invocation."""

    def __init__(self, args, argv):
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.invocation = " ".join([PROG, *map(shlex.quote, argv)])
        self.seed = args.seed
        self.written: list[Path] = []

    @property
    def comment(self) -> str:
        return f"invocation: {self.invocation}\nseed: {self.seed}"

    def path(self, name) -> Path:
        p = self.out / name
        self.written.append(p)
        return p

    def write_text(self, name, text):
        self.path(name).write_text(text)

    def write_json(self, name, obj):
        d = {"invocation": self.invocation, "seed": self.seed, "version": __version__}
        d.update(obj)
        self.path(name).write_text(json.dumps(d, indent=2, sort_keys=True, default=_json_default) + "\n")

    def plot(self, fn, name, *a, **kw):
        fn(self.path(name), *a, **kw)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _floats(s: str) -> list[float]:
    try:
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def _json_num(x: float):
    return "inf" if isinstance(x, float) and math.isinf(x) else x


# -- trace-gen ---------------------------------------------------------------

def cmd_trace_gen(ctx: Ctx):
    a = ctx.args
    cfg = SynthConfig(
        n_objects_initial=a.objects,
        arrival_rate=a.arrival_rate,
        zipf_exponent=a.zipf,
        decay_exponent=a.decay,
        duration_days=a.days,
        requests_per_day=a.requests_per_day,
        seed=a.seed,
        size_model=SizeModel(a.size_model, a.image_bytes, a.latent_bytes, a.size_sigma),
        arrival_model=a.arrival_model,
        cagr=a.cagr,
        initial_age_days=a.initial_age_days,
    ).validate()
    trace, catalog = generate_trace(cfg)
    if a.format == "bin":
        rec.write_trace_binary(trace, ctx.path("trace.bin"))
        # binary traces have no room for comments
        ctx.write_json("manifest.json", {"files": ["trace.bin", "catalog.csv"]})
    else:
        rec.write_trace_csv(trace, ctx.path("trace.csv"), ctx.comment)
    rec.write_catalog(catalog, ctx.path("catalog.csv"), ctx.comment)
    ctx.write_json("generation.json", {"config": cfg.to_dict(), "report": generation_report(cfg)})
    return f"trace-gen: {len(trace)} records over {len(catalog)} objects -> {ctx.out}"


# -- trace-stats ---------------------------------------------------------------

def cmd_trace_stats(ctx: Ctx):
    a = ctx.args
    trace = rec.read_trace(a.trace)
    if a.downsample:
        trace = st.downsample(trace, a.downsample, a.seed)
        rec.write_trace_csv(trace, ctx.path("trace_downsampled.csv"), ctx.comment)
    s = st.trace_stats(trace)
    try:
        z = st.fit_zipf(trace)
    except InsufficientDataError as e:
        z = None
        print(f"trace-stats: zipf fit skipped: {e}", file=sys.stderr)
    summary = s.summary() | {"zipf_fit": z}
    ctx.write_json("stats.json", {"summary": summary})
    ctx.write_text("popularity_cdf.csv", _prefix(ctx, s.popularity_csv()))
    ctx.write_text("reaccess_cdf.csv", _prefix(ctx, s.reaccess_csv()))
    ctx.write_text("age_decay.csv", _prefix(ctx, s.age_decay_csv()))
    if a.plot:
        from . import plotting as pl

        pc = s.popularity_cdf
        ctx.plot(pl.cdf_plot, "popularity_cdf.png", pc[:, 0], pc[:, 1], "fraction of objects (most popular first)",
                 "fraction of requests")
        iv = s.reaccess_interval_cdf
        if len(iv):
            ctx.plot(pl.cdf_plot, "reaccess_cdf.png", np.maximum(iv[:, 0], 1), iv[:, 1], "re-access interval (ms)",
                     logx=True)
        ctx.plot(pl.age_decay_plot, "age_decay.png", s.per_age_access_rate)
    top = summary["share_top_1pct"]
    return f"trace-stats: {s.n_requests} requests, {s.n_objects} objects, top-1% share {top:.3f}, zipf {z}"


def _prefix(ctx: Ctx, csv_text: str) -> str:
    return "".join(f"# {ln}\n" for ln in ctx.comment.splitlines()) + csv_text


# -- mrc ---------------------------------------------------------------------

def cmd_mrc(ctx: Ctx):
    a = ctx.args
    trace = rec.read_trace(a.trace)
    catalog = rec.read_catalog(a.catalog) if a.catalog else None
    size_field = None if a.units == "objects" else a.units
    if a.sizes:
        caps = [int(c) for c in a.sizes]
    else:
        if size_field is None:
            base = len(trace.distinct_objects())
        else:
            if catalog is None:
                raise ConfigError("catalog", "byte units need --catalog")
            base = sum(getattr(catalog[o], size_field) for o in trace.distinct_objects().tolist())
        caps = sorted({max(1, int(round(f * base))) for f in a.fractions})
    policies = [p.strip().lower() for p in a.policy.split(",")]
    curves = {}
    rows = []
    for p in policies:
        pts = mrc_mod.miss_ratio_curve(trace, caps, p, catalog, size_field)
        curves[p] = pts
        rows += [(c, p, m) for c, m in pts]
    body = "capacity,policy,miss_ratio\n" + "".join(f"{c},{p},{m!r}\n" for c, p, m in rows)
    ctx.write_text("mrc.csv", _prefix(ctx, body))
    if a.plot:
        from . import plotting as pl

        ctx.plot(pl.mrc_plot, "mrc.png", curves, xlabel=f"capacity ({a.units})")
    return f"mrc: {len(caps)} capacities x {len(policies)} policies -> {ctx.out / 'mrc.csv'}"


# -- simulator commands ------------------------------------------------------

def _cluster_config(a, trace_len: int, catalog) -> ClusterConfig:
    cfg = load_config(a.config) if a.config else ClusterConfig()
    over = {}
    for kv in a.set or []:
        if "=" not in kv:
            raise ConfigError("set", f"expected KEY=VALUE, got {kv!r}")
        k, v = kv.split("=", 1)
        over[k.strip()] = v.strip()
    flag_map = {
        "policy": a.policy,
        "n_nodes": a.nodes,
        "per_node_cache_bytes": a.cache_bytes,
        "theta": a.theta,
        "alpha": a.alpha,
        "window": a.window,
    }
    for k, v in flag_map.items():
        if v is not None:
            over[k] = str(v)
    over["seed"] = str(a.seed)
    cfg = apply_overrides(cfg, over)
    if a.cache_frac is not None:
        foot = sum(m.image_bytes for m in catalog.values())
        cfg = cfg.replace(per_node_cache_bytes=int(a.cache_frac * foot / cfg.n_nodes)).validate()
    return cfg


def _load_sim_inputs(a):
    trace = rec.read_trace(a.trace)
    catalog = rec.read_catalog(a.catalog)
    return trace, catalog


def cmd_sim_run(ctx: Ctx):
    a = ctx.args
    trace, catalog = _load_sim_inputs(a)
    cfg = _cluster_config(a, len(trace), catalog)
    rep = run(trace, catalog, cfg)
    ctx.path("report.json").write_text(
        rep.to_json({"invocation": ctx.invocation, "seed": ctx.seed, "version": __version__})
    )
    ctx.write_text("windows.csv", rep.windows_csv(ctx.comment))
    if a.requests_csv:
        ctx.write_text("requests.csv", rep.requests_csv(ctx.comment))
    if a.plot:
        from . import plotting as pl

        ctx.plot(pl.sim_plot, "sim.png", rep.latencies, rep.alpha_trajectory, title=cfg.policy.value)
    f = rep.outcome_fractions()
    return (
        f"sim-run: {cfg.policy.value} mean {rep.mean_ms:.2f} ms p99 {rep.p99_ms:.2f} ms "
        f"(image {f['image_hit']:.3f} latent {f['latent_hit']:.3f} miss {f['full_miss']:.3f})"
    )


def cmd_sim_sweep_alpha(ctx: Ctx):
    a = ctx.args
    trace, catalog = _load_sim_inputs(a)
    cfg = _cluster_config(a, len(trace), catalog)
    rows = ex.sweep_alpha(trace, catalog, cfg, a.alphas)
    ctx.write_text("sweep.csv", ex.sweep_csv(rows, ctx.comment))
    if a.plot:
        from . import plotting as pl

        ctx.plot(pl.sweep_plot, "sweep.png", [r.alpha for r in rows], [r.mean_ms for r in rows],
                 [r.p99_ms for r in rows])
    best = min(rows, key=lambda r: r.mean_ms)
    return f"sim-sweep-alpha: {len(rows)} runs, best alpha {best.alpha} at {best.mean_ms:.2f} ms"


def cmd_sim_spillover(ctx: Ctx):
    a = ctx.args
    trace, catalog = _load_sim_inputs(a)
    cfg = _cluster_config(a, len(trace), catalog)
    rows = ex.compare_spillover(trace, catalog, cfg, a.thetas)
    ctx.write_text("spillover.csv", ex.spillover_csv(rows, ctx.comment))
    if a.plot:
        from . import plotting as pl

        ctx.plot(pl.spillover_plot, "spillover.png", [ex._fmt(r.theta) for r in rows], [r.mean_ms for r in rows],
                 [r.queue_wait_p99_ms for r in rows])
    return "sim-spillover: " + ", ".join(
        f"theta={ex._fmt(r.theta)} p99 queue {r.queue_wait_p99_ms:.1f} ms" for r in rows
    )


# -- cost-project ------------------------------------------------------------

def cmd_cost_project(ctx: Ctx):
    a = ctx.args
    params = cm.CostParams(
        p_gpu_h100=a.p_gpu_h100,
        p_gpu_5090=a.p_gpu_5090,
        t_dec_ms=a.t_dec_ms,
        m_gpu=a.m_gpu,
        views_per_image_year=a.views_per_year,
        pixel_cache_fraction=a.pixel_cache_fraction,
    ).validate()
    growth = cm.GrowthModel(mode=a.growth).validate()
    decay = cm.DECAYING_PRICES if a.prices == "decay" else cm.CONSTANT_PRICES
    horizon = a.horizon_months or cm.horizon_month(a.horizon)
    if a.strategy == "all":
        strategies = list(cm.Strategy)
    else:
        strategies = [cm.Strategy.parse(s) for s in a.strategy.split(",")]
    projs = [cm.project(s, growth, params, decay, horizon) for s in strategies]
    ctx.write_text("cost.csv", cm.projection_csv(projs, ctx.comment))
    final = {p.strategy.value: {"cumulative_usd": p.cumulative, "normalized": p.normalized} for p in projs}
    ctx.write_json(
        "cost_summary.json",
        {"horizon_months": horizon, "growth": a.growth, "prices": a.prices, "final": final},
    )
    if a.plot:
        from . import plotting as pl

        series = {p.strategy.value: ([r.month for r in p.rows], [r.normalized for r in p.rows]) for p in projs}
        ctx.plot(pl.cost_plot, "cost.png", series)
    return "cost-project: " + ", ".join(f"{k} {v['normalized']:.1f}x" for k, v in final.items())


# -- parser ------------------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    p.add_argument("--out", default=os.environ.get("LB_OUT_DIR", "."),
                   help="output directory (default: $LB_OUT_DIR or .)")
    p.add_argument("--seed", type=int, default=0, help="seed for every random draw (default 0)")
    p.add_argument("--plot", action="store_true", help="also render PNG figures next to the CSV/JSON output")


def _sim_flags(p: argparse.ArgumentParser):
    p.add_argument("--trace", required=True, help="trace file (CSV or binary)")
    p.add_argument("--catalog", required=True, help="catalog CSV")
    p.add_argument("--config", help="key = value cluster config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key; keys: " + ", ".join(CONFIG_KEYS))
    p.add_argument("--policy", choices=[x.value for x in Policy])
    p.add_argument("--nodes", type=int)
    p.add_argument("--cache-bytes", type=int, help="per-node cache capacity in bytes")
    p.add_argument("--cache-frac", type=float,
                   help="total cache as a fraction of the catalog's image footprint (overrides --cache-bytes)")
    p.add_argument("--theta", type=float, help="spillover queue-depth threshold (inf disables)")
    p.add_argument("--alpha", type=float, help="initial or pinned alpha")
    p.add_argument("--window", type=int, help="tuning window in cache lookups per node")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog=PROG, description="Dual-format cache simulator, trace tools and cost model.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("trace-gen", help="generate a synthetic trace and catalog")
    _common(p)
    p.add_argument("--objects", type=int, default=10_000, help="initial object count")
    p.add_argument("--arrival-rate", type=float, default=0.0, help="new objects per day")
    p.add_argument("--arrival-model", choices=["linear", "cagr"], default="linear")
    p.add_argument("--cagr", type=float, default=0.127)
    p.add_argument("--zipf", type=float, default=1.11)
    p.add_argument("--decay", type=float, default=1.3, help="power-law age-decay exponent")
    p.add_argument("--days", type=float, default=30.0)
    p.add_argument("--requests-per-day", type=int, default=10_000)
    p.add_argument("--initial-age-days", type=float, default=0.0)
    p.add_argument("--size-model", choices=["fixed", "lognormal"], default="fixed")
    p.add_argument("--image-bytes", type=int, default=SizeModel().image_bytes)
    p.add_argument("--latent-bytes", type=int, default=SizeModel().latent_bytes)
    p.add_argument("--size-sigma", type=float, default=0.3)
    p.add_argument("--format", choices=["csv", "bin"], default="csv")
    p.set_defaults(func=cmd_trace_gen)

    p = sub.add_parser("trace-stats", help="popularity, re-access and age-decay statistics")
    _common(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--downsample", type=int, default=0, metavar="K",
                   help="first keep only K uniformly sampled objects")
    p.set_defaults(func=cmd_trace_stats)

    p = sub.add_parser("mrc", help="miss-ratio curves under LRU and Belady")
    _common(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--catalog")
    p.add_argument("--policy", default="lru,belady")
    p.add_argument("--units", choices=["objects", "image_bytes", "latent_bytes"], default="objects")
    p.add_argument("--sizes", type=_floats, help="explicit capacities")
    p.add_argument("--fractions", type=_floats, default=[0.001, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0],
                   help="capacities as fractions of the distinct footprint")
    p.set_defaults(func=cmd_mrc)

    p = sub.add_parser("sim-run", help="replay a trace through the simulated cluster")
    _common(p)
    _sim_flags(p)
    p.add_argument("--requests-csv", action="store_true", help="also write the per-request CSV")
    p.set_defaults(func=cmd_sim_run)

    p = sub.add_parser("sim-sweep-alpha", help="static alpha sweep")
    _common(p)
    _sim_flags(p)
    p.add_argument("--alphas", type=_floats, default=[0.3, 0.4, 0.5, 0.6, 0.7])
    p.set_defaults(func=cmd_sim_sweep_alpha)

    p = sub.add_parser("sim-spillover", help="latency with and without spillover")
    _common(p)
    _sim_flags(p)
    p.add_argument("--thetas", type=_floats, default=[math.inf, 4.0])
    p.set_defaults(func=cmd_sim_spillover)

    p = sub.add_parser("cost-project", help="cumulative storage and decode cost projection")
    _common(p)
    p.add_argument("--strategy", default="all", help="all, or comma-separated strategy names")
    p.add_argument("--horizon", type=int, default=2050, help="last calendar year")
    p.add_argument("--horizon-months", type=int, help="horizon in months from the trace start")
    p.add_argument("--prices", choices=["constant", "decay"], default="constant")
    p.add_argument("--growth", choices=["linear", "cagr"], default="linear")
    p.add_argument("--p-gpu-h100", type=float, default=2.50)
    p.add_argument("--p-gpu-5090", type=float, default=0.69)
    p.add_argument("--t-dec-ms", type=float, default=40.0)
    p.add_argument("--m-gpu", type=float, default=0.632)
    p.add_argument("--views-per-year", type=float, default=10.2)
    p.add_argument("--pixel-cache-fraction", type=float, default=0.01)
    p.set_defaults(func=cmd_cost_project)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        ctx = Ctx(args, argv)
        print(args.func(ctx))
    except ConfigError as e:
        print(f"{PROG}: config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"{PROG}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

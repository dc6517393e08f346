"""PNG figures for the CLI's ``--plot`` flag.

Each function takes already-computed numbers and a path; nothing here
feeds back into results. Output is written with fixed metadata so reruns
produce identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

golden = (np.sqrt(5.0) - 1.0) / 2.0
FIG_W = 5.0

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.figsize": (FIG_W, FIG_W * golden),
    "figure.dpi": 120,
    "svg.hashsalt": "latentserve",
}


def _new(nrows=1, ncols=1, **kw):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(nrows, ncols, **kw)
    return fig, ax


def _save(fig, path, title=None):
    if title:
        fig.suptitle(title, fontsize=9)
    fig.tight_layout()
    # drop the default Software tag so output does not depend on versions
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def cdf_plot(path, x, y, xlabel, ylabel="CDF", logx=False, title=None):
    fig, ax = _new()
    ax.step(x, y, where="post")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return _save(fig, path, title)


def age_decay_plot(path, rates: dict, title=None):
    fig, ax = _new()
    for label, v in rates.items():
        v = np.asarray(v, dtype=float)
        ages = np.arange(len(v))
        keep = v > 0
        if keep.any():
            ax.plot(ages[keep] + 1, v[keep], label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("age + 1 (days)")
    ax.set_ylabel("accesses / object / day")
    ax.legend()
    return _save(fig, path, title)


def mrc_plot(path, curves: dict, xlabel="capacity", title=None):
    """``curves`` maps policy name to ``[(capacity, miss_ratio), ...]``."""
    fig, ax = _new()
    for name, pts in curves.items():
        c, m = zip(*pts)
        ax.plot(c, m, marker="o", markersize=3, label=name)
    ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("miss ratio")
    ax.set_ylim(0, 1.02)
    ax.legend()
    return _save(fig, path, title)


def sim_plot(path, latencies, alpha_trajectory, title=None):
    fig, (a1, a2) = _new(1, 2, figsize=(2 * FIG_W, FIG_W * golden))
    x = np.sort(np.asarray(latencies))
    if len(x):
        a1.step(x, np.arange(1, len(x) + 1) / len(x), where="post")
    a1.set_xlabel("latency (ms)")
    a1.set_ylabel("CDF")
    for k, tr in enumerate(alpha_trajectory):
        a2.plot(np.arange(len(tr)), tr, label=f"node {k}")
    a2.set_xlabel("window")
    a2.set_ylabel("alpha")
    a2.set_ylim(-0.02, 1.02)
    if alpha_trajectory:
        a2.legend()
    return _save(fig, path, title)


def sweep_plot(path, alphas, means, p99s, title=None):
    fig, ax = _new()
    ax.plot(alphas, means, marker="o", label="mean")
    ax.plot(alphas, p99s, marker="s", label="P99")
    ax.set_xlabel("static alpha")
    ax.set_ylabel("latency (ms)")
    ax.legend()
    return _save(fig, path, title)


def spillover_plot(path, labels, mean_ms, queue_p99_ms, title=None):
    fig, ax = _new()
    x = np.arange(len(labels))
    w = 0.38
    ax.bar(x - w / 2, mean_ms, w, label="mean e2e")
    ax.bar(x + w / 2, queue_p99_ms, w, label="P99 GPU queue wait")
    ax.set_xticks(x, labels)
    ax.set_xlabel("theta")
    ax.set_ylabel("ms")
    ax.legend()
    return _save(fig, path, title)


def cost_plot(path, series: dict, years_at_month=None, title=None):
    """``series`` maps strategy to ``(months, normalized cumulative)``."""
    fig, ax = _new()
    for name, (m, y) in series.items():
        ax.plot(m, y, label=name)
    ax.set_yscale("log")
    ax.set_xlabel("month")
    ax.set_ylabel("cumulative cost (x ImgStore at trace end)")
    ax.legend()
    return _save(fig, path, title)

"""Trace format, synthetic workloads and trace statistics."""

from .records import (
    ObjectMeta,
    Trace,
    TraceRecord,
    read_catalog,
    read_trace,
    uniform_catalog,
    write_catalog,
    write_trace,
)
from .synth import SizeModel, SynthConfig, generate_trace, generation_report
from .stats import TraceStats, downsample, fit_zipf, trace_stats
from .mrc import miss_ratio_curve, stack_distances

__all__ = [
    "ObjectMeta",
    "SizeModel",
    "SynthConfig",
    "Trace",
    "TraceRecord",
    "TraceStats",
    "downsample",
    "fit_zipf",
    "generate_trace",
    "generation_report",
    "miss_ratio_curve",
    "read_catalog",
    "read_trace",
    "stack_distances",
    "trace_stats",
    "uniform_catalog",
    "write_catalog",
    "write_trace",
]

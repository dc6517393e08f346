"""Trace-driven simulation of a latent-first image serving tier.

Subpackages cover trace synthesis and analysis, the dual-format cache,
the online split tuner, routing, the discrete-event simulator and the
long-horizon storage cost model.
"""

__version__ = "0.1.0"

"""Top-level package for recsim."""

import importlib.metadata

__author__ = """happyherp"""
__email__ = "happyherp@users.noreply.github.com"

try:
    __version__ = importlib.metadata.version("recsim")
except importlib.metadata.PackageNotFoundError:  # pragma: no cover
    __version__ = "unknown"

# Export main entry points for easy importing
from .loadgen import gen_trace, trace_stats
from .models import ModelSpec, QueryTrace, SchedulerConfig, SimResult, TunedConfig
from .simulator import Simulator, max_qps_under_sla, simulate, summarize
from .tuner import Tuner, pareto, sweep, tune
from .zoo import builtin_model, work

__all__ = [
    "ModelSpec",
    "QueryTrace",
    "SchedulerConfig",
    "SimResult",
    "Simulator",
    "Tuner",
    "TunedConfig",
    "builtin_model",
    "gen_trace",
    "max_qps_under_sla",
    "pareto",
    "simulate",
    "summarize",
    "sweep",
    "trace_stats",
    "tune",
    "work",
]

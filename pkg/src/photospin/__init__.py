"""Simulation of photon-to-spin transfer in a coupled optical and gate-defined quantum dot.

Units throughout: µeV, ns, T.
"""
__version__ = "0.1.0"

from .params import ConfigError, DeviceParams, ProtocolConfig, load_config, load_preset
from .protocol import FailureBudget, ProtocolRun, budget_report, run_protocol, spectrum_trace

__all__ = [
    "__version__",
    "ConfigError",
    "DeviceParams",
    "ProtocolConfig",
    "load_config",
    "load_preset",
    "FailureBudget",
    "ProtocolRun",
    "budget_report",
    "run_protocol",
    "spectrum_trace",
]

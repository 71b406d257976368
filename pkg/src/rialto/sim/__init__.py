"""Experiment harness: order flow, protocol drivers, metrics and the CLI."""

from .config import PROTOCOLS, ConfigError, ExperimentConfig
from .experiment import ExperimentReport, run_experiment
from .metrics import RoundMetrics
from .orders import Intent, generate_orders
from .protocols import make_market

__all__ = [
    "PROTOCOLS",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentReport",
    "run_experiment",
    "RoundMetrics",
    "Intent",
    "generate_orders",
    "make_market",
]

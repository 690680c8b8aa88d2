"""Deterministic simulator of a deposit-backed, hash-locked escrow protocol
for computation outsourced to nodes with trusted execution hardware."""

from .config import ScenarioConfig
from .harness import (
    ScenarioOutcome,
    ScenarioRunner,
    dominance_check,
    gas_report,
    latency_report,
    payoff_matrix,
    run_scenario,
)

__all__ = [
    "ScenarioConfig",
    "ScenarioOutcome",
    "ScenarioRunner",
    "dominance_check",
    "gas_report",
    "latency_report",
    "payoff_matrix",
    "run_scenario",
]

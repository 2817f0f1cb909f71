"""Interval-bidding ML-powered combinatorial auction engine and experiment harness."""
from .domain import Instance, SyntheticDomainSpec, brute_force_optimum, generate_instance
from .mechanism import MechanismConfig, determine_outcome, run_auction
from .model import (
    Allocation,
    Bundle,
    IntervalReport,
    LinearPrices,
    Outcome,
    ReportSet,
    ValuationView,
)

__all__ = [
    "Allocation",
    "Bundle",
    "Instance",
    "IntervalReport",
    "LinearPrices",
    "MechanismConfig",
    "Outcome",
    "ReportSet",
    "SyntheticDomainSpec",
    "ValuationView",
    "brute_force_optimum",
    "determine_outcome",
    "generate_instance",
    "run_auction",
]

"""Benchmark observation models and synthetic data generators."""
from .linear import LinearModel, simulate_linear, truncated_normal_evidence
from .rv import (OrbitParams, RvModel, TRUE_PLANETS, mean_anomaly, rv_forward,
                 simulate_rv, solve_kepler, true_anomaly)
from .toy import ToyModel, simulate_toy, toy_forward

__all__ = [
    "LinearModel", "simulate_linear", "truncated_normal_evidence",
    "OrbitParams", "RvModel", "TRUE_PLANETS", "mean_anomaly", "rv_forward",
    "simulate_rv", "solve_kepler", "true_anomaly",
    "ToyModel", "simulate_toy", "toy_forward",
]

"""Simulation and estimation of performative power."""
from .core import (
    NULL_ACTION,
    ActionSet,
    CounterfactualSimulator,
    DataPoint,
    Metric,
    PowerEstimate,
    derive_rng,
    estimate_power,
)
from .kernels import BACKEND

__version__ = "0.1.0"

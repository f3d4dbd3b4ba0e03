"""Asynchronous distributed Kiefer-Wolfowitz stochastic approximation."""

from .engine import SimConfig, Trajectory, run, run_batch
from .objectives import NoiseModel, Objective, beta_lower_bound, pseudo_huber, quadratic
from .schedules import AgentTiming, PowerLawSchedule, event_time

__all__ = [
    "AgentTiming",
    "NoiseModel",
    "Objective",
    "PowerLawSchedule",
    "SimConfig",
    "Trajectory",
    "beta_lower_bound",
    "event_time",
    "pseudo_huber",
    "quadratic",
    "run",
    "run_batch",
]

__version__ = "0.1.0"

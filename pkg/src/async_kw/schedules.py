"""Gain and perturbation sequences, and agent event timing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class InactiveCycle(ValueError):
    """Raised when an agent has no experiment in the requested cycle."""


@dataclass(frozen=True)
class ScheduleReport:
    sum_gamma2_over_eps2_finite: bool
    sum_gamma_eps2_finite: bool
    gamma_over_eps2_bounded: bool
    sum_gamma_infinite: bool

    @property
    def valid(self) -> bool:
        return (
            self.sum_gamma2_over_eps2_finite
            and self.sum_gamma_eps2_finite
            and self.gamma_over_eps2_bounded
            and self.sum_gamma_infinite
        )

    def as_dict(self) -> dict:
        return {
            "sum_gamma2_over_eps2_finite": self.sum_gamma2_over_eps2_finite,
            "sum_gamma_eps2_finite": self.sum_gamma_eps2_finite,
            "gamma_over_eps2_bounded": self.gamma_over_eps2_bounded,
            "sum_gamma_infinite": self.sum_gamma_infinite,
            "valid": self.valid,
        }


@dataclass(frozen=True)
class PowerLawSchedule:
    """gamma(n) = (n + s)^-g and epsilon(n) = (n + s)^-e."""

    gamma_exponent: float
    epsilon_exponent: float
    index_shift: int = 1

    validated = True

    def __post_init__(self):
        if not self.gamma_exponent > 0 or not self.epsilon_exponent > 0:
            raise ValueError("schedule exponents must be positive")
        if int(self.index_shift) != self.index_shift or self.index_shift < 1:
            raise ValueError("index_shift must be a positive integer")

    def gamma(self, n):
        return _power(n, self.index_shift, self.gamma_exponent)

    def epsilon(self, n):
        return _power(n, self.index_shift, self.epsilon_exponent)

    def rho(self, n):
        g, e = self.gamma(n), self.epsilon(n)
        return np.maximum(g * g / e, g * e * e)

    def kappa(self, n):
        g, e = self.gamma(n), self.epsilon(n)
        return np.maximum(g * g / (e * e), g * e * e)

    def validate(self) -> ScheduleReport:
        return validate(self)


@dataclass(frozen=True)
class CustomSchedule:
    """User-supplied sequences. Never validated; runs must opt in explicitly."""

    gamma_fn: Callable[[int], float]
    epsilon_fn: Callable[[int], float]

    validated = False

    def gamma(self, n):
        return _apply(self.gamma_fn, n)

    def epsilon(self, n):
        return _apply(self.epsilon_fn, n)


def _power(n, shift, exponent):
    if np.ndim(n) == 0:
        if n < 0:
            raise ValueError("cycle index must be non-negative")
        # same code path as arrays so scalar and batched values agree bitwise
        return float(np.power(np.array([n + shift], dtype=float), -exponent)[0])
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise ValueError("cycle index must be non-negative")
    return np.power(n + shift, -exponent)


def _apply(fn, n):
    if np.ndim(n) == 0:
        return float(fn(int(n)))
    return np.array([fn(int(i)) for i in np.asarray(n)], dtype=float)


def gamma(schedule: PowerLawSchedule, n):
    return schedule.gamma(n)


def epsilon(schedule: PowerLawSchedule, n):
    return schedule.epsilon(n)


def validate(schedule: PowerLawSchedule) -> ScheduleReport:
    """Check the step-size conditions for a power-law pair by p-series tests.

    The terms are (n+s)^-p, so each sum is finite iff p > 1, and the ratio
    gamma/eps^2 = (n+s)^-(g-2e) is bounded iff g >= 2e.
    """
    g, e = schedule.gamma_exponent, schedule.epsilon_exponent
    return ScheduleReport(
        sum_gamma2_over_eps2_finite=2.0 * (g - e) > 1.0,
        sum_gamma_eps2_finite=g + 2.0 * e > 1.0,
        gamma_over_eps2_bounded=g >= 2.0 * e,
        sum_gamma_infinite=g <= 1.0,
    )


@dataclass(frozen=True)
class AgentTiming:
    tau: int
    phase: int

    def __post_init__(self):
        if self.tau < 2:
            raise ValueError("tau must be at least 2")
        if not 0 <= self.phase < self.tau:
            raise ValueError(f"phase must lie in [0, {self.tau - 1}]")


def event_time(timing: AgentTiming, n: int) -> int:
    """Return T_k(n). The agent experiments at T+1 and updates at T+2.

    Agents in the last phase slot would experiment at tick 0 of cycle 0
    using a state that predates initialization; that cycle is skipped.
    """
    if n < 0:
        raise ValueError("cycle index must be non-negative")
    t = n * timing.tau + timing.phase
    if timing.phase == timing.tau - 1:
        t -= timing.tau
    if t < 0:
        raise InactiveCycle(f"agent with phase {timing.phase} is inactive in cycle {n}")
    return t

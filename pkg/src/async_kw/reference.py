"""Textbook iterations that the asynchronous engine must reduce to.

A single agent is the classic two-observation Kiefer-Wolfowitz recursion;
agents sharing one phase perform simultaneous-perturbation updates. Both are
written as plain per-cycle loops, sharing only the random streams with the
engine.
"""

from __future__ import annotations

import numpy as np

from .engine import agent_stream


def _draw(rng, noise):
    u = rng.random(2)
    a = -1.0 if u[0] < 0.5 else 1.0
    return a, float(noise.from_uniform(u[1]))


def kiefer_wolfowitz(objective, schedule, noise, x0, n_cycles, seed, fault=False):
    """One-dimensional recursion x <- x + gamma * (f(x + a*eps) - f(x) + eta) / (a*eps).

    Returns the iterate after each cycle, shape (n_cycles + 1,). ``fault``
    shifts the schedule index by one (used to prove mismatches are caught).
    """
    rng = agent_stream(seed, 0)
    x = float(x0)
    out = [x]
    for n in range(n_cycles):
        m = n + 1 if fault else n
        eps, gam = schedule.epsilon(m), schedule.gamma(m)
        a, eta = _draw(rng, noise)
        f_before = objective.value(np.array([x]))
        f_after = objective.value(np.array([x + a * eps]))
        g = (f_after - f_before + eta) / (a * eps)
        x = x + g * gam
        out.append(float(x))
    return np.array(out)


def simultaneous_perturbation(objective, schedule, noise, x0, n_cycles, seed, fault=False):
    """All coordinates perturbed together; each agent adds its own noise draw.

    Returns iterates of shape (n_cycles + 1, K).
    """
    K = objective.dimension
    rngs = [agent_stream(seed, k) for k in range(K)]
    x = np.array(x0, dtype=float)
    out = [x.copy()]
    for n in range(n_cycles):
        m = n + 1 if fault else n
        eps, gam = schedule.epsilon(m), schedule.gamma(m)
        draws = [_draw(r, noise) for r in rngs]
        a = np.array([d[0] for d in draws])
        eta = np.array([d[1] for d in draws])
        f_before = objective.value(x)
        f_after = objective.value(x + a * eps)
        g = (f_after - f_before + eta) / (a * eps)
        x = x + g * gam
        out.append(x.copy())
    return np.array(out)

"""Measured counterparts of the convergence argument.

These functions take finished trajectories and report the quantities that
the descent argument bounds: distance to the maximizer, the projected
gradient-estimate residual and its running sum, the small-ball increments
u(n+1)^2 - u(n)^2, and pointwise concavity margins.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Optional

import numpy as np

from .engine import SimConfig, Trajectory
from .objectives import NoiseModel, Objective


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class DescentReport:
    delta: float
    beta: float
    u: np.ndarray  # (N+1,)
    above: np.ndarray  # (N,) u(n) > delta
    alpha_hat: np.ndarray  # (N,)
    slack: np.ndarray  # (N,) u(n) - [gamma*beta - alpha_hat] - u(n+1); >= 0 when the step descends
    c_hat: np.ndarray  # (N,) u(n+1)^2 - u(n)^2 where u(n) <= delta, NaN elsewhere

    @property
    def n_above(self) -> int:
        return int(self.above.sum())

    @property
    def n_below(self) -> int:
        return int((~self.above).sum())


@dataclass(frozen=True)
class BiasReport:
    gamma: np.ndarray  # (N,)
    epsilon: np.ndarray  # (N,)
    residual: np.ndarray  # (N, K) eps * (g - grad f(z))
    h: np.ndarray  # (N, K) direction cosines of z - x*
    increments: np.ndarray  # (N,) (gamma/eps) * sum_k h_k r_k
    running_sum: np.ndarray  # (N,)

    @property
    def kappa(self) -> np.ndarray:
        g, e = self.gamma, self.epsilon
        return np.maximum(g * g / (e * e), g * e * e)


@dataclass(frozen=True)
class MartingaleVerdict:
    consistent: bool
    oscillation: float
    total_range: float
    kappa_tail: float

    @property
    def verdict(self) -> str:
        return "consistent" if self.consistent else "inconsistent"


@dataclass(frozen=True)
class SmallBallReport:
    cycles: np.ndarray
    c_hat: np.ndarray
    first_quantile: float
    last_quantile: float
    last_max: float
    decaying: bool

    @property
    def verdict(self) -> str:
        return "decaying" if self.decaying else "non-decaying"


def direction_cosines(z, x_star):
    d = np.asarray(z, dtype=float) - x_star
    u = np.linalg.norm(d, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        h = np.where(u > 0, d / u, 0.0)
    return h


def bias_report(traj: Trajectory, obj: Objective) -> BiasReport:
    N = traj.n_cycles
    z = traj.z[:N]
    gam, eps = traj.gamma[:N], traj.epsilon[:N]
    residual = eps[:, None] * (traj.g - obj.gradient(z))
    h = direction_cosines(z, obj.maximizer)
    incr = (gam / eps) * np.sum(h * residual, axis=1)
    return BiasReport(gam, eps, residual, h, incr, np.cumsum(incr))


def descent_report(traj: Trajectory, obj: Objective, delta: float, beta: float) -> DescentReport:
    N = traj.n_cycles
    u = traj.u
    alpha = bias_report(traj, obj).increments
    above = u[:N] > delta
    slack = u[:N] - (traj.gamma[:N] * beta - alpha) - u[1:]
    c_hat = np.where(above, np.nan, u[1:] ** 2 - u[:N] ** 2)
    return DescentReport(delta, beta, u, above, alpha, slack, c_hat)


def martingale_sums(report: BiasReport, oscillation_frac: float = 0.1) -> MartingaleVerdict:
    """Cauchy check on the running sums S(m).

    Consistent iff the spread of S over the second half of the run is at most
    ``oscillation_frac`` of its spread over the whole run.
    """
    S = report.running_sum
    N = S.size
    if N < 200:
        raise InsufficientData(f"need at least 200 cycles, got {N}")
    total = float(S.max() - S.min())
    tail = S[N // 2 :]
    osc = float(tail.max() - tail.min())
    kappa_tail = float(np.sum(report.kappa[N // 2 :]))
    return MartingaleVerdict(osc <= oscillation_frac * total, osc, total, kappa_tail)


def small_ball_report(traj: Trajectory, delta: float, quantile: float = 0.9) -> SmallBallReport:
    u = traj.u
    N = traj.n_cycles
    cycles = np.flatnonzero(u[:N] <= delta)
    if cycles.size < 20:
        raise InsufficientData(f"only {cycles.size} cycles inside the ball of radius {delta}")
    c = u[cycles + 1] ** 2 - u[cycles] ** 2
    a = np.abs(c)
    q = cycles.size // 4
    first = float(np.quantile(a[:q], quantile))
    last = float(np.quantile(a[-q:], quantile))
    last_max = float(a[-q:].max())
    decaying = last <= first and last_max <= 3.0 * delta**2
    return SmallBallReport(cycles, c, first, last, last_max, decaying)


def drift_ratio_spread(traj: Trajectory, start: int = 10) -> float:
    """max / median of |w(n)| eps(n) / gamma(n) over n >= start."""
    r = traj.drift_ratio[start:]
    return float(r.max() / np.median(r))


def gradient_bound_violations(traj: Trajectory, obj: Objective, noise: NoiseModel) -> int:
    N = traj.n_cycles
    bound = obj.lipschitz + noise.effective_bound / traj.epsilon[:N] + 1e-9
    return int(np.sum(np.abs(traj.g) > bound[:, None]))


@dataclass(frozen=True)
class ConcavityCheck:
    supporting_max: float  # max of (z-x*)'grad f(z) - (f(z) - f*)
    margin_max: float  # max of f(z) - (f* - beta u) over u >= delta
    n_checked_margin: int

    def holds(self, tol: float = 1e-9) -> bool:
        return self.supporting_max <= tol and self.margin_max <= tol


def concavity_check(traj: Trajectory, obj: Objective, delta: float, beta: float) -> ConcavityCheck:
    z = traj.z
    f_star = obj.max_value
    d = z - obj.maximizer
    f = obj.value(z)
    supporting = np.sum(d * obj.gradient(z), axis=1) - (f - f_star)
    u = np.linalg.norm(d, axis=1)
    far = u >= delta
    margin = f[far] - (f_star - beta * u[far])
    return ConcavityCheck(
        float(supporting.max()),
        float(margin.max()) if margin.size else -np.inf,
        int(far.sum()),
    )


def _block_offsets(config: SimConfig, n: int):
    """Experiment tick of every agent in cycle n, relative to the block start."""
    tau = config.tau
    T = np.array(
        [n * tau + p - (tau if p == tau - 1 else 0) for p in config.phases], dtype=int
    )
    return T + 1 - T.min()


def block_gradients(
    obj: Objective,
    z,
    config: SimConfig,
    signs: np.ndarray,
    noise: np.ndarray,
    epsilon: float,
    gamma: float,
) -> np.ndarray:
    """Gradient estimates of one isolated cycle for each row of ``signs``.

    The block starts with x = z and no experiment in flight; only the
    cycle's own experiments and updates take place.
    """
    z = np.asarray(z, dtype=float)
    M, K = signs.shape
    exp_at = _block_offsets(config, 0)
    x = np.tile(z, (M, 1))
    f_before = np.zeros((M, K))
    g = np.zeros((M, K))
    for t in range(1, exp_at.max() + 2):
        fx = obj.value(x)
        updating = [k for k in range(K) if exp_at[k] + 1 == t]
        experimenting = [k for k in range(K) if exp_at[k] == t]
        for k in updating:
            g[:, k] = (fx - f_before[:, k] + noise[:, k]) / (signs[:, k] * epsilon)
        for k in updating:
            x[:, k] = z[k] + gamma * g[:, k]
        for k in experimenting:
            f_before[:, k] = fx
            x[:, k] = z[k] + signs[:, k] * epsilon
    return g


def bias_expectation_oracle(
    obj: Objective,
    z,
    config: SimConfig,
    n: int,
    mode: str = "exhaustive",
    samples: int = 100_000,
    updates: str = "frozen",
    epsilon: Optional[float] = None,
    gamma: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
    return_stderr: bool = False,
):
    """E[g_k(n)] for one cycle started from z.

    ``exhaustive`` averages over all 2^K sign vectors with equal weight and
    needs zero noise; ``monte-carlo`` averages ``samples`` independent sign
    and noise draws. With ``updates="frozen"`` the updates inside the block
    use gamma = 0, isolating the corruption caused by experiments.
    """
    K = config.K
    eps = config.schedule.epsilon(n) if epsilon is None else float(epsilon)
    if updates == "frozen":
        gam = 0.0
    elif updates == "live":
        gam = config.schedule.gamma(n) if gamma is None else float(gamma)
    else:
        raise ValueError(f"unknown update mode {updates!r}")

    if mode == "exhaustive":
        if config.noise.effective_bound != 0.0:
            raise ValueError("exhaustive mode requires zero noise")
        if K > 12:
            raise ValueError("exhaustive mode supports at most 12 agents")
        signs = np.array(list(product([-1.0, 1.0], repeat=K)))
        noise = np.zeros_like(signs)
    elif mode == "monte-carlo":
        rng = np.random.default_rng() if rng is None else rng
        signs = rng.choice([-1.0, 1.0], size=(samples, K))
        noise = config.noise.from_uniform(rng.random((samples, K)))
    else:
        raise ValueError(f"unknown oracle mode {mode!r}")

    g = block_gradients(obj, z, config, signs, noise, eps, gam)
    mean = g.mean(axis=0)
    if not return_stderr:
        return mean
    stderr = g.std(axis=0, ddof=1) / np.sqrt(g.shape[0]) if mode == "monte-carlo" else np.zeros(K)
    return mean, stderr

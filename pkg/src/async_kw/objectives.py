"""Concave test functions and bounded observation noise.

Value and gradient oracles accept a single point of shape (K,) or a batch of
shape (..., K) and reduce over the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class NonStrictConcavity(ValueError):
    """The computed strict-concavity margin is not positive."""


@dataclass(frozen=True, eq=False)
class Objective:
    name: str
    dimension: int
    maximizer: np.ndarray
    lipschitz: float
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    # Trajectories of locally Lipschitz objectives must stay inside this ball.
    ball_radius: Optional[float] = None
    params: dict = field(default_factory=dict)

    @property
    def max_value(self) -> float:
        return float(self.value(self.maximizer))


def _as_maximizer(K, x_star):
    if K < 1:
        raise ValueError("dimension must be at least 1")
    x_star = np.zeros(K) if x_star is None else np.array(x_star, dtype=float)
    if x_star.shape != (K,):
        raise ValueError(f"maximizer must have shape ({K},), got {x_star.shape}")
    x_star.setflags(write=False)
    return x_star


def pseudo_huber(K: int, x_star=None) -> Objective:
    """f(x) = -sum_i (sqrt(1 + (x_i - x*_i)^2) - 1).

    Globally Lipschitz with constant sqrt(K), bounded derivatives of every
    order, strictly concave everywhere.
    """
    x_star = _as_maximizer(K, x_star)

    def value(x):
        d = np.asarray(x, dtype=float) - x_star
        return -np.sum(np.sqrt(1.0 + d * d) - 1.0, axis=-1)

    def gradient(x):
        d = np.asarray(x, dtype=float) - x_star
        return -d / np.sqrt(1.0 + d * d)

    def hessian(x):
        d = np.asarray(x, dtype=float) - x_star
        return np.diag(-(1.0 + d * d) ** -1.5)

    return Objective(
        name="pseudo_huber",
        dimension=K,
        maximizer=x_star,
        lipschitz=float(np.sqrt(K)),
        value=value,
        gradient=gradient,
        hessian=hessian,
    )


def quadratic(K: int, x_star=None, A=None, ball_radius: float = 10.0) -> Objective:
    """f(x) = -(x - x*)' A (x - x*) for symmetric positive-definite A.

    Only locally Lipschitz: the reported constant holds on the ball of
    radius ``ball_radius`` around x*, and runs abort if they leave it.
    """
    x_star = _as_maximizer(K, x_star)
    A = np.eye(K) if A is None else np.array(A, dtype=float)
    if A.shape != (K, K):
        raise ValueError(f"matrix must have shape ({K}, {K}), got {A.shape}")
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-12):
        raise ValueError("matrix must be symmetric")
    eigvals = np.linalg.eigvalsh(A)
    if eigvals.min() <= 0:
        raise ValueError("matrix must be positive definite")
    A.setflags(write=False)

    def value(x):
        d = np.asarray(x, dtype=float) - x_star
        return -np.einsum("...i,ij,...j->...", d, A, d)

    def gradient(x):
        d = np.asarray(x, dtype=float) - x_star
        return -2.0 * d @ A

    def hessian(x):
        return -2.0 * A

    return Objective(
        name="quadratic",
        dimension=K,
        maximizer=x_star,
        lipschitz=float(2.0 * eigvals.max() * ball_radius),
        value=value,
        gradient=gradient,
        hessian=hessian,
        ball_radius=float(ball_radius),
        params={"A": A},
    )


def beta_lower_bound(
    obj: Objective,
    delta: float,
    search_radius: Optional[float] = None,
    n_directions: int = 4096,
    n_radii: int = 64,
    seed: int = 0,
) -> float:
    """Strict-concavity margin: the largest beta found with
    f(z) <= f(x*) - beta * |z - x*| on |z - x*| >= delta.

    For concave f the gap ratio (f(x*) - f(z)) / |z - x*| is non-decreasing
    along every ray from x*, so the minimum sits on the sphere of radius
    delta. That sphere is sampled densely (coordinate axes, diagonals and
    random directions); the outward monotonicity is checked on radii up to
    ten times ``search_radius``.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    R = 10.0 * delta if search_radius is None else float(search_radius)
    if R <= delta:
        raise ValueError("search radius must exceed delta")

    dirs = _shell_directions(obj.dimension, n_directions, seed)
    f_star = obj.max_value

    def ratio(r):
        z = obj.maximizer + r * dirs
        return (f_star - obj.value(z)) / r

    radii = np.geomspace(delta, 10.0 * R, n_radii)
    ratios = np.array([ratio(r) for r in radii])
    # non-decreasing outward along each ray, up to rounding
    drops = ratios[:-1] - ratios[1:]
    if np.any(drops > 1e-9 * (1.0 + np.abs(ratios[:-1]))):
        raise NonStrictConcavity("gap ratio decreases outward; objective is not concave")

    beta = float(ratios[0].min())
    if not beta > 0:
        raise NonStrictConcavity(f"computed beta = {beta} is not positive")
    return beta


def _shell_directions(K, n_random, seed):
    eye = np.eye(K)
    dirs = [eye, -eye]
    if K > 1:
        # every sign pattern of the main diagonal for small K, a sample otherwise
        if K <= 10:
            signs = np.array(np.meshgrid(*[[-1.0, 1.0]] * K)).reshape(K, -1).T
        else:
            signs = np.random.default_rng(seed).choice([-1.0, 1.0], size=(1024, K))
        dirs.append(signs / np.sqrt(K))
    rand = np.random.default_rng(seed).standard_normal((n_random, K))
    dirs.append(rand / np.linalg.norm(rand, axis=1, keepdims=True))
    return np.vstack(dirs)


NOISE_DISTRIBUTIONS = ("uniform", "rademacher", "zero")


@dataclass(frozen=True)
class NoiseModel:
    """Independent, zero-mean noise bounded by ``bound`` in absolute value."""

    bound: float = 0.1
    distribution: str = "uniform"

    def __post_init__(self):
        if self.distribution not in NOISE_DISTRIBUTIONS:
            raise ValueError(f"unknown noise distribution {self.distribution!r}")
        if self.bound < 0:
            raise ValueError("noise bound must be non-negative")

    @property
    def effective_bound(self) -> float:
        return 0.0 if self.distribution == "zero" else float(self.bound)

    def from_uniform(self, u):
        """Map uniform [0, 1) draws to noise values."""
        if self.distribution == "uniform":
            return self.bound * (2.0 * u - 1.0)
        if self.distribution == "rademacher":
            return np.where(u < 0.5, -self.bound, self.bound)
        return np.zeros_like(u, dtype=float)


def sample_noise(model: NoiseModel, rng: np.random.Generator) -> float:
    return float(model.from_uniform(rng.random()))

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from async_kw.objectives import (
    NoiseModel,
    NonStrictConcavity,
    Objective,
    beta_lower_bound,
    pseudo_huber,
    quadratic,
    sample_noise,
)

from .oracles import central_difference

BUILTINS = {
    "huber1": lambda: pseudo_huber(1, [0.3]),
    "huber4": lambda: pseudo_huber(4, [1.0, -2.0, 0.5, 3.0]),
    "quad2": lambda: quadratic(2, [0.5, -0.5], [[2.0, 1.0], [1.0, 2.0]], ball_radius=20.0),
    "quad3": lambda: quadratic(3, [0.0, 1.0, -1.0], np.diag([1.0, 0.5, 3.0]), ball_radius=20.0),
}


@pytest.fixture(params=sorted(BUILTINS))
def objective(request):
    return BUILTINS[request.param]()


def _points(obj, n, radius, seed):
    rng = np.random.default_rng(seed)
    return obj.maximizer + rng.uniform(-radius, radius, size=(n, obj.dimension))


def test_pseudo_huber_examples():
    f = pseudo_huber(2, [0.0, 0.0])
    assert f.value(np.array([0.0, 0.0])) == 0.0
    assert f.value(np.array([3.0, 4.0])) == pytest.approx(-(math.sqrt(10) - 1) - (math.sqrt(17) - 1), rel=1e-14)
    assert f.value(np.array([3.0, 4.0])) == pytest.approx(-5.28539, abs=1e-5)
    g = pseudo_huber(1, [0.0]).gradient(np.array([1.0]))
    assert g[0] == pytest.approx(-1 / math.sqrt(2), rel=1e-14)
    assert f.lipschitz == pytest.approx(math.sqrt(2))


def test_quadratic_examples():
    f = quadratic(2)
    assert f.value(np.array([1.0, 1.0])) == -2.0
    assert np.array_equal(f.gradient(np.array([1.0, 1.0])), [-2.0, -2.0])
    f = quadratic(2, A=[[2.0, 1.0], [1.0, 2.0]])
    assert f.value(np.array([1.0, 0.0])) == -2.0
    assert np.array_equal(f.hessian(np.zeros(2)), -2 * np.array([[2.0, 1.0], [1.0, 2.0]]))


@pytest.mark.parametrize(
    "A",
    [[[1.0, 2.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, -1.0]], [[0.0, 0.0], [0.0, 0.0]]],
    ids=["asymmetric", "indefinite", "singular"],
)
def test_quadratic_rejects_bad_matrix(A):
    with pytest.raises(ValueError):
        quadratic(2, A=A)


def test_batch_and_single_evaluation_agree(objective):
    X = _points(objective, 50, 3.0, 1)
    batch = objective.value(X)
    single = np.array([objective.value(x) for x in X])
    assert np.array_equal(batch, single)
    assert np.array_equal(objective.gradient(X), np.array([objective.gradient(x) for x in X]))


def test_concavity_on_random_chords(objective):
    rng = np.random.default_rng(2)
    X = _points(objective, 2000, 5.0, 3)
    Y = _points(objective, 2000, 5.0, 4)
    lam = rng.uniform(0, 1, size=(2000, 1))
    f = objective.value
    lhs = f(lam * X + (1 - lam) * Y)
    rhs = lam[:, 0] * f(X) + (1 - lam[:, 0]) * f(Y)
    slack = 1e-9 * (1 + np.abs(f(X)) + np.abs(f(Y)))
    assert np.all(lhs >= rhs - slack)


def test_gradient_vanishes_at_maximizer(objective):
    assert np.all(np.abs(objective.gradient(objective.maximizer)) <= 1e-9)


def test_gradient_matches_finite_differences(objective):
    for x in _points(objective, 40, 3.0, 5):
        fd = central_difference(objective.value, x, h=1e-5)
        g = objective.gradient(x)
        assert np.allclose(g, fd, rtol=1e-6, atol=1e-6 * np.abs(g).max())


def test_hessian_matches_finite_differences_of_gradient(objective):
    for x in _points(objective, 10, 2.0, 6):
        H = objective.hessian(x)
        fd = np.column_stack(
            [central_difference(lambda y: objective.gradient(y)[i], x) for i in range(objective.dimension)]
        )
        assert np.allclose(H, fd, rtol=1e-5, atol=1e-7)


def test_lipschitz_on_sampled_pairs(objective):
    radius = 5.0 if objective.ball_radius is None else objective.ball_radius / 2
    X = _points(objective, 5000, radius / np.sqrt(objective.dimension), 7)
    Y = _points(objective, 5000, radius / np.sqrt(objective.dimension), 8)
    gap = np.abs(objective.value(X) - objective.value(Y))
    assert np.all(gap <= objective.lipschitz * np.linalg.norm(X - Y, axis=1) + 1e-12)


def test_supporting_hyperplane_inequality(objective):
    # (z - x*)' grad f(z) <= f(z) - f(x*) on 10^4 points within radius 10
    rng = np.random.default_rng(9)
    d = rng.standard_normal((10_000, objective.dimension))
    d *= (10 * rng.uniform(0, 1, (10_000, 1)) ** (1 / objective.dimension)) / np.linalg.norm(d, axis=1, keepdims=True)
    z = objective.maximizer + d
    lhs = np.sum(d * objective.gradient(z), axis=1)
    rhs = objective.value(z) - objective.max_value
    assert np.all(lhs <= rhs + 1e-9)


def test_beta_examples():
    beta = beta_lower_bound(pseudo_huber(1, [0.0]), 1.0)
    # 1-D: min over d >= 1 of (sqrt(1+d^2)-1)/d is at d = 1
    assert beta == pytest.approx(math.sqrt(2) - 1, rel=1e-12)
    assert beta == pytest.approx(0.41421, abs=1e-5)
    assert beta_lower_bound(quadratic(1, A=[[1.0]]), 1.0, 10.0) == pytest.approx(1.0, rel=1e-12)


def test_beta_pseudo_huber_2d_matches_grid():
    obj = pseudo_huber(2, [0.0, 0.0])
    delta = 0.5
    beta = beta_lower_bound(obj, delta)
    # independent fine angular grid on the circle of radius delta
    theta = np.linspace(0, 2 * np.pi, 200_001)
    z = delta * np.column_stack([np.cos(theta), np.sin(theta)])
    grid = np.min(-obj.value(z) / delta)
    assert beta > 0
    assert beta == pytest.approx(grid, rel=1e-9)
    # the coordinate axes are the minimizers: (sqrt(1 + delta^2) - 1)/delta
    assert beta == pytest.approx((math.sqrt(1 + delta**2) - 1) / delta, rel=1e-12)


@pytest.mark.parametrize("delta", [0.1, 0.5, 2.0])
def test_beta_margin_holds_on_fresh_shell_points(objective, delta):
    R = 10.0
    beta = beta_lower_bound(objective, delta, R)
    rng = np.random.default_rng(10)
    d = rng.standard_normal((10_000, objective.dimension))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = rng.uniform(delta, R, size=(10_000, 1))
    z = objective.maximizer + r * d
    assert np.all(objective.value(z) <= objective.max_value - beta * r[:, 0] + 1e-9)


def test_beta_rejects_bad_arguments():
    obj = pseudo_huber(2)
    with pytest.raises(ValueError):
        beta_lower_bound(obj, 0.0)
    with pytest.raises(ValueError):
        beta_lower_bound(obj, 1.0, 0.5)


def test_beta_flags_non_strict_objective():
    flat = Objective(
        name="flat",
        dimension=2,
        maximizer=np.zeros(2),
        lipschitz=1.0,
        value=lambda x: np.zeros(np.shape(x)[:-1]),
        gradient=lambda x: np.zeros(np.shape(x)),
    )
    with pytest.raises(NonStrictConcavity):
        beta_lower_bound(flat, 1.0)


def test_noise_examples():
    rng = np.random.default_rng(0)
    assert sample_noise(NoiseModel(0.1, "zero"), rng) == 0.0
    for _ in range(100):
        assert sample_noise(NoiseModel(0.1, "rademacher"), rng) in (-0.1, 0.1)
        assert -0.1 <= sample_noise(NoiseModel(0.1, "uniform"), rng) <= 0.1


@pytest.mark.parametrize("dist", ["uniform", "rademacher", "zero"])
def test_noise_bounded_and_zero_mean(dist):
    G = 0.1
    model = NoiseModel(G, dist)
    eta = model.from_uniform(np.random.default_rng(1).random(10**6))
    assert np.all(np.abs(eta) <= G)
    assert abs(eta.mean()) <= 4 * G / 1e3


def test_noise_rejects_unknown_distribution():
    with pytest.raises(ValueError):
        NoiseModel(0.1, "gaussian")


@settings(max_examples=50, deadline=None)
@given(
    K=st.integers(1, 6),
    seed=st.integers(0, 2**32 - 1),
)
def test_pseudo_huber_properties(K, seed):
    rng = np.random.default_rng(seed)
    obj = pseudo_huber(K, rng.uniform(-5, 5, K))
    z = obj.maximizer + rng.uniform(-20, 20, (100, K))
    assert np.all(obj.value(z) <= obj.max_value)
    assert np.all(np.linalg.norm(obj.gradient(z), axis=1) <= obj.lipschitz)

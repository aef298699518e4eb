import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_invertible, seeded_points
from matleaf.errors import DomainError, NonFiniteDerivative
from matleaf.jets import Jet1, LeftInvariantDirection, identity
from matleaf.response import ScalarProfile, check_translation_invariance, radial_model


def test_evaluate_hand_value(models):
    # f(0.25) = 1.25 and F F^T - I = diag(3, 0, 0)
    g = Jet1((0.5, 0, 0), (0.1, 0.2, 0.3), np.diag([2.0, 1.0, 1.0]))
    assert np.allclose(models["monotone"].evaluate(g), np.diag([3.75, 0, 0]), atol=1e-15)


def test_derivative_hand_value(models):
    # f' = 1, 2 <X, v> = 1, so the base term is diag(3, 0, 0)
    g = Jet1((0.5, 0, 0), (0.5, 0, 0), np.diag([2.0, 1.0, 1.0]))
    d = LeftInvariantDirection((1, 0, 0), np.zeros((3, 3)))
    assert np.allclose(models["monotone"].directional_derivative(g, d), np.diag([3.0, 0, 0]), atol=1e-15)


def test_skew_generators_are_invisible_at_identity(models):
    lam = np.array([[0, 1.0, -2.0], [-1.0, 0, 0.5], [2.0, -0.5, 0]])
    d = LeftInvariantDirection(np.zeros(3), lam)
    for m in models.values():
        assert np.max(np.abs(m.directional_derivative(identity((0.3, 0.2, 0.1)), d))) == 0.0


def test_identity_evaluates_to_zero(models):
    for X in seeded_points(1, 20, 0.0, 0.95):
        for m in models.values():
            assert not np.any(m.evaluate(identity(X)))


def test_profile_values():
    assert ScalarProfile.plateau(0.5).value(0.25) == 1.0
    assert ScalarProfile.plateau(0.5).value(0.36) == pytest.approx(1 + np.exp(-1 / 0.11))
    assert ScalarProfile.plateau(0.5).derivative(0.2) == 0.0
    w = ScalarProfile.wiggle(0.125)
    # equal values at radii 0.3 and 0.4
    assert w.value(0.09) == pytest.approx(1.001225)
    assert w.value(0.16) == pytest.approx(w.value(0.09))
    assert w.derivative(0.125) == 0.0
    assert ScalarProfile.monotone().derivative(0.7) == 1.0


def test_plateau_derivative_finite_near_threshold():
    p = ScalarProfile.plateau(0.5)
    t = 0.25 + np.logspace(-12, -1, 50)
    d = p.derivative(t)
    assert np.all(np.isfinite(d)) and np.all(d >= 0)


def test_profile_validation():
    with pytest.raises(ValueError):
        ScalarProfile("cubic")
    with pytest.raises(ValueError):
        ScalarProfile.plateau(0.0)
    with pytest.raises(ValueError):
        ScalarProfile("user")


def test_analytic_matches_finite_differences(models):
    rng = np.random.default_rng(5)
    for m in models.values():
        fd = m.without_analytic()
        for X in seeded_points(2, 100, 0.0, 0.95):
            g = Jet1(X, X, random_invertible(rng))
            d = LeftInvariantDirection(rng.standard_normal(3), rng.standard_normal((3, 3)))
            a = m.directional_derivative(g, d)
            b = fd.directional_derivative(g, d)
            assert np.max(np.abs(a - b)) <= 1e-6 * (1 + np.max(np.abs(a)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_linearity_in_direction(seed):
    m = radial_model(ScalarProfile.wiggle(0.125))
    rng = np.random.default_rng(seed)
    X = seeded_points(seed, 1, 0.0, 0.9)[0]
    g = Jet1(X, (0, 0, 0), random_invertible(rng))
    u, w = rng.standard_normal(12), rng.standard_normal(12)
    a, b = rng.standard_normal(2)
    D = LeftInvariantDirection.from_vector
    lhs = m.directional_derivative(g, D(a * u + b * w))
    rhs = a * m.directional_derivative(g, D(u)) + b * m.directional_derivative(g, D(w))
    assert np.max(np.abs(lhs - rhs)) <= 1e-8 * (1 + np.max(np.abs(lhs)))


def test_jacobian_matches_directional_derivative(models):
    rng = np.random.default_rng(3)
    Fs = np.array([random_invertible(rng) for _ in range(4)])
    X = np.array([0.3, -0.2, 0.4])
    for m in models.values():
        J = m.jacobian(X, Fs)
        J_fd = m.without_analytic().jacobian(X, Fs)
        assert np.max(np.abs(J - J_fd)) < 1e-8
        w = rng.standard_normal(12)
        for k, F in enumerate(Fs):
            d = m.directional_derivative(Jet1(X, X, F), LeftInvariantDirection.from_vector(w))
            assert np.allclose(J[k] @ w, d.reshape(9), atol=1e-12)
        Xs = np.array([X, -X, 0.5 * X])
        assert np.array_equal(m.jacobian_at(Xs, Fs)[1], m.jacobian(-X, Fs))


def test_translation_invariance_passes_for_builtin(models):
    for m in models.values():
        out = check_translation_invariance(m, 50, 0)
        assert out["passed"] and out["max_deviation"] == 0.0


def test_translation_invariance_catches_target_dependence(models):
    base = models["monotone"]

    class ReadsTarget:
        body = base.body

        def evaluate(self, g):
            return base.evaluate(g) + 1e-9 * g.target[0]

    out = check_translation_invariance(ReadsTarget(), 20, 0)
    assert not out["passed"] and out["max_deviation"] > 0


def test_outside_body_rejected(models):
    with pytest.raises(DomainError):
        models["constant"].evaluate(Jet1((1.0, 0, 0), (0, 0, 0), np.eye(3)))


def test_non_finite_derivative_raises():
    p = ScalarProfile.user(lambda t: 1 + 0 * t, lambda t: np.nan + 0 * t)
    m = radial_model(p)
    d = LeftInvariantDirection((1, 0, 0), np.zeros((3, 3)))
    with pytest.raises(NonFiniteDerivative):
        m.directional_derivative(identity((0.2, 0.1, 0)), d)


def test_user_profile_reproduces_monotone():
    user = radial_model(ScalarProfile.user(lambda t: 1 + t, lambda t: 1 + 0 * t))
    mono = radial_model(ScalarProfile.monotone())
    g = Jet1((0.2, 0.3, 0.1), (0, 0, 0), np.diag([1.5, 0.7, 1.1]))
    d = LeftInvariantDirection((0.3, -0.2, 1.0), np.eye(3))
    assert np.allclose(user.evaluate(g), mono.evaluate(g))
    assert np.allclose(user.directional_derivative(g, d), mono.directional_derivative(g, d))

"""Tests for the brute-force verification oracles."""

import math

import numpy as np
import pytest

from clarinet.oracle import (
    DiscreteToyProblem,
    complementary_conditional,
    complementary_loss_variance,
    exact_complementary_risk,
    exact_true_risk,
    finite_difference_gradient_check,
    monte_carlo_estimator_check,
    random_toy_problem,
)


def test_problem_validation():
    with pytest.raises(ValueError):
        DiscreteToyProblem(np.array([0.5, 0.6]), np.eye(2) / 1, np.eye(2))
    with pytest.raises(ValueError):
        DiscreteToyProblem(np.array([1.0]), np.array([[1.0]]), np.array([[1.0]]))
    with pytest.raises(ValueError):
        random_toy_problem(60, 3, 0)


def test_true_risk_point_mass_predictor_is_zero():
    cond = np.eye(3)
    problem = DiscreteToyProblem(np.full(3, 1 / 3), cond, cond)
    assert exact_true_risk(problem) == pytest.approx(0.0, abs=1e-9)


def test_true_risk_uniform_predictor_is_log_k():
    for K in (2, 4, 7):
        problem = random_toy_problem(6, K, rng_seed=K)
        uniform = DiscreteToyProblem(
            problem.x_probs, problem.true_conditional, np.full((6, K), 1.0 / K)
        )
        assert exact_true_risk(uniform) == pytest.approx(math.log(K), abs=1e-12)


def test_true_risk_double_entry():
    """Vectorized second transcription of the same expectation."""
    problem = random_toy_problem(5, 3, rng_seed=42)
    ell = -np.log(np.maximum(problem.predictor, 1e-12))
    vectorized = float(np.sum(problem.x_probs[:, None] * problem.true_conditional * ell))
    assert exact_true_risk(problem) == pytest.approx(vectorized, abs=1e-12)


def test_complementary_conditional_one_hot_rows():
    cond = np.eye(4)
    problem = DiscreteToyProblem(np.full(4, 0.25), cond, np.full((4, 4), 0.25))
    eta_bar = complementary_conditional(problem)
    for i in range(4):
        assert eta_bar[i, i] == pytest.approx(0.0, abs=1e-15)
        for k in range(4):
            if k != i:
                assert eta_bar[i, k] == pytest.approx(1 / 3, abs=1e-15)
        assert eta_bar[i].sum() == pytest.approx(1.0, abs=1e-12)


def test_estimator_identity_sweep():
    """The complementary risk rewrite equals the true risk, problem by problem."""
    worst = 0.0
    for i in range(20):
        K = 2 + i % 5
        problem = random_toy_problem(4 + i % 7, K, rng_seed=100 + i)
        worst = max(worst, abs(exact_complementary_risk(problem) - exact_true_risk(problem)))
    assert worst < 1e-10


def test_estimator_identity_k2_pointwise():
    problem = random_toy_problem(8, 2, rng_seed=5)
    assert exact_complementary_risk(problem) == pytest.approx(
        exact_true_risk(problem), abs=1e-12
    )


def test_monte_carlo_check_k4():
    problem = random_toy_problem(10, 4, rng_seed=21)
    res = monte_carlo_estimator_check(problem, n_samples=100_000, rng_seed=1)
    assert res.deviation_in_stderrs <= 3.0
    assert res.stderr > 0


def test_monte_carlo_stderr_shrinks_with_n():
    problem = random_toy_problem(6, 3, rng_seed=8)
    small = monte_carlo_estimator_check(problem, n_samples=20_000, rng_seed=2)
    large = monte_carlo_estimator_check(problem, n_samples=80_000, rng_seed=2)
    # quadrupling n should roughly halve the standard error
    assert large.stderr < 0.75 * small.stderr


def test_monte_carlo_matches_analytic_variance_single_atom():
    problem = DiscreteToyProblem(
        np.array([1.0]),
        np.array([[0.6, 0.3, 0.1]]),
        np.array([[0.5, 0.3, 0.2]]),
    )
    var = complementary_loss_variance(problem)
    res = monte_carlo_estimator_check(problem, n_samples=200_000, rng_seed=3, batch_size=500)
    n = 200_000
    assert n * res.stderr**2 == pytest.approx(var, rel=0.10)


def test_monte_carlo_rejects_tiny_n():
    problem = random_toy_problem(3, 3, rng_seed=0)
    with pytest.raises(ValueError):
        monte_carlo_estimator_check(problem, n_samples=10, rng_seed=0)


def test_fd_check_quadratic_probe():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    x0 = np.array([0.3, -0.7])
    err = finite_difference_gradient_check(
        lambda x: float(x @ A @ x), lambda x: 2 * A @ x0, x0, epsilon=1e-5
    )
    assert err < 1e-9


def test_fd_check_flags_wrong_gradient():
    x0 = np.array([1.0, 2.0])
    err = finite_difference_gradient_check(
        lambda x: float(np.sum(x**2)), np.array([2.0, 3.0]), x0, epsilon=1e-5
    )
    assert err > 0.1


def test_fd_check_subsamples_long_vectors():
    x0 = np.linspace(0.1, 1.0, 400)
    err = finite_difference_gradient_check(
        lambda x: float(np.sum(np.sin(x))), np.cos(x0), x0, epsilon=1e-5, max_coords=50
    )
    assert err < 1e-8


@pytest.mark.filterwarnings("ignore:invalid value encountered")
def test_fd_check_validates_epsilon_and_finiteness():
    with pytest.raises(ValueError):
        finite_difference_gradient_check(lambda x: 0.0, np.zeros(2), np.zeros(2), epsilon=1e-2)
    with pytest.raises(FloatingPointError):
        finite_difference_gradient_check(
            lambda x: float(np.log(x[0])), np.array([1.0]), np.array([0.0]), epsilon=1e-5
        )

import numpy as np
import pytest

from conftest import make_dataset
from oracles import gd_minimize
from slowpoison.model_core import risk, risk_gradient, risk_objective
from slowpoison.solver import SolverConfig, SolverError, minimize


def quadratic(center):
    def objective(theta):
        diff = theta - center
        return 0.5 * float(diff @ diff), diff

    return objective


def test_quadratic_recovers_center(rng):
    c = rng.standard_normal(6) * 3
    theta, report = minimize(quadratic(c), np.zeros(6))
    assert report.converged
    assert np.linalg.norm(theta - c) <= 1e-6


def test_logistic_reaches_gradient_tolerance(rng):
    for _ in range(5):
        ds = make_dataset(rng, 40, 6)
        lam = 0.05
        theta, report = minimize(risk_objective(ds, lam), np.zeros(6))
        assert report.converged
        assert np.max(np.abs(risk_gradient(theta, ds, lam))) <= 1e-6


def test_separable_data_converges_with_small_lambda(rng):
    # labels determined by a plane: without the regularizer the optimum is at
    # infinity, with it the solver must still stop
    X = rng.standard_normal((60, 4)) * 0.4
    w = rng.standard_normal(4)
    y = np.where(X @ w > 0, 1, -1)
    from slowpoison.model_core import Dataset

    ds = Dataset(X, y)
    theta, report = minimize(risk_objective(ds, 1e-3), np.zeros(4))
    assert report.converged
    assert np.all(np.isfinite(theta))


def test_iteration_cap_respected(rng):
    ds = make_dataset(rng, 50, 8)
    config = SolverConfig(max_iterations=2, grad_inf_tolerance=1e-14)
    _, report = minimize(risk_objective(ds, 1e-3), np.zeros(8), config)
    assert report.iterations <= 2
    assert not report.converged
    assert report.final_grad_inf_norm > 1e-14


def test_monotone_across_iteration_caps(rng):
    # truncating the same deterministic trajectory at increasing caps must
    # give non-increasing objective values
    ds = make_dataset(rng, 40, 5)
    objective = risk_objective(ds, 0.02)
    values = []
    for cap in range(1, 12):
        config = SolverConfig(max_iterations=cap, grad_inf_tolerance=1e-15)
        theta, _ = minimize(objective, np.zeros(5), config)
        values.append(risk(theta, ds, 0.02))
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_deterministic_bitwise(rng):
    ds = make_dataset(rng, 30, 5)
    b = rng.standard_normal(5)
    objective = risk_objective(ds, 0.01, b)
    t1, r1 = minimize(objective, np.zeros(5))
    t2, r2 = minimize(objective, np.zeros(5))
    assert np.array_equal(t1, t2)
    assert r1 == r2


def test_optimality_against_gd_oracle(rng):
    for _ in range(3):
        ds = make_dataset(rng, 30, 4)
        lam = 0.1
        theta, _ = minimize(risk_objective(ds, lam), np.zeros(4))
        oracle = gd_minimize(
            lambda t: risk_gradient(t, ds, lam), np.zeros(4), lr=0.01, steps=200_000
        )
        assert risk(theta, ds, lam) <= risk(oracle, ds, lam) + 1e-8


def test_nonfinite_objective_raises_with_iterate():
    def bad(theta):
        if np.linalg.norm(theta) > 0.5:
            return np.nan, theta
        return float(theta @ theta), 2 * theta + 4.0

    with pytest.raises(SolverError) as err:
        minimize(bad, np.zeros(3))
    assert err.value.iterate.shape == (3,)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(max_iterations=0)
    with pytest.raises(ValueError):
        SolverConfig(grad_inf_tolerance=0.0)

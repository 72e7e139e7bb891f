import math

import numpy as np
import pytest

from conftest import make_dataset
from oracles import dense_spectral_norm, fd_gradient, fd_jacobian
from slowpoison import _kernels as kernels
from slowpoison.model_core import (
    LOGISTIC_GAMMA,
    Dataset,
    LossFunction,
    hessian_solve,
    perturbed_risk,
    risk,
    risk_gradient,
    risk_hessian,
    spectral_norm,
)


class TestLogisticPrimitives:
    def test_loss_nonnegative(self, rng):
        z = rng.standard_normal(500) * 10
        y = np.where(rng.random(500) < 0.5, 1.0, -1.0)
        assert np.all(kernels.loss_values(z, y) >= 0.0)

    def test_second_derivative_range(self, rng):
        z = rng.standard_normal(500) * 10
        d2 = kernels.loss_d2(z)
        assert np.all(d2 > 0.0)
        assert np.all(d2 <= 0.25 + 1e-15)

    def test_gamma_bounds_curvature_drift(self):
        # grid oracle: max |d(loss'')/dz| over [-20, 20] must not exceed the
        # stored Lipschitz constant
        z = np.arange(-20.0, 20.0, 1e-3)
        d3 = kernels.loss_d3(z)
        assert np.max(np.abs(d3)) <= LOGISTIC_GAMMA + 1e-12

    def test_d3_matches_fd_of_d2(self):
        z = np.linspace(-5, 5, 41)
        h = 1e-6
        fd = (kernels.loss_d2(z + h) - kernels.loss_d2(z - h)) / (2 * h)
        assert np.allclose(kernels.loss_d3(z), fd, atol=1e-8)

    def test_loss_function_validation(self):
        assert LossFunction().gamma == pytest.approx(1.0 / (6.0 * math.sqrt(3.0)))
        with pytest.raises(ValueError):
            LossFunction(kind="hinge")
        with pytest.raises(ValueError):
            LossFunction(gamma=0.0)


class TestDataset:
    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            Dataset(np.empty((0, 3)), np.empty(0))

    def test_label_length_checked(self):
        with pytest.raises(ValueError):
            Dataset(np.ones((2, 2)), np.ones(3))


class TestRisk:
    def test_zero_weights_give_n_log2(self, rng):
        ds = make_dataset(rng, 17, 4)
        assert risk(np.zeros(4), ds, 0.3) == pytest.approx(17 * math.log(2), rel=1e-12)

    def test_hand_example(self):
        # theta=(1,0), x=(1,0), y=+1, lam=2 -> log(1+e^-1) + 1
        ds = Dataset(np.array([[1.0, 0.0]]), np.array([1]))
        expected = 1.31326168751822283
        assert risk(np.array([1.0, 0.0]), ds, 2.0) == pytest.approx(expected, rel=1e-14)

    def test_dimension_mismatch(self, rng):
        ds = make_dataset(rng, 5, 3)
        with pytest.raises(ValueError):
            risk(np.zeros(4), ds, 0.1)

    def test_convexity_witness(self, rng):
        ds = make_dataset(rng, 30, 5)
        for _ in range(20):
            t1 = rng.standard_normal(5)
            t2 = rng.standard_normal(5)
            t = rng.random()
            lhs = risk(t * t1 + (1 - t) * t2, ds, 0.2)
            rhs = t * risk(t1, ds, 0.2) + (1 - t) * risk(t2, ds, 0.2)
            assert lhs <= rhs + 1e-9


class TestPerturbedRisk:
    def test_zero_b_equals_risk(self, rng):
        ds = make_dataset(rng, 10, 3)
        theta = rng.standard_normal(3)
        assert perturbed_risk(theta, ds, 0.1, np.zeros(3)) == risk(theta, ds, 0.1)

    def test_zero_theta_ignores_b(self, rng):
        ds = make_dataset(rng, 10, 3)
        b = rng.standard_normal(3)
        assert perturbed_risk(np.zeros(3), ds, 0.1, b) == risk(np.zeros(3), ds, 0.1)

    def test_linear_shift(self):
        ds = Dataset(np.array([[0.5, 0.1], [0.2, 0.3]]), np.array([1, -1]))
        theta = np.array([1.0, 1.0])
        b = np.array([2.0, -1.0])
        assert perturbed_risk(theta, ds, 0.4, b) == pytest.approx(
            risk(theta, ds, 0.4) + 1.0, rel=1e-14
        )


class TestRiskGradient:
    def test_matches_finite_differences(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 50))
            d = int(rng.integers(1, 10))
            ds = make_dataset(rng, n, d)
            theta = rng.standard_normal(d)
            b = rng.standard_normal(d)
            lam = float(rng.random() + 0.01)
            g = risk_gradient(theta, ds, lam, b)
            fd = fd_gradient(lambda t: perturbed_risk(t, ds, lam, b), theta)
            assert np.linalg.norm(g - fd) <= 1e-6 * max(np.linalg.norm(fd), 1.0)

    def test_balanced_pair_cancels(self):
        x = np.array([0.3, -0.4])
        ds = Dataset(np.vstack([x, x]), np.array([1, -1]))
        g = risk_gradient(np.zeros(2), ds, 0.0 + 1e-9)
        assert np.allclose(g, 0.0, atol=1e-9)

    def test_b_shifts_gradient_exactly(self, rng):
        ds = make_dataset(rng, 8, 4)
        theta = rng.standard_normal(4)
        b = rng.standard_normal(4)
        assert np.array_equal(
            risk_gradient(theta, ds, 0.2, b),
            risk_gradient(theta, ds, 0.2) + b,
        )


class TestRiskHessian:
    def test_spd_with_regularizer_floor(self, rng):
        ds = make_dataset(rng, 25, 6)
        lam = 0.05
        H = risk_hessian(rng.standard_normal(6), ds, lam)
        assert np.allclose(H, H.T)
        eigs = np.linalg.eigvalsh(H)
        assert eigs.min() >= 25 * lam - 1e-10

    def test_matches_fd_of_gradient(self, rng):
        ds = make_dataset(rng, 20, 5)
        theta = rng.standard_normal(5)
        H = risk_hessian(theta, ds, 0.3)
        J = fd_jacobian(lambda t: risk_gradient(t, ds, 0.3), theta)
        assert np.linalg.norm(H - J) <= 1e-5 * np.linalg.norm(J)

    def test_scalar_example(self):
        # d=1, x=1, theta=0, lam=0.5 -> 1/4 + 0.5
        ds = Dataset(np.array([[1.0]]), np.array([1]))
        H = risk_hessian(np.zeros(1), ds, 0.5)
        assert H[0, 0] == pytest.approx(0.75, rel=1e-14)


class TestHessianSolve:
    def test_identity(self, rng):
        v = rng.standard_normal(5)
        assert np.allclose(hessian_solve(np.eye(5), v), v)

    def test_scaling(self, rng):
        v = rng.standard_normal(4)
        assert np.allclose(hessian_solve(2.0 * np.eye(4), v), v / 2.0)

    def test_residual_bound(self, rng):
        for _ in range(10):
            d = int(rng.integers(2, 12))
            A = rng.standard_normal((d, d))
            H = A @ A.T + 0.1 * np.eye(d)
            v = rng.standard_normal(d)
            u = hessian_solve(H, v)
            assert np.linalg.norm(H @ u - v) <= 1e-8 * np.linalg.norm(v)

    def test_non_spd_reported(self):
        H = np.diag([1.0, -1.0])
        with pytest.raises(ValueError, match="positive definite"):
            hessian_solve(H, np.ones(2))


class TestSpectralNorm:
    def test_identity(self):
        assert spectral_norm(np.eye(4)) == pytest.approx(1.0, rel=1e-7)

    def test_diagonal(self):
        assert spectral_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0, rel=1e-7)

    def test_matches_svd(self, rng):
        for _ in range(10):
            X = rng.standard_normal((10, 4))
            assert spectral_norm(X) == pytest.approx(dense_spectral_norm(X), rel=1e-6)

    def test_zero_matrix(self):
        assert spectral_norm(np.zeros((3, 2))) == 0.0

    def test_zero_leading_column_restarts(self, rng):
        # first canonical basis vector lands in the null space; the seeded
        # restart must still find the top singular value
        X = rng.standard_normal((8, 3))
        X[:, 0] = 0.0
        assert spectral_norm(X) == pytest.approx(dense_spectral_norm(X), rel=1e-6)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            spectral_norm(np.empty((0, 2)))

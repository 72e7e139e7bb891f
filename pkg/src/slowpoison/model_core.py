"""Losses, risks, derivatives and matrix norms for L2-regularized linear models.

The model scores a point as ``theta . x`` and every risk sums
``loss + (lam/2) * ||theta||^2`` per example, so the regularizer's total
weight grows with the dataset: removing points also removes regularization.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _kernels as kernels

# Largest |d(loss'')/dz| of the logistic loss, attained where
# sigmoid(z) = (3 +- sqrt(3))/6. Upper-bounds the curvature drift used by
# the unlearning bound accounting; validated against a grid oracle in tests.
LOGISTIC_GAMMA = 1.0 / (6.0 * math.sqrt(3.0))


@dataclass(frozen=True)
class LossFunction:
    """Pointwise loss family plus the Lipschitz constant of its second
    derivative with respect to the margin."""

    kind: str = "logistic"
    gamma: float = LOGISTIC_GAMMA

    def __post_init__(self):
        if self.kind != "logistic":
            raise ValueError(f"unsupported loss kind: {self.kind!r}")
        if not self.gamma > 0.0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix (n, d) with integer labels.

    Binary labels are stored as {-1, +1}; multiclass as {0..K-1}. ``scale``
    records the constant the raw features were divided by (see
    ``data.normalize``); it is carried along for traceability only.
    """

    features: np.ndarray
    labels: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        y = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        if X.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("dataset must have n >= 1 rows and d >= 1 columns")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError("labels length must equal the number of rows")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.scale)

    def is_binary(self) -> bool:
        return bool(np.all((self.labels == 1) | (self.labels == -1)))


def signed_labels(data: Dataset) -> np.ndarray:
    """Labels as float64 +-1; raises if the dataset is not binary."""
    if not data.is_binary():
        raise ValueError("operation requires binary {-1,+1} labels")
    return data.labels.astype(np.float64)


def _check_theta(theta, data: Dataset) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (data.d,):
        raise ValueError(
            f"theta has shape {theta.shape}, expected ({data.d},)"
        )
    return theta


def risk(theta, data: Dataset, lam: float) -> float:
    """Summed regularized risk: sum_i loss(theta.x_i, y_i) + n*(lam/2)*||theta||^2."""
    theta = _check_theta(theta, data)
    y = signed_labels(data)
    z = data.features @ theta
    loss = float(np.sum(kernels.loss_values(z, y)))
    return loss + data.n * 0.5 * lam * float(theta @ theta)


def perturbed_risk(theta, data: Dataset, lam: float, b) -> float:
    """Risk plus the random linear term b . theta."""
    theta = _check_theta(theta, data)
    b = np.asarray(b, dtype=np.float64)
    if b.shape != theta.shape:
        raise ValueError("b must have the same shape as theta")
    return risk(theta, data, lam) + float(b @ theta)


def risk_gradient(theta, data: Dataset, lam: float, b=None) -> np.ndarray:
    """Gradient of the (optionally perturbed) summed risk."""
    theta = _check_theta(theta, data)
    y = signed_labels(data)
    z = data.features @ theta
    g = data.features.T @ kernels.loss_d1(z, y) + (data.n * lam) * theta
    if b is not None:
        b = np.asarray(b, dtype=np.float64)
        if b.shape != theta.shape:
            raise ValueError("b must have the same shape as theta")
        g = g + b
    return g


def risk_hessian(theta, data: Dataset, lam: float) -> np.ndarray:
    """Hessian X^T diag(loss'') X + n*lam*I. The linear perturbation term
    contributes nothing."""
    theta = _check_theta(theta, data)
    z = data.features @ theta
    w = kernels.loss_d2(z)
    H = data.features.T @ (w[:, None] * data.features)
    H = 0.5 * (H + H.T)
    H[np.diag_indices_from(H)] += data.n * lam
    return H


def risk_objective(data: Dataset, lam: float, b=None):
    """Callable theta -> (value, gradient) for the (perturbed) summed risk.

    This is the solver-facing fast path; it shares the loss kernels with
    ``risk``/``risk_gradient``.
    """
    X = data.features
    y = signed_labels(data)
    n = data.n
    if b is not None:
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (data.d,):
            raise ValueError("b must be a length-d vector")

    def objective(theta):
        z = X @ theta
        loss, d1 = kernels.loss_sum_and_d1(z, y)
        value = loss + n * 0.5 * lam * float(theta @ theta)
        grad = X.T @ d1 + (n * lam) * theta
        if b is not None:
            value += float(b @ theta)
            grad = grad + b
        return value, grad

    return objective


def hessian_solve(H, v) -> np.ndarray:
    """Solve H u = v for symmetric positive definite H via Cholesky.

    One step of iterative refinement keeps the residual below 1e-8 * ||v||
    on reasonably conditioned systems.
    """
    H = np.asarray(H, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H must be a square matrix")
    if v.shape != (H.shape[0],):
        raise ValueError("v length must match H")
    try:
        factor = cho_factor(H, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "Cholesky factorization failed: matrix is not positive definite"
        ) from exc
    u = cho_solve(factor, v, check_finite=False)
    r = v - H @ u
    if float(np.linalg.norm(r)) > 1e-8 * float(np.linalg.norm(v)):
        u = u + cho_solve(factor, r, check_finite=False)
    return u


def spectral_norm(X, seed: int = 0, tol: float = 1e-7, max_iter: int = 1000) -> float:
    """Largest singular value of X by power iteration on X^T X.

    Starts from the first canonical basis vector and re-randomizes (from
    ``seed``) if the iterate lands in the null space. Stops when successive
    estimates agree to relative ``tol``; hitting ``max_iter`` emits a warning
    and returns the current estimate.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.size == 0:
        raise ValueError("X must be a nonempty 2-d matrix")
    if not np.any(X):
        return 0.0
    d = X.shape[1]
    v = np.zeros(d)
    v[0] = 1.0
    rng = None
    sigma_prev = -1.0
    sigma = 0.0
    converged = False
    for _ in range(max_iter):
        Xv = X @ v
        lam = float(Xv @ Xv)  # Rayleigh quotient of X^T X at unit v
        w = X.T @ Xv
        nw = float(np.linalg.norm(w))
        if nw <= 1e-300:
            # stagnation: v is (numerically) in the null space
            if rng is None:
                rng = np.random.default_rng(seed)
            v = rng.standard_normal(d)
            v /= np.linalg.norm(v)
            sigma_prev = -1.0
            continue
        sigma = math.sqrt(max(lam, 0.0))
        if sigma_prev >= 0.0 and abs(sigma - sigma_prev) <= tol * max(sigma, 1e-300):
            converged = True
            break
        sigma_prev = sigma
        v = w / nw
    if not converged:
        warnings.warn(
            "spectral_norm power iteration hit the iteration cap; "
            "returning the current estimate",
            RuntimeWarning,
        )
    return sigma

"""Independent reference computations the tests check the library against.

Everything here deliberately avoids the code paths under test: dense SVD in
place of power iteration, finite differences in place of analytic gradients,
damped Newton with explicit weighted sums in place of the shared risk
objective, and a convex QP solver in place of the closed-form projections.
"""

import numpy as np


def fd_gradient(f, x, h=1e-6):
    """Central finite differences of a scalar function of a vector."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def fd_gradient_matrix(f, X, h=1e-5):
    """Central finite differences of a scalar function of a matrix."""
    X = np.asarray(X, dtype=np.float64)
    G = np.zeros_like(X)
    for i in range(X.shape[0]):
        for j in range(X.shape[1]):
            Xp = X.copy()
            Xm = X.copy()
            Xp[i, j] += h
            Xm[i, j] -= h
            G[i, j] = (f(Xp) - f(Xm)) / (2.0 * h)
    return G


def fd_jacobian(g, x, h=1e-6):
    """Finite-difference Jacobian of a vector function of a vector."""
    x = np.asarray(x, dtype=np.float64)
    g0 = np.asarray(g(x))
    J = np.zeros((g0.size, x.size))
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        J[:, i] = (np.asarray(g(xp)) - np.asarray(g(xm))) / (2.0 * h)
    return J


def gd_minimize(grad, x0, lr, steps):
    """Long-run plain gradient descent; the slow-but-sure optimality oracle."""
    x = np.asarray(x0, dtype=np.float64).copy()
    for _ in range(steps):
        x -= lr * grad(x)
    return x


def weighted_logistic_fit(X, y, lam, b=None, weights=None, tol=1e-12, max_iter=200):
    """Damped Newton fit of the summed logistic risk with per-example weights
    applied to the whole per-example term (loss plus regularizer)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    bvec = np.zeros(d) if b is None else np.asarray(b, dtype=np.float64)
    wsum = float(w.sum())

    def value(theta):
        z = X @ theta
        t = -y * z
        loss = np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))
        return float(w @ loss) + wsum * 0.5 * lam * float(theta @ theta) + float(
            bvec @ theta
        )

    def grad(theta):
        z = X @ theta
        sig = 1.0 / (1.0 + np.exp(np.clip(y * z, -700, 700)))
        return X.T @ (w * (-y * sig)) + wsum * lam * theta + bvec

    def hess(theta):
        z = X @ theta
        p = 1.0 / (1.0 + np.exp(-np.clip(z, -700, 700)))
        curv = p * (1.0 - p)
        return X.T @ ((w * curv)[:, None] * X) + wsum * lam * np.eye(d)

    theta = np.zeros(d)
    f = value(theta)
    for _ in range(max_iter):
        g = grad(theta)
        if np.max(np.abs(g)) <= tol:
            break
        step = np.linalg.solve(hess(theta), g)
        t = 1.0
        while t > 1e-8:
            cand = theta - t * step
            fc = value(cand)
            if fc <= f:
                theta, f = cand, fc
                break
            t *= 0.5
        else:
            break
    return theta


def dense_spectral_norm(X):
    return float(np.linalg.svd(np.asarray(X, dtype=np.float64), compute_uv=False)[0])


def project_ball_qp(x, center, p, radius):
    """Euclidean norm-ball projection via cvxpy (independent QP oracle)."""
    import cvxpy as cp

    x = np.asarray(x, dtype=np.float64)
    v = cp.Variable(x.size)
    norm = cp.norm1(v - center) if p == 1 else cp.norm_inf(v - center)
    problem = cp.Problem(cp.Minimize(cp.sum_squares(v - x)), [norm <= radius])
    problem.solve(solver=cp.CLARABEL)
    return np.asarray(v.value, dtype=np.float64)


def random_instance(rng, n, d, max_row_norm=1.0, label_bias=0.5):
    """Random rows with ||x||_2 <= max_row_norm and +-1 labels."""
    X = rng.standard_normal((n, d))
    norms = np.linalg.norm(X, axis=1)
    scales = rng.random(n) * max_row_norm / np.maximum(norms, 1e-12)
    X *= scales[:, None]
    y = np.where(rng.random(n) < label_bias, 1, -1)
    return X, y

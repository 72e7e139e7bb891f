"""Attacker toolkit: erasure-cost objectives, their exact gradients with
respect to the poisoned features, and projected gradient descent crafting.

The attacker perturbs the features of m reference rows (labels stay fixed) to
maximize a proxy for the defender's unlearning cost, subject to per-row
norm-ball constraints handled by Dykstra's cyclic projection. Three cost
proxies are supported:

* ``grnb``            -- ||X||_2 ||dtheta|| ||X dtheta|| over the remaining rows,
                         the quantity that actually drives the retrain trigger;
* ``influence_norm``  -- ||dtheta||, a data-independent residual-norm bound;
* ``gradient_norm``   -- ||grad R(theta_hat; poison)||, Hessian-free and cheapest.

``theta_hat`` is either re-fit on clean + poison per evaluation (model
dependence on, differentiated through the implicit function theorem) or fit
once on the clean data and frozen (``ignore_model_dependence``). The attacker
never sees the defender's perturbation vector b and uses b = 0 throughout;
this is harmless because the Hessian is b-independent and the cost functions
use the unperturbed risk.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _kernels as kernels
from .certified_removal import remove_rows
from .model_core import (
    LOGISTIC_GAMMA,
    Dataset,
    hessian_solve,
    risk_gradient,
    risk_hessian,
    risk_objective,
    signed_labels,
    spectral_norm,
)
from .solver import SolverConfig, minimize

COST_KINDS = ("grnb", "influence_norm", "gradient_norm")

BLS_FLOOR = 1e-12
BLS_MAX_HALVINGS = 40


@dataclass(frozen=True, eq=False)
class NormBallConstraint:
    """Every row i of the poison matrix must satisfy
    ||X[i] - center[i]||_p <= radius."""

    p: float  # 1 or inf
    center: np.ndarray  # (m, d)
    radius: float

    def __post_init__(self):
        if self.p not in (1, np.inf):
            raise ValueError("p must be 1 or inf")
        if not self.radius > 0.0:
            raise ValueError("radius must be positive")
        object.__setattr__(
            self, "center", np.ascontiguousarray(np.asarray(self.center, dtype=np.float64))
        )
        if self.center.ndim != 2:
            raise ValueError("center must be an (m, d) matrix")


@dataclass(frozen=True)
class CostFunctionKind:
    kind: str = "influence_norm"
    ignore_model_dependence: bool = True

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class AttackConfig:
    """Crafting knobs. ``eta0 = None`` means the conventional m*d/100."""

    cost: CostFunctionKind = CostFunctionKind()
    constraints: tuple = ()
    n_pgd: int = 10
    eta0: float | None = None
    bls_tau: float = 0.5
    bls_c: float = 0.5
    dykstra_tol: float = 1e-6
    n_proj: int = 50

    def __post_init__(self):
        if self.n_pgd < 0 or self.n_proj < 1:
            raise ValueError("iteration counts must be positive")
        if not (0.0 < self.bls_tau < 1.0 and 0.0 < self.bls_c < 1.0):
            raise ValueError("line-search constants must lie in (0, 1)")
        if not self.dykstra_tol > 0.0:
            raise ValueError("dykstra_tol must be positive")
        object.__setattr__(self, "constraints", tuple(self.constraints))


@dataclass(frozen=True, eq=False)
class PoisonBatch:
    """Crafted features, their fixed labels, and the clean reference rows the
    crafting started from. Labels are never modified."""

    features: np.ndarray  # (m, d)
    labels: np.ndarray  # (m,) in {-1, +1}
    reference: np.ndarray  # (m, d)

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        R = np.ascontiguousarray(np.asarray(self.reference, dtype=np.float64))
        y = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        if X.ndim != 2 or R.shape != X.shape:
            raise ValueError("features and reference must be matching (m, d) matrices")
        if y.shape != (X.shape[0],):
            raise ValueError("labels length must match the number of rows")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "reference", R)
        object.__setattr__(self, "labels", y)

    @property
    def m(self) -> int:
        return self.features.shape[0]

    def as_dataset(self, scale: float = 1.0) -> Dataset:
        return Dataset(self.features, self.labels, scale)


# ----------------------------------------------------- reference cost fns --

def cost_grnb(theta_hat, poison: PoisonBatch, full: Dataset, lam: float,
              gamma: float = LOGISTIC_GAMMA) -> float:
    """||X||_2 ||dtheta|| ||X dtheta|| with X the rows of full minus the
    poison and dtheta the influence of the poison on theta_hat.

    The defender's tracked bound grows by ``gamma`` times this value; the
    constant does not affect the attacker's maximization and is not applied
    here.
    """
    del gamma
    X_rem = remove_rows(full, poison.as_dataset(full.scale))
    H = risk_hessian(theta_hat, full, lam)
    g = risk_gradient(theta_hat, poison.as_dataset(full.scale), lam)
    dtheta = hessian_solve(H, g)
    Xd = X_rem.features @ dtheta
    return (
        spectral_norm(X_rem.features)
        * float(np.linalg.norm(dtheta))
        * float(np.linalg.norm(Xd))
    )


def cost_influence_norm(theta_hat, poison: PoisonBatch, full: Dataset, lam: float) -> float:
    """Norm of the influence of the poison rows on theta_hat."""
    H = risk_hessian(theta_hat, full, lam)
    g = risk_gradient(theta_hat, poison.as_dataset(full.scale), lam)
    return float(np.linalg.norm(hessian_solve(H, g)))


def cost_gradient_norm(theta_hat, poison: PoisonBatch, lam: float) -> float:
    """Norm of the risk gradient over the poison rows; no Hessian involved."""
    g = risk_gradient(theta_hat, poison.as_dataset(), lam)
    return float(np.linalg.norm(g))


# ------------------------------------------------------- attacker context --

class AttackContext:
    """Attacker's knowledge for one crafting job.

    ``clean`` is the non-poison data the attacker believes the defender
    trains on (true clean data in the white-box setting, surrogate data in
    the grey-box setting). Caches the fixed model and the clean Hessian block
    when model dependence is ignored, and warm-starts the inner solve
    otherwise.
    """

    def __init__(
        self,
        clean: Dataset,
        poison_labels,
        lam: float,
        cost: CostFunctionKind,
        solver_config: SolverConfig | None = None,
    ):
        self.clean = clean
        self.poison_labels = np.ascontiguousarray(np.asarray(poison_labels, dtype=np.int64))
        if not np.all((self.poison_labels == 1) | (self.poison_labels == -1)):
            raise ValueError("poison labels must be in {-1, +1}")
        self.lam = float(lam)
        self.cost = cost
        self.solver_config = solver_config if solver_config is not None else SolverConfig()
        self._y_signed = self.poison_labels.astype(np.float64)
        self._theta_fixed = None
        self._hessian_clean_fixed = None  # X_c^T diag(w) X_c at theta_fixed, no reg
        self._spectral_clean = None
        self._theta_warm = None

    # -- model fitting -------------------------------------------------

    def _fit(self, data: Dataset, theta0):
        theta, _ = minimize(risk_objective(data, self.lam), theta0, self.solver_config)
        # Newton polish: the gradients of the crafting objective are taken
        # through the implicit function theta_hat(X), so the inner optimum
        # must be resolved far below the line-search stall level or finite
        # differences of the objective turn noisy.
        for _ in range(25):
            g = risk_gradient(theta, data, self.lam)
            if float(np.max(np.abs(g))) <= 1e-13:
                break
            H = risk_hessian(theta, data, self.lam)
            theta = theta - hessian_solve(H, g)
        return theta

    def theta_fixed(self) -> np.ndarray:
        if self._theta_fixed is None:
            self._theta_fixed = self._fit(self.clean, np.zeros(self.clean.d))
        return self._theta_fixed

    def theta_hat(self, X_psn) -> np.ndarray:
        """Model the attacker differentiates against at the given poison."""
        if self.cost.ignore_model_dependence:
            return self.theta_fixed()
        X = np.vstack([self.clean.features, X_psn])
        y = np.concatenate([self.clean.labels, self.poison_labels])
        data = Dataset(X, y, self.clean.scale)
        theta0 = self._theta_warm if self._theta_warm is not None else np.zeros(data.d)
        theta = self._fit(data, theta0)
        self._theta_warm = theta
        return theta

    # -- cached pieces ---------------------------------------------------

    def spectral_clean(self) -> float:
        if self._spectral_clean is None:
            self._spectral_clean = spectral_norm(self.clean.features)
        return self._spectral_clean

    def _hessian(self, theta, X_psn, w_psn) -> np.ndarray:
        """Hessian of the summed risk over clean + poison at theta."""
        Xc = self.clean.features
        n_total = Xc.shape[0] + X_psn.shape[0]
        if self.cost.ignore_model_dependence:
            if self._hessian_clean_fixed is None:
                z_c = Xc @ self.theta_fixed()
                w_c = kernels.loss_d2(z_c)
                Hc = Xc.T @ (w_c[:, None] * Xc)
                self._hessian_clean_fixed = 0.5 * (Hc + Hc.T)
            H = self._hessian_clean_fixed.copy()
        else:
            z_c = Xc @ theta
            w_c = kernels.loss_d2(z_c)
            H = Xc.T @ (w_c[:, None] * Xc)
            H = 0.5 * (H + H.T)
        Hp = X_psn.T @ (w_psn[:, None] * X_psn)
        H += 0.5 * (Hp + Hp.T)
        H[np.diag_indices_from(H)] += n_total * self.lam
        return H


def _evaluate(ctx: AttackContext, X_psn, need_grad: bool):
    """Cost value and (optionally) its gradient wrt the poison features.

    Handles all three cost kinds in both model-dependence modes; the
    dependent mode adds the implicit-function-theorem path realized as
    Hessian solves against analytic vector-Jacobian products.
    """
    X_psn = np.ascontiguousarray(np.asarray(X_psn, dtype=np.float64))
    m, d = X_psn.shape
    theta = ctx.theta_hat(X_psn)
    lam = ctx.lam
    y = ctx._y_signed
    z_p = X_psn @ theta
    s = kernels.loss_d1(z_p, y)
    w_p = kernels.loss_d2(z_p)
    g = X_psn.T @ s + (m * lam) * theta
    kind = ctx.cost.kind
    dependent = not ctx.cost.ignore_model_dependence

    factor = None
    if kind != "gradient_norm" or dependent:
        H = ctx._hessian(theta, X_psn, w_p)
        factor = cho_factor(H, check_finite=False)

    def solve(v):
        return cho_solve(factor, v, check_finite=False)

    def ift_correction(v):
        # dC from the theta path: per row -(s_i r_v + w_i (x_i . r_v) theta)
        r_v = solve(v)
        return s[:, None] * r_v[None, :] + np.outer(w_p * (X_psn @ r_v), theta)

    if kind == "gradient_norm":
        C = float(np.linalg.norm(g))
        if not need_grad:
            return C, None
        if C == 0.0:
            return C, np.zeros_like(X_psn)
        ghat = g / C
        grad_c = s[:, None] * ghat[None, :] + np.outer(w_p * (X_psn @ ghat), theta)
        if dependent:
            v = X_psn.T @ (w_p * (X_psn @ ghat)) + (m * lam) * ghat
            grad_c -= ift_correction(v)
        return C, grad_c

    u = solve(g)
    nu = float(np.linalg.norm(u))
    if kind == "influence_norm":
        C = nu
        if not need_grad:
            return C, None
        if nu == 0.0:
            return C, np.zeros_like(X_psn)
        p = u / nu
    else:  # grnb
        Xc = ctx.clean.features
        a = ctx.spectral_clean()
        Xu_c = Xc @ u
        nXu = float(np.linalg.norm(Xu_c))
        C = a * nu * nXu
        if not need_grad:
            return C, None
        if nu == 0.0 or nXu == 0.0:
            return C, np.zeros_like(X_psn)
        p = a * (nXu * (u / nu) + (nu / nXu) * (Xc.T @ Xu_c))

    r = solve(p)
    xr = X_psn @ r
    xu = X_psn @ u
    t3 = kernels.loss_d3(z_p)
    # direct paths: the poison gradient and the poison block of the Hessian
    grad_c = s[:, None] * r[None, :] + np.outer(w_p * xr, theta)
    grad_c -= (
        np.outer(t3 * xr * xu, theta)
        + (w_p * xu)[:, None] * r[None, :]
        + (w_p * xr)[:, None] * u[None, :]
    )
    if dependent:
        v = X_psn.T @ (w_p * xr) + (m * lam) * r
        z_c = ctx.clean.features @ theta
        t3_c = kernels.loss_d3(z_c)
        xr_c = ctx.clean.features @ r
        xu_c = ctx.clean.features @ u
        v -= ctx.clean.features.T @ (t3_c * xr_c * xu_c) + X_psn.T @ (t3 * xr * xu)
        grad_c -= ift_correction(v)
    return C, grad_c


def attacker_objective(X_psn, context: AttackContext) -> float:
    """f(X_psn) = -C(theta_hat, poison); lower is better for the attacker."""
    C, _ = _evaluate(context, X_psn, need_grad=False)
    return -C


def objective_gradient(X_psn, context: AttackContext) -> np.ndarray:
    """Exact gradient of ``attacker_objective`` wrt the poison features."""
    _, grad_c = _evaluate(context, X_psn, need_grad=True)
    return -grad_c


# ------------------------------------------------------------ projections --

def project_ball(x, center, p, radius: float) -> np.ndarray:
    """Euclidean projection of a vector onto {v : ||v - center||_p <= radius}
    for p in {1, inf}."""
    if not radius > 0.0:
        raise ValueError("radius must be positive")
    x = np.asarray(x, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    if p == np.inf:
        return np.clip(x, center - radius, center + radius)
    if p == 1:
        return kernels.project_l1_rows(
            x[None, :].copy(), center[None, :], float(radius)
        )[0]
    raise ValueError("p must be 1 or inf")


def _apply_rowwise(constraint: NormBallConstraint, Z) -> np.ndarray:
    if constraint.p == np.inf:
        return np.clip(Z, constraint.center - constraint.radius,
                       constraint.center + constraint.radius)
    return kernels.project_l1_rows(np.ascontiguousarray(Z), constraint.center,
                                   float(constraint.radius))


def constraint_violation(X, constraint: NormBallConstraint) -> float:
    """Largest per-row excess ||row - center||_p - radius (<= 0 is feasible)."""
    diff = np.asarray(X, dtype=np.float64) - constraint.center
    if constraint.p == np.inf:
        norms = np.max(np.abs(diff), axis=1)
    else:
        norms = np.sum(np.abs(diff), axis=1)
    return float(np.max(norms) - constraint.radius)


def dykstra_project(X, constraints, tol: float = 1e-6, max_iter: int = 50) -> np.ndarray:
    """Project onto the intersection of row-wise norm balls by Dykstra's
    alternating scheme with increment-based stopping.

    Warns and returns the current iterate if the stopping criterion is not
    met within ``max_iter`` sweeps.
    """
    X = np.array(X, dtype=np.float64, copy=True)
    constraints = list(constraints)
    if not constraints:
        return X
    Y = [np.zeros_like(X) for _ in constraints]
    c_i = math.inf
    sweeps = 0
    while c_i >= tol and sweeps < max_iter:
        c_i = 0.0
        sweeps += 1
        for j, cons in enumerate(constraints):
            Y_old = Y[j]
            Z = X - Y_old
            X = _apply_rowwise(cons, Z)
            Y[j] = X - Z
            c_i += float(np.sum((Y_old - Y[j]) ** 2))
    if c_i >= tol:
        warnings.warn(
            "Dykstra projection hit the sweep cap before converging",
            RuntimeWarning,
        )
    return X


# ------------------------------------------------------------ pgd crafting --

def backtracking_line_search(eta, X, dX, G, f, tau: float = 0.5, c: float = 0.5) -> float:
    """Shrink eta by tau until f(X) - f(X - eta*dX) >= eta * c * <G, dX>_F.

    Stops after 40 halvings or when eta falls under an absolute floor of
    1e-12, returning the floor value, so it always terminates.
    """
    t = c * float(np.sum(G * dX))
    f_x = f(X)
    for _ in range(BLS_MAX_HALVINGS):
        if f_x - f(X - eta * dX) >= eta * t:
            return eta
        eta *= tau
        if eta < BLS_FLOOR:
            return BLS_FLOOR
    return eta


def pgd_craft(poison: PoisonBatch, config: AttackConfig, context: AttackContext) -> PoisonBatch:
    """Craft poison features by projected gradient descent on the attacker
    objective with normalized gradient steps and backtracking line search.

    Each accepted iterate is feasible (Dykstra-projected) and never increases
    the objective: if the projected step regresses, the step size shrinks and,
    failing that, crafting stops at the current iterate.
    """
    X = poison.features.copy()
    m, d = X.shape
    eta0 = config.eta0 if config.eta0 is not None else m * d / 100.0
    f = lambda A: attacker_objective(A, context)  # noqa: E731

    f_cur = f(X)
    for _ in range(config.n_pgd):
        G = objective_gradient(X, context)
        g_norm = float(np.linalg.norm(G))
        if g_norm == 0.0:
            break  # stationary
        dX = G / g_norm
        eta = backtracking_line_search(
            eta0, X, dX, G, f, tau=config.bls_tau, c=config.bls_c
        )
        candidate = dykstra_project(X - eta * dX, config.constraints,
                                    config.dykstra_tol, config.n_proj)
        f_cand = f(candidate)
        # the projection can undo the line-search decrease near the boundary;
        # shrink until the projected point is no worse
        while f_cand > f_cur and eta > BLS_FLOOR:
            eta = max(eta * config.bls_tau, BLS_FLOOR)
            candidate = dykstra_project(X - eta * dX, config.constraints,
                                        config.dykstra_tol, config.n_proj)
            f_cand = f(candidate)
        if f_cand > f_cur:
            break
        X, f_cur = candidate, f_cand
    return PoisonBatch(features=X, labels=poison.labels, reference=poison.reference)

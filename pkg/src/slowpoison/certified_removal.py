"""Defender engine: noisy learning, influence-based unlearning and the
gradient-residual-norm budget that decides when to retrain from scratch.

The learner minimizes the risk plus a random linear term b . theta (b drawn
once per training run and kept private). Each erasure request applies a
first-order update and grows a running upper bound ``beta`` on the true
gradient residual norm; once ``beta`` crosses the trigger derived from the
removal budget, the model is retrained on the remaining data and the bound
resets to zero.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .model_core import (
    LOGISTIC_GAMMA,
    Dataset,
    hessian_solve,
    risk_gradient,
    risk_hessian,
    risk_objective,
    spectral_norm,
)
from .solver import SolverConfig, minimize

APPROXIMATE = "approximate"
RETRAINED = "retrained"


@dataclass(frozen=True)
class RemovalBudget:
    """Defender scalars: indistinguishability budget (epsilon, delta),
    objective-perturbation scale sigma and regularization strength lam."""

    epsilon: float = 1.0
    delta: float = 1e-4
    sigma: float = 10.0
    lam: float = 1e-3

    def __post_init__(self):
        if min(self.epsilon, self.delta, self.sigma, self.lam) <= 0.0:
            raise ValueError("all budget parameters must be strictly positive")
        if self.delta >= 1.0:
            raise ValueError("delta must be below 1")


@dataclass(frozen=True, eq=False)
class ModelState:
    """Weights, the private perturbation vector b, the tracked residual-norm
    bound ``beta`` and the number of from-scratch retrains so far.

    ``b`` must never be exposed through attacker-facing interfaces.
    """

    theta: np.ndarray
    b: np.ndarray
    beta: float
    retrain_count: int = 0


@dataclass(frozen=True)
class UnlearnOutcome:
    kind: str  # APPROXIMATE or RETRAINED
    beta_after: float
    wall_time: float


def beta_trigger(budget: RemovalBudget) -> float:
    """Residual-norm bound above which retraining is forced:
    sigma * epsilon / sqrt(2 * ln(1.5 / delta))."""
    return budget.sigma * budget.epsilon / math.sqrt(2.0 * math.log(1.5 / budget.delta))


def _check_row_norms(data: Dataset):
    norms = np.linalg.norm(data.features, axis=1)
    if norms.max(initial=0.0) > 1.0 + 1e-9:
        raise ValueError(
            "feature rows must satisfy ||x||_2 <= 1; normalize the data first"
        )


def learn(
    data: Dataset,
    budget: RemovalBudget,
    rng_seed: int,
    solver_config: SolverConfig | None = None,
) -> ModelState:
    """Draw b ~ Normal(0, sigma^2 I) from the seeded generator and minimize
    the perturbed risk from a zero start. The residual bound starts at zero."""
    _check_row_norms(data)
    rng = np.random.default_rng(rng_seed)
    b = rng.normal(0.0, budget.sigma, size=data.d)
    objective = risk_objective(data, budget.lam, b)
    theta, _report = minimize(objective, np.zeros(data.d), solver_config)
    return ModelState(theta=theta, b=b, beta=0.0, retrain_count=0)


def influence_update(
    erase: Dataset, full: Dataset, state: ModelState, budget: RemovalBudget
) -> np.ndarray:
    """First-order weight change for removing ``erase`` from ``full``:
    solves H(theta; full) dtheta = grad R(theta; erase).

    The Hessian is taken over the full pre-removal data (regularizer weight
    |full| * lam); the gradient over the erased rows has no b term.
    """
    H = risk_hessian(state.theta, full, budget.lam)
    g = risk_gradient(state.theta, erase, budget.lam)
    return hessian_solve(H, g)


def grn_increment(
    remaining: Dataset,
    delta_theta,
    gamma: float = LOGISTIC_GAMMA,
    spectral: float | None = None,
) -> float:
    """Bound growth gamma * ||X||_2 * ||dtheta|| * ||X dtheta|| with X the
    remaining feature matrix. ``spectral`` may carry a precomputed ||X||_2."""
    _check_row_norms(remaining)
    dtheta = np.asarray(delta_theta, dtype=np.float64)
    if spectral is None:
        spectral = spectral_norm(remaining.features)
    Xd = remaining.features @ dtheta
    return gamma * spectral * float(np.linalg.norm(dtheta)) * float(np.linalg.norm(Xd))


def remove_rows(full: Dataset, erase: Dataset) -> Dataset:
    """Multiset removal of the erased rows from ``full`` (row + label must
    match exactly). Raises if a row is missing or nothing would remain."""
    if erase.d != full.d:
        raise ValueError("erase and full datasets have different dimensions")
    if erase.n >= full.n:
        raise ValueError("cannot erase the entire dataset: nothing would remain")
    keep = np.ones(full.n, dtype=bool)
    for i in range(erase.n):
        row = erase.features[i]
        label = erase.labels[i]
        candidates = keep & (full.labels == label)
        candidates &= np.all(full.features == row, axis=1)
        hits = np.nonzero(candidates)[0]
        if hits.size == 0:
            raise ValueError("erase rows must be a subset of the full dataset")
        keep[hits[0]] = False
    return Dataset(full.features[keep], full.labels[keep], full.scale)


def unlearn(
    state: ModelState,
    full: Dataset,
    erase: Dataset,
    budget: RemovalBudget,
    rng_seed: int,
    gamma: float = LOGISTIC_GAMMA,
    solver_config: SolverConfig | None = None,
):
    """Process one erasure request.

    Computes the influence update on the pre-removal data, grows ``beta`` by
    the residual-norm increment measured on the remaining rows, and either
    applies the fast approximate update or retrains from scratch (fresh b,
    beta reset) when the trigger is exceeded.

    Returns (new_state, remaining, UnlearnOutcome).
    """
    t0 = time.perf_counter()
    remaining = remove_rows(full, erase)
    dtheta = influence_update(erase, full, state, budget)
    beta = state.beta + grn_increment(remaining, dtheta, gamma)
    if beta > beta_trigger(budget):
        new_state = learn(remaining, budget, rng_seed, solver_config)
        new_state = replace(new_state, retrain_count=state.retrain_count + 1)
        outcome = UnlearnOutcome(RETRAINED, 0.0, time.perf_counter() - t0)
    else:
        new_state = ModelState(
            theta=state.theta + dtheta,
            b=state.b,
            beta=beta,
            retrain_count=state.retrain_count,
        )
        outcome = UnlearnOutcome(APPROXIMATE, beta, time.perf_counter() - t0)
    return new_state, remaining, outcome


def gradient_residual_norm(state: ModelState, data: Dataset, budget: RemovalBudget) -> float:
    """True ||grad of the perturbed risk at theta on data||_2; the quantity
    the tracked beta upper-bounds. Diagnostic only."""
    g = risk_gradient(state.theta, data, budget.lam, b=state.b)
    return float(np.linalg.norm(g))


# ------------------------------------------------------- one-vs-rest layer --

@dataclass(frozen=True, eq=False)
class OneVsRestState:
    """K binary models, one per class, each with its own theta, b and beta."""

    models: tuple
    classes: tuple

    @property
    def retrain_count(self) -> int:
        return self.models[0].retrain_count


def _binarized(data: Dataset, cls: int) -> Dataset:
    return Dataset(data.features, np.where(data.labels == cls, 1, -1), data.scale)


def _class_seeds(rng_seed: int, k: int) -> np.ndarray:
    return np.random.SeedSequence(rng_seed).generate_state(k)


def learn_ovr(
    data: Dataset,
    budget: RemovalBudget,
    rng_seed: int,
    classes=None,
    solver_config: SolverConfig | None = None,
) -> OneVsRestState:
    """Fit one binary model per class (label k vs rest)."""
    if classes is None:
        classes = tuple(int(c) for c in np.unique(data.labels))
    seeds = _class_seeds(rng_seed, len(classes))
    models = tuple(
        learn(_binarized(data, cls), budget, int(seed), solver_config)
        for cls, seed in zip(classes, seeds)
    )
    return OneVsRestState(models=models, classes=tuple(classes))


def unlearn_ovr(
    state: OneVsRestState,
    full: Dataset,
    erase: Dataset,
    budget: RemovalBudget,
    rng_seed: int,
    gamma: float = LOGISTIC_GAMMA,
    solver_config: SolverConfig | None = None,
):
    """One erasure request against the one-vs-rest ensemble.

    Each binary model gets its own influence update and beta increment; if any
    model's bound crosses the trigger, the whole ensemble retrains (the
    conservative reading of the per-model guarantee).
    """
    t0 = time.perf_counter()
    remaining = remove_rows(full, erase)
    spectral = spectral_norm(remaining.features)
    updates = []
    betas = []
    for cls, model in zip(state.classes, state.models):
        dtheta = influence_update(
            _binarized(erase, cls), _binarized(full, cls), model, budget
        )
        updates.append(dtheta)
        betas.append(model.beta + grn_increment(remaining, dtheta, gamma, spectral))
    if max(betas) > beta_trigger(budget):
        new_state = learn_ovr(remaining, budget, rng_seed, state.classes, solver_config)
        bumped = tuple(
            replace(m, retrain_count=old.retrain_count + 1)
            for m, old in zip(new_state.models, state.models)
        )
        new_state = OneVsRestState(models=bumped, classes=new_state.classes)
        outcome = UnlearnOutcome(RETRAINED, 0.0, time.perf_counter() - t0)
    else:
        models = tuple(
            ModelState(m.theta + du, m.b, beta, m.retrain_count)
            for m, du, beta in zip(state.models, updates, betas)
        )
        new_state = OneVsRestState(models=models, classes=state.classes)
        outcome = UnlearnOutcome(APPROXIMATE, max(betas), time.perf_counter() - t0)
    return new_state, remaining, outcome

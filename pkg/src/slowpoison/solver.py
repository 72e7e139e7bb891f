"""Deterministic limited-memory BFGS with a strong Wolfe line search.

Used by the defender to fit (perturbed) risks and by the attacker for inner
re-training. Stops when the gradient's max-norm drops below tolerance or the
iteration cap is reached, whichever occurs first. All arithmetic is plain
float64 with no randomness, so identical inputs give bit-identical outputs.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

WOLFE_C1 = 1e-4
WOLFE_C2 = 0.9


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 1000
    grad_inf_tolerance: float = 1e-6
    history_size: int = 10

    def __post_init__(self):
        if self.max_iterations < 1 or self.history_size < 1:
            raise ValueError("iteration and history sizes must be positive")
        if not self.grad_inf_tolerance > 0.0:
            raise ValueError("gradient tolerance must be positive")


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    final_grad_inf_norm: float
    converged: bool


class SolverError(RuntimeError):
    """Raised when the objective or gradient turns non-finite; carries the
    offending iterate."""

    def __init__(self, message, iterate):
        super().__init__(message)
        self.iterate = np.asarray(iterate)


def _eval(objective, x):
    f, g = objective(x)
    f = float(f)
    g = np.asarray(g, dtype=np.float64)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise SolverError("non-finite objective or gradient encountered", x)
    return f, g


def _zoom(objective, x, d, f0, dphi0, alo, flo, ahi, fhi, best):
    """Bisection zoom phase of the strong Wolfe search (Nocedal-Wright)."""
    for _ in range(50):
        a = 0.5 * (alo + ahi)
        f, g = _eval(objective, x + a * d)
        dphi = float(g @ d)
        if f > f0 + WOLFE_C1 * a * dphi0 or f >= flo:
            ahi, fhi = a, f
        else:
            if best is None or f < best[1]:
                best = (a, f, g)
            if abs(dphi) <= -WOLFE_C2 * dphi0:
                return a, f, g
            if dphi * (ahi - alo) >= 0.0:
                ahi, fhi = alo, flo
            alo, flo = a, f
        if abs(ahi - alo) <= 1e-16 * max(1.0, abs(alo)):
            break
    return best


def _line_search(objective, x, f0, g0, d, alpha_init):
    """Strong Wolfe search along d. Returns (alpha, f, g) or None.

    Falls back to the best point satisfying sufficient decrease when the
    curvature condition is unattainable, so accepted iterates never increase
    the objective.
    """
    dphi0 = float(g0 @ d)
    if dphi0 >= 0.0:
        return None
    a_prev, f_prev = 0.0, f0
    a = alpha_init
    best = None
    for i in range(20):
        f, g = _eval(objective, x + a * d)
        dphi = float(g @ d)
        if f > f0 + WOLFE_C1 * a * dphi0 or (i > 0 and f >= f_prev):
            return _zoom(objective, x, d, f0, dphi0, a_prev, f_prev, a, f, best)
        if best is None or f < best[1]:
            best = (a, f, g)
        if abs(dphi) <= -WOLFE_C2 * dphi0:
            return a, f, g
        if dphi >= 0.0:
            return _zoom(objective, x, d, f0, dphi0, a, f, a_prev, f_prev, best)
        a_prev, f_prev = a, f
        a *= 2.0
    return best


def _two_loop(g, s_list, y_list, rho_list):
    q = g.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if y_list:
        s, y = s_list[-1], y_list[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
        beta = rho * float(y @ q)
        q += (a - beta) * s
    return -q


def minimize(objective, theta0, config: SolverConfig | None = None):
    """Minimize a smooth convex objective given as theta -> (value, grad).

    Returns (theta, SolverReport). The returned weights are the final
    accepted iterate; the objective value never increases across iterates.
    """
    if config is None:
        config = SolverConfig()
    x = np.asarray(theta0, dtype=np.float64).copy()
    f, g = _eval(objective, x)
    s_hist: deque = deque(maxlen=config.history_size)
    y_hist: deque = deque(maxlen=config.history_size)
    rho_hist: deque = deque(maxlen=config.history_size)
    iterations = 0
    g_inf = float(np.max(np.abs(g))) if g.size else 0.0
    while g_inf > config.grad_inf_tolerance and iterations < config.max_iterations:
        d = _two_loop(g, s_hist, y_hist, rho_hist)
        steepest = False
        if float(g @ d) >= 0.0:
            d = -g
            steepest = True
        if s_hist:
            alpha0 = 1.0
        else:
            alpha0 = min(1.0, 1.0 / max(float(np.linalg.norm(g)), 1e-12))
        result = _line_search(objective, x, f, g, d, alpha0)
        if result is None and not steepest:
            d = -g
            result = _line_search(objective, x, f, g, d, alpha0)
        if result is None:
            break  # numerically flat; keep the current iterate
        a, f_new, g_new = result
        x_new = x + a * d
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
        x, f, g = x_new, f_new, g_new
        iterations += 1
        g_inf = float(np.max(np.abs(g)))
    return x, SolverReport(
        iterations=iterations,
        final_grad_inf_norm=g_inf,
        converged=g_inf <= config.grad_inf_tolerance,
    )

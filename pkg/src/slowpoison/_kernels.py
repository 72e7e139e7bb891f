"""Hot elementwise kernels in two flavors: numba-jitted and pure numpy.

These functions sit inside solver line searches, per-request unlearning loops
and the attacker's projection cycle, so they are kept allocation-light. The
numba variants are used when numba imports cleanly; set ``SLOWPOISON_NUMBA=0``
to force the numpy fallback (useful for debugging and as the benchmark
baseline, see ``benchmarks/bench_kernels.py``).

All functions expect float64 arrays. Labels are passed as ``+1.0``/``-1.0``.
Both backends stay importable through ``numpy_backend`` / ``numba_backend``
regardless of which one is active.
"""

import math
import os

import numpy as np

__all__ = [
    "BACKEND",
    "loss_values",
    "loss_sum_and_d1",
    "loss_d1",
    "loss_d2",
    "loss_d3",
    "project_l1_rows",
    "numpy_backend",
    "numba_backend",
]


# ------------------------------------------------------------------ numpy --

def _np_sigmoid(t):
    # split on sign so exp never overflows
    out = np.empty_like(t)
    pos = t >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _np_loss_values(z, y):
    """Per-example logistic loss log(1 + exp(-y*z)), softplus-stable."""
    t = -y * z
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def _np_loss_sum_and_d1(z, y):
    """Summed loss and its per-example derivative wrt the margin z."""
    t = -y * z
    total = float(np.sum(np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))))
    return total, -y * _np_sigmoid(t)


def _np_loss_d1(z, y):
    return -y * _np_sigmoid(-y * z)


def _np_loss_d2(z):
    # sigmoid(z) * sigmoid(-z); both factors are computed stably
    return _np_sigmoid(z) * _np_sigmoid(-z)


def _np_loss_d3(z):
    s = _np_sigmoid(z)
    return s * _np_sigmoid(-z) * (1.0 - 2.0 * s)


def _np_project_l1_rows(X, center, radius):
    """Project every row of X onto the l1 ball of ``radius`` around the
    matching row of ``center`` (sort-based simplex thresholding)."""
    V = X - center
    A = np.abs(V)
    over = A.sum(axis=1) > radius
    out = X.copy()
    if not np.any(over):
        return out
    Ao = A[over]
    U = -np.sort(-Ao, axis=1)  # descending
    css = np.cumsum(U, axis=1) - radius
    j = np.arange(1, U.shape[1] + 1, dtype=np.float64)
    # active set {j : u_j > (cumsum_j - radius)/j} is a prefix; take its end
    k = np.sum(U * j > css, axis=1) - 1
    tau = css[np.arange(len(k)), k] / (k + 1)
    W = np.sign(V[over]) * np.maximum(Ao - tau[:, None], 0.0)
    out[over] = center[over] + W
    return out


numpy_backend = {
    "loss_values": _np_loss_values,
    "loss_sum_and_d1": _np_loss_sum_and_d1,
    "loss_d1": _np_loss_d1,
    "loss_d2": _np_loss_d2,
    "loss_d3": _np_loss_d3,
    "project_l1_rows": _np_project_l1_rows,
}


# ------------------------------------------------------------------ numba --

def _build_numba_backend():
    from numba import njit

    @njit(cache=True)
    def nb_sigmoid(t):
        if t >= 0.0:
            return 1.0 / (1.0 + math.exp(-t))
        e = math.exp(t)
        return e / (1.0 + e)

    @njit(cache=True)
    def loss_values(z, y):
        out = np.empty(z.shape[0])
        for i in range(z.shape[0]):
            t = -y[i] * z[i]
            if t > 0.0:
                out[i] = t + math.log1p(math.exp(-t))
            else:
                out[i] = math.log1p(math.exp(t))
        return out

    @njit(cache=True)
    def loss_sum_and_d1(z, y):
        n = z.shape[0]
        d1 = np.empty(n)
        total = 0.0
        for i in range(n):
            t = -y[i] * z[i]
            if t > 0.0:
                total += t + math.log1p(math.exp(-t))
            else:
                total += math.log1p(math.exp(t))
            d1[i] = -y[i] * nb_sigmoid(t)
        return total, d1

    @njit(cache=True)
    def loss_d1(z, y):
        out = np.empty(z.shape[0])
        for i in range(z.shape[0]):
            out[i] = -y[i] * nb_sigmoid(-y[i] * z[i])
        return out

    @njit(cache=True)
    def loss_d2(z):
        out = np.empty(z.shape[0])
        for i in range(z.shape[0]):
            out[i] = nb_sigmoid(z[i]) * nb_sigmoid(-z[i])
        return out

    @njit(cache=True)
    def loss_d3(z):
        out = np.empty(z.shape[0])
        for i in range(z.shape[0]):
            s = nb_sigmoid(z[i])
            out[i] = s * nb_sigmoid(-z[i]) * (1.0 - 2.0 * s)
        return out

    @njit(cache=True)
    def project_l1_rows(X, center, radius):
        m, d = X.shape
        out = X.copy()
        for i in range(m):
            s = 0.0
            for j in range(d):
                s += abs(X[i, j] - center[i, j])
            if s <= radius:
                continue
            a = np.empty(d)
            for j in range(d):
                a[j] = abs(X[i, j] - center[i, j])
            u = np.sort(a)[::-1]
            css = 0.0
            tau = 0.0
            for j in range(d):
                css += u[j]
                t = (css - radius) / (j + 1)
                if u[j] > t:
                    tau = t
            for j in range(d):
                v = X[i, j] - center[i, j]
                w = abs(v) - tau
                if w < 0.0:
                    w = 0.0
                out[i, j] = center[i, j] + (w if v >= 0.0 else -w)
        return out

    return {
        "loss_values": loss_values,
        "loss_sum_and_d1": loss_sum_and_d1,
        "loss_d1": loss_d1,
        "loss_d2": loss_d2,
        "loss_d3": loss_d3,
        "project_l1_rows": project_l1_rows,
    }


_flag = os.environ.get("SLOWPOISON_NUMBA", "").strip().lower()
numba_backend = None
if _flag not in ("0", "false", "off", "no"):
    try:
        numba_backend = _build_numba_backend()
    except ImportError:
        numba_backend = None

if numba_backend is not None:
    BACKEND = "numba"
    _active = numba_backend
else:
    BACKEND = "numpy"
    _active = numpy_backend

loss_values = _active["loss_values"]
loss_sum_and_d1 = _active["loss_sum_and_d1"]
loss_d1 = _active["loss_d1"]
loss_d2 = _active["loss_d2"]
loss_d3 = _active["loss_d3"]
project_l1_rows = _active["project_l1_rows"]

"""Hot numeric loops, JIT-compiled with numba when available.

Set ``GSCR_NUMBA=0`` in the environment to force the pure-numpy paths (used
by the test-suite to cross-check both implementations, and by
``benchmarks/bench_kernels.py``).
"""

from __future__ import annotations

import os

import numpy as np
import scipy.linalg as sla

USE_NUMBA = os.environ.get("GSCR_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

_CHUNK = 512


# -- transfer-matrix evaluation --------------------------------------------------

def _hess_solve_numpy(h, bq, s):
    n = h.shape[0]
    out = np.empty((s.size, n, bq.shape[1]), dtype=complex)
    eye = np.eye(n)
    for start in range(0, s.size, _CHUNK):
        sl = s[start:start + _CHUNK]
        mats = sl[:, None, None] * eye[None] - h[None]
        out[start:start + _CHUNK] = np.linalg.solve(mats, np.broadcast_to(bq, (sl.size,) + bq.shape))
    return out


if USE_NUMBA:

    @njit(cache=True)
    def _hess_solve_numba(h, bq, s):  # pragma: no cover - compiled
        n = h.shape[0]
        m = bq.shape[1]
        out = np.empty((s.size, n, m), dtype=np.complex128)
        work = np.empty((n, n), dtype=np.complex128)
        rhs = np.empty((n, m), dtype=np.complex128)
        for k in range(s.size):
            sk = s[k]
            for i in range(n):
                for j in range(n):
                    work[i, j] = -h[i, j]
                work[i, i] += sk
                for j in range(m):
                    rhs[i, j] = bq[i, j]
            # upper Hessenberg: only the first subdiagonal needs elimination
            for col in range(n - 1):
                if abs(work[col + 1, col]) > abs(work[col, col]):
                    for j in range(col, n):
                        t = work[col, j]
                        work[col, j] = work[col + 1, j]
                        work[col + 1, j] = t
                    for j in range(m):
                        t = rhs[col, j]
                        rhs[col, j] = rhs[col + 1, j]
                        rhs[col + 1, j] = t
                piv = work[col, col]
                if piv == 0:
                    continue
                f = work[col + 1, col] / piv
                if f != 0:
                    for j in range(col, n):
                        work[col + 1, j] -= f * work[col, j]
                    for j in range(m):
                        rhs[col + 1, j] -= f * rhs[col, j]
            for i in range(n - 1, -1, -1):
                for j in range(m):
                    acc = rhs[i, j]
                    for l in range(i + 1, n):
                        acc -= work[i, l] * out[k, l, j]
                    out[k, i, j] = acc / work[i, i]
        return out


def transfer_matrix(a, b, c, d, s) -> np.ndarray:
    """``c (sI - a)^-1 b + d`` evaluated at every entry of ``s``."""
    s = np.ascontiguousarray(np.asarray(s, dtype=np.complex128).ravel())
    p, m = d.shape
    n = a.shape[0]
    if n == 0:
        return np.broadcast_to(d.astype(complex), (s.size, p, m)).copy()
    h, q = sla.hessenberg(a, calc_q=True)
    bq = np.ascontiguousarray(q.T @ b, dtype=np.complex128)
    cq = c @ q
    h = np.ascontiguousarray(h)
    if USE_NUMBA:
        x = _hess_solve_numba(h, bq, s)
    else:
        x = _hess_solve_numpy(h, bq, s)
    return np.einsum("pn,knm->kpm", cq, x) + d[None, :, :]


# -- discrete LTI propagation ----------------------------------------------------

def _propagate_numpy(phi, gam, c, d, x0, u):
    steps = u.shape[0]
    n = x0.size
    x = x0.copy()
    xs = np.empty((steps, n))
    ys = np.empty((steps, c.shape[0]))
    last = steps
    for k in range(steps):
        xs[k] = x
        ys[k] = c @ x + d @ u[k]
        x = phi @ x + gam @ u[k]
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1e150:
            last = k + 1
            break
    return xs[:last], ys[:last]


if USE_NUMBA:

    @njit(cache=True)
    def _propagate_numba(phi, gam, c, d, x0, u):  # pragma: no cover - compiled
        steps = u.shape[0]
        n = x0.size
        xs = np.empty((steps, n))
        ys = np.empty((steps, c.shape[0]))
        x = x0.copy()
        last = steps
        for k in range(steps):
            xs[k] = x
            uk = np.ascontiguousarray(u[k])
            ys[k] = np.dot(c, x) + np.dot(d, uk)
            x = np.dot(phi, x) + np.dot(gam, uk)
            big = 0.0
            for i in range(n):
                if not np.isfinite(x[i]):
                    big = np.inf
                    break
                if abs(x[i]) > big:
                    big = abs(x[i])
            if big > 1e150:
                last = k + 1
                break
        return xs[:last], ys[:last]


def propagate(phi, gam, c, d, x0, u):
    """Run ``x[k+1] = phi x[k] + gam u[k]``, ``y[k] = c x[k] + d u[k]``.

    Stops early (returning the truncated traces) when the state overflows.
    """
    args = [np.ascontiguousarray(v, dtype=float) for v in (phi, gam, c, d, x0, u)]
    if USE_NUMBA:
        return _propagate_numba(*args)
    return _propagate_numpy(*args)

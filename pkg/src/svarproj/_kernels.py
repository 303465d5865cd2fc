"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Four kernels live here because profiling puts them inside every optimizer
callback or oracle sweep:

* ``irf_stack``      moving-average coefficient recursion C_0..C_k
* ``irf_adjoint``    reverse-mode gradient of u'C_k(A)w with respect to A
* ``theta_scan``     exhaustive rotation-angle sweep for the n=2 oracle
* ``feasible_scan``  feasibility plus objective extremes over a stack of B's

The numba versions are explicit loops compiled with @njit; the numpy
versions are vectorized. Set SVARPROJ_DISABLE_NUMBA=1 to force the numpy
path (the benchmark in benchmarks/bench_kernels.py times both).
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("SVARPROJ_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

HAS_NUMBA = False
if not _DISABLED:
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:
        HAS_NUMBA = False


# ---------------------------------------------------------------------------
# numpy bodies
# ---------------------------------------------------------------------------

def _irf_stack_np(A: np.ndarray, p: int, kmax: int) -> np.ndarray:
    """C_0 = I, C_k = sum_{m=1..min(k,p)} C_{k-m} A_m, stacked (kmax+1, n, n)."""
    n = A.shape[0]
    C = np.zeros((kmax + 1, n, n))
    C[0] = np.eye(n)
    for k in range(1, kmax + 1):
        for m in range(1, min(k, p) + 1):
            C[k] += C[k - m] @ A[:, (m - 1) * n: m * n]
    return C


def _irf_adjoint_np(C: np.ndarray, A: np.ndarray, p: int, k: int,
                    cumulative: bool, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Gradient of u'C_k w (or of the cumulative sum u'(C_0+..+C_k)w) in A.

    C must be irf_stack(A, p, k). Reverse sweep of the recursion: the bar
    of C_s propagates to C_{s-m} through A_m' and deposits C_{s-m}' bar(C_s)
    on the A_m block. C_0 is constant, so its bar is discarded.
    """
    n = A.shape[0]
    barA = np.zeros((n, n * p))
    if k == 0:
        return barA
    barC = np.zeros((k + 1, n, n))
    uw = np.outer(u, w)
    if cumulative:
        barC[1:] = uw
    else:
        barC[k] = uw
    for s in range(k, 0, -1):
        for m in range(1, min(s, p) + 1):
            Am = A[:, (m - 1) * n: m * n]
            barC[s - m] += barC[s] @ Am.T
            barA[:, (m - 1) * n: m * n] += C[s - m].T @ barC[s]
    return barA


def _theta_scan_np(alpha: np.ndarray, beta: np.ndarray, sense: np.ndarray,
                   bound: np.ndarray, a0: float, b0: float,
                   grid: int, tol: float):
    """Sweep theta over a uniform grid on [0, 2pi).

    Row r holds value alpha[r] cos(th) + beta[r] sin(th); sense +1 means
    value >= bound[r], -1 means <=, 0 means equality within tol. Returns
    (count, vmin, vmax, theta_at_min, theta_at_max) over feasible angles.
    """
    th = np.arange(grid) * (2.0 * np.pi / grid)
    ct = np.cos(th)
    st = np.sin(th)
    ok = np.ones(grid, dtype=np.bool_)
    for r in range(alpha.shape[0]):
        v = alpha[r] * ct + beta[r] * st
        if sense[r] > 0:
            ok &= v >= bound[r] - tol
        elif sense[r] < 0:
            ok &= v <= bound[r] + tol
        else:
            ok &= np.abs(v - bound[r]) <= tol
    idx = np.nonzero(ok)[0]
    if idx.size == 0:
        return 0, np.nan, np.nan, np.nan, np.nan
    lam = a0 * ct[idx] + b0 * st[idx]
    kmin = int(np.argmin(lam))
    kmax = int(np.argmax(lam))
    return int(idx.size), float(lam[kmin]), float(lam[kmax]), float(th[idx[kmin]]), float(th[idx[kmax]])


def _feasible_scan_np(bs: np.ndarray, rows: np.ndarray, rowj: np.ndarray,
                      sense: np.ndarray, bound: np.ndarray,
                      u: np.ndarray, jt: int, tol: float):
    """Feasibility and objective extremes over a stack of candidate B's.

    bs is (M, n, n); row r requires rows[r] . B[:, rowj[r]] against bound[r]
    per sense[r]; the objective is u . B[:, jt]. Returns
    (count, vmin, vmax, index_at_min, index_at_max).
    """
    M = bs.shape[0]
    ok = np.ones(M, dtype=np.bool_)
    if rows.shape[0]:
        proj = np.einsum("rn,mnc->mrc", rows, bs)
        vals = np.take_along_axis(proj, rowj[None, :, None], axis=2)[:, :, 0]
        for r in range(rows.shape[0]):
            v = vals[:, r]
            if sense[r] > 0:
                ok &= v >= bound[r] - tol
            elif sense[r] < 0:
                ok &= v <= bound[r] + tol
            else:
                ok &= np.abs(v - bound[r]) <= tol
    idx = np.nonzero(ok)[0]
    if idx.size == 0:
        return 0, np.nan, np.nan, -1, -1
    lam = bs[idx, :, jt] @ u
    kmin = int(np.argmin(lam))
    kmax = int(np.argmax(lam))
    return int(idx.size), float(lam[kmin]), float(lam[kmax]), int(idx[kmin]), int(idx[kmax])


# ---------------------------------------------------------------------------
# numba bodies (explicit loops, contiguous scratch)
# ---------------------------------------------------------------------------

def _irf_stack_loop(A, p, kmax):
    n = A.shape[0]
    Ams = np.empty((p, n, n))
    for m in range(p):
        for a in range(n):
            for b in range(n):
                Ams[m, a, b] = A[a, m * n + b]
    C = np.zeros((kmax + 1, n, n))
    for a in range(n):
        C[0, a, a] = 1.0
    for k in range(1, kmax + 1):
        top = min(k, p)
        for m in range(1, top + 1):
            for a in range(n):
                for c in range(n):
                    acc = 0.0
                    for b in range(n):
                        acc += C[k - m, a, b] * Ams[m - 1, b, c]
                    C[k, a, c] += acc
    return C


def _irf_adjoint_loop(C, A, p, k, cumulative, u, w):
    n = A.shape[0]
    barA = np.zeros((n, n * p))
    if k == 0:
        return barA
    barC = np.zeros((k + 1, n, n))
    if cumulative:
        for s in range(1, k + 1):
            for a in range(n):
                for b in range(n):
                    barC[s, a, b] = u[a] * w[b]
    else:
        for a in range(n):
            for b in range(n):
                barC[k, a, b] = u[a] * w[b]
    for s in range(k, 0, -1):
        top = min(s, p)
        for m in range(1, top + 1):
            off = (m - 1) * n
            for a in range(n):
                for c in range(n):
                    acc = 0.0
                    for b in range(n):
                        acc += barC[s, a, b] * A[c, off + b]
                    barC[s - m, a, c] += acc
            for a in range(n):
                for c in range(n):
                    acc = 0.0
                    for b in range(n):
                        acc += C[s - m, b, a] * barC[s, b, c]
                    barA[a, off + c] += acc
    return barA


def _theta_scan_loop(alpha, beta, sense, bound, a0, b0, grid, tol):
    nrows = alpha.shape[0]
    step = 2.0 * np.pi / grid
    count = 0
    vmin = np.inf
    vmax = -np.inf
    th_min = np.nan
    th_max = np.nan
    for g in range(grid):
        th = step * g
        ct = np.cos(th)
        st = np.sin(th)
        ok = True
        for r in range(nrows):
            v = alpha[r] * ct + beta[r] * st
            if sense[r] > 0:
                if v < bound[r] - tol:
                    ok = False
                    break
            elif sense[r] < 0:
                if v > bound[r] + tol:
                    ok = False
                    break
            else:
                if abs(v - bound[r]) > tol:
                    ok = False
                    break
        if not ok:
            continue
        lam = a0 * ct + b0 * st
        count += 1
        if lam < vmin:
            vmin = lam
            th_min = th
        if lam > vmax:
            vmax = lam
            th_max = th
    if count == 0:
        return 0, np.nan, np.nan, np.nan, np.nan
    return count, vmin, vmax, th_min, th_max


def _feasible_scan_loop(bs, rows, rowj, sense, bound, u, jt, tol):
    M = bs.shape[0]
    n = bs.shape[1]
    nrows = rows.shape[0]
    count = 0
    vmin = np.inf
    vmax = -np.inf
    imin = -1
    imax = -1
    for s in range(M):
        ok = True
        for r in range(nrows):
            col = rowj[r]
            v = 0.0
            for a in range(n):
                v += rows[r, a] * bs[s, a, col]
            if sense[r] > 0:
                if v < bound[r] - tol:
                    ok = False
                    break
            elif sense[r] < 0:
                if v > bound[r] + tol:
                    ok = False
                    break
            else:
                if abs(v - bound[r]) > tol:
                    ok = False
                    break
        if not ok:
            continue
        lam = 0.0
        for a in range(n):
            lam += u[a] * bs[s, a, jt]
        count += 1
        if lam < vmin:
            vmin = lam
            imin = s
        if lam > vmax:
            vmax = lam
            imax = s
    if count == 0:
        return 0, np.nan, np.nan, -1, -1
    return count, vmin, vmax, imin, imax


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

IMPLEMENTATIONS: dict[str, dict] = {
    "numpy": {
        "irf_stack": _irf_stack_np,
        "irf_adjoint": _irf_adjoint_np,
        "theta_scan": _theta_scan_np,
        "feasible_scan": _feasible_scan_np,
    }
}

if HAS_NUMBA:
    IMPLEMENTATIONS["numba"] = {
        "irf_stack": njit(cache=True)(_irf_stack_loop),
        "irf_adjoint": njit(cache=True)(_irf_adjoint_loop),
        "theta_scan": njit(cache=True)(_theta_scan_loop),
        "feasible_scan": njit(cache=True)(_feasible_scan_loop),
    }

BACKEND = "numba" if HAS_NUMBA else "numpy"
USING_NUMBA = BACKEND == "numba"

irf_stack = IMPLEMENTATIONS[BACKEND]["irf_stack"]
irf_adjoint = IMPLEMENTATIONS[BACKEND]["irf_adjoint"]
theta_scan = IMPLEMENTATIONS[BACKEND]["theta_scan"]
feasible_scan = IMPLEMENTATIONS[BACKEND]["feasible_scan"]

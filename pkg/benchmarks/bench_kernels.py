"""Time the compiled kernels against their pure-numpy twins.

Run from the repo root:

    python3 benchmarks/bench_kernels.py

Each kernel is timed over repeated calls after a warmup (so numba's JIT
cost is excluded). Set SVARPROJ_DISABLE_NUMBA=1 before launching to check
that the fallback path is what actually gets dispatched.
"""

from __future__ import annotations

import time

import numpy as np

from svarproj import _kernels


def _timeit(fn, *args, repeat: int = 30) -> float:
    fn(*args)  # warmup / JIT
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def make_cases(rng: np.random.Generator):
    n, p, kmax = 4, 6, 40
    A = rng.standard_normal((n, n * p)) * 0.1
    C = _kernels._irf_stack_np(A, p, kmax)
    u = rng.standard_normal(n)
    w = rng.standard_normal(n)

    grid = 100_000
    alpha = rng.standard_normal(5)
    beta = rng.standard_normal(5)
    sense = np.array([1, 1, -1, 1, 0], dtype=np.int64)
    bound = np.zeros(5)
    a0, b0 = rng.standard_normal(2)

    M, nn = 4096, 3
    bs = rng.standard_normal((M, nn, nn))
    rows = rng.standard_normal((7, nn))
    rowj = np.array([0, 0, 1, 1, 2, 2, 0], dtype=np.int64)
    rsense = np.array([1, 1, -1, 1, 1, -1, 0], dtype=np.int64)
    rbound = np.zeros(7)
    uvec = rng.standard_normal(nn)
    jt = 1

    return {
        "irf_stack": (A, p, kmax),
        "irf_adjoint": (C, A, p, kmax // 2, False, u, w),
        "theta_scan": (alpha, beta, sense, bound, a0, b0, grid, 1e-9),
        "feasible_scan": (bs, rows, rowj, rsense, rbound, uvec, jt, 1e-9),
    }


def main() -> None:
    rng = np.random.default_rng(0)
    cases = make_cases(rng)
    print(f"dispatching backend: {_kernels.BACKEND}")
    header = f"{'kernel':<16}{'numpy':>12}{'numba':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, args in cases.items():
        np_fn = _kernels.IMPLEMENTATIONS["numpy"][name]
        t_np = _timeit(np_fn, *args)
        row = f"{name:<16}{t_np * 1e3:>10.3f}ms"
        if _kernels.HAS_NUMBA:
            nb_fn = _kernels.IMPLEMENTATIONS["numba"][name]
            t_nb = _timeit(nb_fn, *args)
            row += f"{t_nb * 1e3:>10.3f}ms{t_np / t_nb:>9.1f}x"
        else:
            row += f"{'n/a':>12}{'n/a':>10}"
        print(row)


if __name__ == "__main__":
    main()

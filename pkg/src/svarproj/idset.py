"""Identified-set bounds at a fixed reduced-form parameter.

The inner program: optimize e_i'C_k(A)Be_j over B with BB' = Sigma and the
restriction rows of the model, A and Sigma held fixed. Solved as a smooth
NLP over vec(B) with analytic gradients; verified against two oracles, an
exhaustive rotation-angle sweep for n = 2 and a Haar sampling inner
approximation for any n.

For n = 2 the orthogonal complement is one-dimensional, so a dense angle
scan both certifies feasibility and seeds the polish solver; that path is
fully deterministic (no Haar draws) and is what batch evaluation uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._rng import haar_orthogonal, spawn_generator
from .errors import (DimensionMismatch, EmptyIdentifiedSet, NoFeasibleStart,
                     SingularSigma)
from .restrictions import ConstraintRow, RestrictionSet, constraint_rows
from .solver import NlpProblem, SolverConfig, solve
from .varcore import Target, VarSpec, irf_stack, unpack_mu, vech_indices

_SENSE_CODE = {">=": 1, "<=": -1, "=": 0}


@dataclass(frozen=True)
class BoundsConfig:
    starts: int = 10
    batch_starts: int = 4
    seed: int = 0
    scan_grid: int = 720
    rescue_samples: int = 10_000
    solver: SolverConfig = field(default_factory=SolverConfig)


@dataclass(frozen=True)
class IdentifiedSetBounds:
    target: Target
    lower: float
    upper: float
    argmin_B: np.ndarray
    argmax_B: np.ndarray
    feasible: bool
    method: str = "nlp"


@dataclass(frozen=True)
class BatchBounds:
    """Per-draw, per-target bounds; values[m, h] = (lower, upper)."""

    values: np.ndarray
    status: tuple[str, ...]

    @property
    def n_ok(self) -> int:
        return sum(s == "ok" for s in self.status)


def _chol_sigma(Sigma: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        raise SingularSigma(
            "Sigma is not positive definite; cannot factor BB' = Sigma"
        ) from None


def _target_vector(A: np.ndarray, target: Target, stack: np.ndarray | None = None) -> np.ndarray:
    """w with lambda = w'(B e_j): the target row of the relevant IRF matrix."""
    if stack is None or stack.shape[0] <= target.k:
        stack = irf_stack(A, target.k)
    Ck = stack[: target.k + 1].sum(axis=0) if target.cumulative else stack[target.k]
    return Ck[target.i0].copy()


def _row_arrays(rows: list[ConstraintRow], n: int):
    C = np.zeros((len(rows), n))
    colj = np.zeros(len(rows), dtype=np.int64)
    sense = np.zeros(len(rows), dtype=np.int8)
    bound = np.zeros(len(rows))
    for r, row in enumerate(rows):
        C[r] = row.c
        colj[r] = row.col
        sense[r] = _SENSE_CODE[row.sense]
        bound[r] = row.bound
    return C, colj, sense, bound


def _sign_fix(B: np.ndarray, rows: list[ConstraintRow]) -> np.ndarray:
    """Flip shock columns where the flip satisfies more inequality rows."""
    B = B.copy()
    cols = {row.col for row in rows if not row.is_equality}
    for j in cols:
        plus = minus = 0
        for row in rows:
            if row.col != j or row.is_equality:
                continue
            v = float(row.c @ B[:, j])
            g = v - row.bound if row.sense == ">=" else row.bound - v
            gf = -v - row.bound if row.sense == ">=" else row.bound + v
            plus += g >= 0
            minus += gf >= 0
        if minus > plus:
            B[:, j] = -B[:, j]
    return B


# ---------------------------------------------------------------------------
# NLP assembly over x = vec(B), Fortran order so B[:, j] is a contiguous block
# ---------------------------------------------------------------------------

def _objective(w: np.ndarray, j: int, n: int):
    def fun(x):
        g = np.zeros(n * n)
        g[j * n:(j + 1) * n] = w
        return float(w @ x[j * n:(j + 1) * n]), g

    return fun


def _factor_equality(r: int, c: int, Sigma_rc: float, n: int):
    def fun(x):
        B = x.reshape((n, n), order="F")
        g = np.zeros((n, n))
        g[r] += B[c]
        g[c] += B[r]
        return float(B[r] @ B[c]) - Sigma_rc, g.ravel(order="F")

    return fun


def _row_constraint(row: ConstraintRow, n: int):
    sgn = -1.0 if row.sense == "<=" else 1.0

    def fun(x):
        g = np.zeros(n * n)
        g[row.col * n:(row.col + 1) * n] = sgn * row.c
        v = float(row.c @ x[row.col * n:(row.col + 1) * n])
        return sgn * (v - row.bound) if row.sense != "<=" else row.bound - v, g

    return fun


def make_inner_problem(Sigma: np.ndarray, rows: list[ConstraintRow],
                       w: np.ndarray, j: int, starts) -> NlpProblem:
    n = Sigma.shape[0]
    ridx, cidx = vech_indices(n)
    equalities = [_factor_equality(int(r), int(c), float(Sigma[r, c]), n)
                  for r, c in zip(ridx, cidx)]
    inequalities = []
    for row in rows:
        if row.is_equality:
            equalities.append(_row_constraint(row, n))
        else:
            inequalities.append(_row_constraint(row, n))
    return NlpProblem(
        dimension=n * n,
        objective=_objective(w, j, n),
        equalities=tuple(equalities),
        inequalities=tuple(inequalities),
        starts=tuple(B.ravel(order="F") for B in starts),
    )


# ---------------------------------------------------------------------------
# n = 2 angle geometry: B = P Q(theta, branch), values are a cos + b sin
# ---------------------------------------------------------------------------

def _angle_coefficients(C: np.ndarray, colj: np.ndarray, P: np.ndarray, branch: int):
    """Per-row (alpha, beta) with row value = alpha cos(theta) + beta sin(theta)."""
    G = C @ P  # row r: g = P'c
    alpha = np.where(colj == 0, G[:, 0], G[:, 1] if branch == 0 else -G[:, 1])
    beta = np.where(colj == 0, G[:, 1], -G[:, 0] if branch == 0 else G[:, 0])
    return np.ascontiguousarray(alpha), np.ascontiguousarray(beta)


def _angle_target(w: np.ndarray, j: int, P: np.ndarray, branch: int):
    g = P.T @ w
    if j == 0:
        return float(g[0]), float(g[1])
    if branch == 0:
        return float(g[1]), float(-g[0])
    return float(-g[1]), float(g[0])


def _rotation(theta: float, branch: int) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    if branch == 0:
        return np.array([[c, -s], [s, c]])
    return np.array([[c, s], [s, -c]])


def _scan_2d(P: np.ndarray, rows: list[ConstraintRow], w: np.ndarray, j: int,
             grid: int, tol: float = 1e-9):
    """Dense sweep over both orthogonal branches; returns per-branch extrema."""
    C, colj, sense, bound = _row_arrays(rows, 2)
    out = []
    for branch in (0, 1):
        alpha, beta = _angle_coefficients(C, colj, P, branch)
        a0, b0 = _angle_target(w, j, P, branch)
        count, vmin, vmax, th_min, th_max = _kernels.theta_scan(
            alpha, beta, sense, bound, a0, b0, grid, tol)
        out.append((int(count), vmin, vmax, th_min, th_max, branch))
    return out


# ---------------------------------------------------------------------------
# Haar feasibility scan, used by the sampling oracle and as a rescue path
# ---------------------------------------------------------------------------

def _haar_scan(P: np.ndarray, rows: list[ConstraintRow], w: np.ndarray, j: int,
               samples: int, seed: int, tol: float = 1e-9, batch: int = 2048):
    n = P.shape[0]
    C, colj, sense, bound = _row_arrays(rows, n)
    rng = spawn_generator(seed, 0xA11)
    total = 0
    vmin = np.inf
    vmax = -np.inf
    Bmin = Bmax = None
    done = 0
    while done < samples:
        m = min(batch, samples - done)
        Q = haar_orthogonal(rng, n, size=m)
        Bs = np.ascontiguousarray(P @ Q)
        count, bvmin, bvmax, imin, imax = _kernels.feasible_scan(
            Bs, C, colj, sense, bound, w, j, tol)
        total += int(count)
        if count and bvmin < vmin:
            vmin, Bmin = float(bvmin), Bs[imin].copy()
        if count and bvmax > vmax:
            vmax, Bmax = float(bvmax), Bs[imax].copy()
        done += m
    return total, vmin, vmax, Bmin, Bmax


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def _solve_direction(problem, direction, config):
    try:
        return solve(problem, direction, config.solver)
    except NoFeasibleStart:
        return None


def _bounds_at(A, Sigma, rset, target, config, starts_B, scan_seed):
    """Shared core of bounds and bounds_batch once (A, Sigma) are unpacked."""
    n = rset.n
    P = _chol_sigma(Sigma)
    kmax = max(target.k, rset.max_horizon())
    stack = irf_stack(A, kmax)
    rows = constraint_rows(A, Sigma, rset)
    w = _target_vector(A, target, stack)
    j = target.j0

    candidates = []  # (value, B) pairs at feasible points

    scan = None
    if n == 2:
        scan = _scan_2d(P, rows, w, j, config.scan_grid)
        for count, vmin, vmax, th_min, th_max, branch in scan:
            if count:
                candidates.append((vmin, P @ _rotation(th_min, branch)))
                candidates.append((vmax, P @ _rotation(th_max, branch)))

    starts = [_sign_fix(B, rows) for B in starts_B]
    starts += [B for _, B in candidates]

    problem = make_inner_problem(Sigma, rows, w, j, starts)
    sol_max = _solve_direction(problem, "max", config)
    sol_min = _solve_direction(problem, "min", config)
    if sol_max is not None:
        candidates.append((sol_max.value, sol_max.x.reshape((n, n), order="F")))
    if sol_min is not None:
        candidates.append((sol_min.value, sol_min.x.reshape((n, n), order="F")))

    scan_found = scan is not None and any(s[0] for s in scan)
    if (sol_max is None or sol_min is None) and not scan_found:
        count, vmin, vmax, Bmin, Bmax = _haar_scan(
            P, rows, w, j, config.rescue_samples, scan_seed)
        if count == 0 and not candidates:
            raise EmptyIdentifiedSet(
                f"no feasible B found: sign-adjusted starts failed and a "
                f"{config.rescue_samples}-rotation scan found no feasible point"
            )
        if count:
            candidates.append((vmin, Bmin))
            candidates.append((vmax, Bmax))
            problem = make_inner_problem(Sigma, rows, w, j, [Bmin, Bmax])
            if sol_max is None:
                sol_max = _solve_direction(problem, "max", config)
                if sol_max is not None:
                    candidates.append(
                        (sol_max.value, sol_max.x.reshape((n, n), order="F")))
            if sol_min is None:
                sol_min = _solve_direction(problem, "min", config)
                if sol_min is not None:
                    candidates.append(
                        (sol_min.value, sol_min.x.reshape((n, n), order="F")))

    method = "nlp" if (sol_max is not None and sol_min is not None) else "scan"
    if not candidates:
        raise EmptyIdentifiedSet("no feasible point survived the polish stage")

    lo_val, lo_B = min(candidates, key=lambda t: t[0])
    hi_val, hi_B = max(candidates, key=lambda t: t[0])
    return IdentifiedSetBounds(
        target=target, lower=float(lo_val), upper=float(hi_val),
        argmin_B=lo_B, argmax_B=hi_B, feasible=True, method=method,
    )


def bounds(mu: np.ndarray, spec: VarSpec, rset: RestrictionSet, target: Target,
           config: BoundsConfig | None = None) -> IdentifiedSetBounds:
    """Endpoints of the identified set for one target at a fixed mu.

    Multistart NLP over vec(B): sign-adjusted Cholesky start, Haar rotation
    starts, and (n = 2) angle-scan seeds. For n = 2 the dense scan also
    contributes feasible candidate values directly, so the reported interval
    always brackets the best scanned points even if a polish run stalls.
    """
    config = config or BoundsConfig()
    target.validate(spec.n)
    rset.check_normalization(target.j)
    A, Sigma = unpack_mu(mu, spec.n, spec.p)
    P = _chol_sigma(Sigma)
    rng = spawn_generator(config.seed, 0)
    starts_B = [P.copy()]
    if config.starts > 1:
        Q = haar_orthogonal(rng, spec.n, size=config.starts - 1)
        starts_B += [P @ Q[i] for i in range(config.starts - 1)]
    return _bounds_at(A, Sigma, rset, target, config, starts_B, config.seed)


def bounds_batch(mu_draws: np.ndarray, spec: VarSpec, rset: RestrictionSet,
                 targets, config: BoundsConfig | None = None) -> BatchBounds:
    """Bounds per draw per target; rows never abort the batch.

    Row m depends only on (seed, m) and the row's content, so results are
    identical under any execution order. Rows whose Sigma fails to factor
    are marked 'singular', rows with an empty identified set 'empty'; both
    carry NaN values.
    """
    config = config or BoundsConfig()
    mu_draws = np.asarray(mu_draws, dtype=float)
    if mu_draws.ndim == 1:
        mu_draws = mu_draws[None, :]
    targets = list(targets)
    for t in targets:
        t.validate(spec.n)
        rset.check_normalization(t.j)
    M = mu_draws.shape[0]
    H = len(targets)
    values = np.full((M, H, 2), np.nan)
    status = []
    batch_cfg = BoundsConfig(
        starts=config.batch_starts, batch_starts=config.batch_starts,
        seed=config.seed, scan_grid=config.scan_grid,
        rescue_samples=config.rescue_samples, solver=config.solver,
    )
    for m in range(M):
        try:
            A, Sigma = unpack_mu(mu_draws[m], spec.n, spec.p)
            P = _chol_sigma(Sigma)
        except (SingularSigma, np.linalg.LinAlgError):
            status.append("singular")
            continue
        if spec.n == 2:
            starts_B = [P.copy()]  # scan seeds supply the rest, deterministically
        else:
            rng = spawn_generator(config.seed, m)
            Q = haar_orthogonal(rng, spec.n, size=max(config.batch_starts - 1, 1))
            starts_B = [P.copy()] + [P @ Q[i] for i in range(Q.shape[0])]
        row_status = "ok"
        for h, t in enumerate(targets):
            try:
                b = _bounds_at(A, Sigma, rset, t, batch_cfg, starts_B,
                               scan_seed=(config.seed << 16) ^ m)
            except EmptyIdentifiedSet:
                row_status = "empty"
                values[m, :, :] = np.nan
                break
            values[m, h, 0] = b.lower
            values[m, h, 1] = b.upper
        status.append(row_status)
    return BatchBounds(values=values, status=tuple(status))


def oracle_bounds_2d(mu: np.ndarray, rset: RestrictionSet, target: Target,
                     grid: int = 100_000) -> IdentifiedSetBounds:
    """Exhaustive rotation/reflection sweep for n = 2.

    Every orthogonal 2x2 matrix is a rotation or a reflection indexed by one
    angle, so a uniform grid over both branches brackets the identified set
    to O(1/grid) without any optimizer. Verification tool, n = 2 only.
    """
    n, p = rset.n, _infer_p(mu, rset.n)
    if n != 2:
        raise DimensionMismatch("angle oracle is defined for n = 2 only")
    A, Sigma = unpack_mu(mu, n, p)
    P = _chol_sigma(Sigma)
    rows = constraint_rows(A, Sigma, rset)
    w = _target_vector(A, target)
    scans = _scan_2d(P, rows, w, target.j0, grid)
    total = sum(s[0] for s in scans)
    if total == 0:
        raise EmptyIdentifiedSet(f"no feasible angle on a grid of {grid} points")
    best_lo = min((s for s in scans if s[0]), key=lambda s: s[1])
    best_hi = max((s for s in scans if s[0]), key=lambda s: s[2])
    return IdentifiedSetBounds(
        target=target, lower=float(best_lo[1]), upper=float(best_hi[2]),
        argmin_B=P @ _rotation(best_lo[3], best_lo[5]),
        argmax_B=P @ _rotation(best_hi[4], best_hi[5]),
        feasible=True, method="angle-grid",
    )


def oracle_bounds_haar(mu: np.ndarray, rset: RestrictionSet, target: Target,
                       samples: int = 100_000, seed: int = 0) -> IdentifiedSetBounds:
    """Sampling inner approximation for any n: true bounds contain these.

    Haar rotations are dense in the orthogonal group but a finite sample
    only reaches into the set, never past its edge; use as a one-sided
    sanity check, not as the bound estimate.
    """
    n, p = rset.n, _infer_p(mu, rset.n)
    A, Sigma = unpack_mu(mu, n, p)
    P = _chol_sigma(Sigma)
    rows = constraint_rows(A, Sigma, rset)
    w = _target_vector(A, target)
    count, vmin, vmax, Bmin, Bmax = _haar_scan(P, rows, w, target.j0, samples, seed)
    if count == 0:
        raise EmptyIdentifiedSet(f"no feasible rotation among {samples} samples")
    return IdentifiedSetBounds(
        target=target, lower=vmin, upper=vmax,
        argmin_B=Bmin, argmax_B=Bmax, feasible=True, method="haar-sample",
    )


def _infer_p(mu: np.ndarray, n: int) -> int:
    nv = n * (n + 1) // 2
    rem = np.asarray(mu).size - nv
    if rem < 0 or rem % (n * n):
        raise DimensionMismatch(
            f"mu of size {np.asarray(mu).size} does not match n={n}")
    return rem // (n * n)

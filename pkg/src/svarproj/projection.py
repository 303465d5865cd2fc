"""Projection of a Wald ellipsoid through the identified-set map.

The outer program optimizes the same impulse-response coefficient as the
inner one, but lets the reduced-form parameter move inside the ellipsoid
T (mu_hat - mu)' Omega^{-1} (mu_hat - mu) <= c. Decision variables are
x = [vec(A); vech(Sigma); vec(B)]; all constraint and objective gradients
are analytic (the IRF part via the reverse-mode kernel), which is what
keeps the per-endpoint solve cheap enough to sit inside a calibration loop.

Intervals are parametrized by the squared radius c rather than a nominal
level: credibility calibration bisects on c, and alpha or a fractional
degrees-of-freedom reading are derived afterwards.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import gammainc, gammaincinv

from . import _kernels
from ._rng import haar_orthogonal, spawn_generator
from .errors import (DimensionMismatch, DomainError, EmptyAtCenter,
                     EmptyIdentifiedSet, NoFeasibleStart, RidgeApplied)
from .idset import BoundsConfig, IdentifiedSetBounds, _sign_fix, bounds
from .restrictions import Restriction, RestrictionSet, constraint_rows
from .solver import NlpProblem, SolverConfig, solve, with_fd_gradient
from .varcore import (ReducedForm, Target, VarSpec, long_run_matrix, pack_mu,
                      stability_margin, unpack_mu, unvech, vech, vech_indices)

# ---------------------------------------------------------------------------
# chi-square radius algebra
# ---------------------------------------------------------------------------


def chi2_quantile(dof: float, prob: float) -> float:
    """Quantile of the chi-square distribution; dof may be fractional."""
    if not 0.0 < prob < 1.0:
        raise DomainError(f"prob must be in (0, 1), got {prob}")
    if dof <= 0.0:
        raise DomainError(f"dof must be positive, got {dof}")
    return float(2.0 * gammaincinv(dof / 2.0, prob))


def chi2_cdf(x: float, dof: float) -> float:
    if dof <= 0.0:
        raise DomainError(f"dof must be positive, got {dof}")
    if x <= 0.0:
        return 0.0
    return float(gammainc(dof / 2.0, x / 2.0))


def effective_dof(c: float, prob: float, tol: float = 1e-8) -> float:
    """The (fractional) dof whose prob-quantile equals c.

    chi2_quantile is increasing in dof at fixed prob, so bracket and
    bisect, then polish with a secant step until the radius reproduces c
    within tol.
    """
    if not 0.0 < prob < 1.0:
        raise DomainError(f"prob must be in (0, 1), got {prob}")
    if c <= 0.0:
        raise DomainError(f"c must be positive, got {c}")
    lo, hi = 1e-8, 1.0
    while chi2_quantile(hi, prob) < c:
        hi *= 2.0
        if hi > 1e12:
            raise DomainError(f"no dof below 1e12 reaches radius {c}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi2_quantile(mid, prob) < c:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * max(1.0, hi):
            break
    df = 0.5 * (lo + hi)
    for _ in range(4):  # secant polish
        f = chi2_quantile(df, prob) - c
        h = max(1e-7, 1e-7 * df)
        slope = (chi2_quantile(df + h, prob) - chi2_quantile(df - h, prob)) / (2 * h)
        if slope <= 0:
            break
        step = f / slope
        if not np.isfinite(step):
            break
        df = max(df - step, 1e-10)
    return float(df)


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WaldEllipsoid:
    """{mu : T (center - mu)' Omega^{-1} (center - mu) <= c}."""

    center: np.ndarray
    Omega: np.ndarray
    T: int
    c: float

    def __post_init__(self):
        if self.c < 0:
            raise DomainError(f"squared radius must be >= 0, got {self.c}")
        center = np.asarray(self.center, dtype=float).ravel()
        Omega = np.asarray(self.Omega, dtype=float)
        if Omega.shape != (center.size, center.size):
            raise DimensionMismatch(
                f"Omega shape {Omega.shape} does not match center length {center.size}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "Omega", Omega)

    def distance(self, mu: np.ndarray) -> float:
        r = self.center - np.asarray(mu, dtype=float).ravel()
        factor, _ = _factor_psd(self.Omega)
        return float(self.T * r @ cho_solve(factor, r))

    def contains(self, mu: np.ndarray, tol: float = 1e-9) -> bool:
        return self.distance(mu) <= self.c + tol


@dataclass(frozen=True)
class EndpointResult:
    value: float
    mu_star: np.ndarray
    B_star: np.ndarray
    wald: float
    stability: float
    status: str
    start_index: int = -1
    converged: bool = False


@dataclass(frozen=True)
class ProjectionRegion:
    """Per-target intervals of the projected ellipsoid, a product region."""

    targets: tuple[Target, ...]
    intervals: np.ndarray           # (H, 2)
    c: float
    status: tuple[str, ...]
    endpoints: tuple = field(repr=False, default=())
    alpha_equivalent: float | None = None
    effective_dof: float | None = None
    empty_at_center: bool = False

    def interval(self, h: int) -> tuple[float, float]:
        return float(self.intervals[h, 0]), float(self.intervals[h, 1])


def contains(region: ProjectionRegion, values: np.ndarray,
             tol: float = 1e-10) -> bool:
    """Whether a point (H,) or a per-target bounds array (H, 2) sits inside
    every interval of the region, closed comparison."""
    values = np.asarray(values, dtype=float)
    H = len(region.targets)
    if values.shape not in {(H,), (H, 2)}:
        raise DimensionMismatch(
            f"expected shape ({H},) or ({H}, 2), got {values.shape}")
    pts = values if values.ndim == 2 else values[:, None]
    lo = region.intervals[:, 0][:, None] - tol
    hi = region.intervals[:, 1][:, None] + tol
    return bool(np.all((pts >= lo) & (pts <= hi)))


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProjectionConfig:
    starts: int = 8
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    inner: BoundsConfig = field(default_factory=BoundsConfig)
    require_stable: bool = False
    ridge: float = 1e-10


def _factor_psd(Omega: np.ndarray, ridge: float = 1e-10):
    """Cholesky factor of Omega, adding a scaled ridge if it is only PSD."""
    scale = max(float(np.trace(Omega)) / Omega.shape[0], 1e-300)
    bump = 0.0
    for _ in range(8):
        try:
            factor = cho_factor(Omega + bump * np.eye(Omega.shape[0]), lower=True)
            if bump > 0.0:
                warnings.warn(
                    f"Omega required a ridge of {bump:.2e} to factor",
                    RidgeApplied, stacklevel=3)
            return factor, bump
        except np.linalg.LinAlgError:
            bump = scale * ridge if bump == 0.0 else bump * 100.0
    raise DomainError("Omega cannot be factored even with a ridge")


# ---------------------------------------------------------------------------
# the joint program over x = [vec(A); vech(Sigma); vec(B)]
# ---------------------------------------------------------------------------

class _JointSpace:
    """Index bookkeeping plus unpack helpers for the joint variable."""

    def __init__(self, n: int, p: int):
        self.n = n
        self.p = p
        self.na = n * n * p
        self.nv = n * (n + 1) // 2
        self.d = self.na + self.nv
        self.dim = self.d + n * n

    def split(self, x):
        n = self.n
        A = x[: self.na].reshape(n, n * self.p, order="F")
        Sigma = unvech(x[self.na: self.d], n)
        B = x[self.d:].reshape(n, n, order="F")
        return A, Sigma, B

    def join(self, A, Sigma, B):
        return np.concatenate([pack_mu(A, Sigma), np.asarray(B).ravel(order="F")])


def _joint_objective(space: _JointSpace, target: Target):
    n, p = space.n, space.p
    ei = np.zeros(n)
    ei[target.i0] = 1.0

    def fun(x):
        A, _, B = space.split(x)
        A = np.ascontiguousarray(A)
        stack = _kernels.irf_stack(A, p, target.k)
        Ck = stack.sum(axis=0) if target.cumulative else stack[target.k]
        w = np.ascontiguousarray(B[:, target.j0])
        value = float(Ck[target.i0] @ w)
        g = np.zeros(space.dim)
        barA = _kernels.irf_adjoint(stack, A, p, target.k, target.cumulative, ei, w)
        g[: space.na] = barA.ravel(order="F")
        g[space.d + target.j0 * n: space.d + (target.j0 + 1) * n] = Ck[target.i0]
        return value, g

    return fun


def _factor_equalities(space: _JointSpace):
    """The n(n+1)/2 rows of BB' - Sigma = 0 with gradients in all blocks."""
    n = space.n
    ridx, cidx = vech_indices(n)
    out = []
    for t in range(space.nv):
        r, c = int(ridx[t]), int(cidx[t])

        def fun(x, r=r, c=c, t=t):
            B = x[space.d:].reshape(n, n, order="F")
            gB = np.zeros((n, n))
            gB[r] += B[c]
            gB[c] += B[r]
            g = np.zeros(space.dim)
            g[space.d:] = gB.ravel(order="F")
            g[space.na + t] = -1.0
            return float(B[r] @ B[c]) - x[space.na + t], g

        out.append(fun)
    return out


def _sym_grad_to_vech(G: np.ndarray, n: int) -> np.ndarray:
    """Fold an unsymmetrized d/dSigma gradient onto vech coordinates."""
    ridx, cidx = vech_indices(n)
    out = np.empty(ridx.size)
    for t in range(ridx.size):
        r, c = ridx[t], cidx[t]
        out[t] = G[r, r] if r == c else G[r, c] + G[c, r]
    return out


def _joint_restriction(space: _JointSpace, r: Restriction):
    """One restriction row as a smooth function of (A, Sigma, B)."""
    n, p = space.n, space.p
    j = r.j - 1
    sgn = -1.0 if r.sense == "<=" else 1.0
    if r.kind == "linear_b":
        terms = [(i - 1, k, coeff) for i, k, coeff in r.weights]
        kmax = max(k for _, k, _ in terms)
    else:
        terms = [(r.i - 1, r.k, 1.0)]
        kmax = r.k

    def fun(x):
        A, Sigma, B = space.split(x)
        A = np.ascontiguousarray(A)
        Bj = np.ascontiguousarray(B[:, j])
        g = np.zeros(space.dim)
        if r.kind in ("sign_irf", "zero_irf", "linear_b"):
            stack = _kernels.irf_stack(A, p, kmax)
            value = 0.0
            cvec = np.zeros(n)
            barA = np.zeros((n, n * p))
            for i0, k, coeff in terms:
                Ck = stack[: k + 1].sum(axis=0) if r.cumulative else stack[k]
                cvec += coeff * Ck[i0]
                ei = np.zeros(n)
                ei[i0] = 1.0
                barA += coeff * _kernels.irf_adjoint(
                    stack, A, p, k, r.cumulative, ei, Bj)
            value = float(cvec @ Bj)
            g[: space.na] = sgn * barA.ravel(order="F")
            g[space.d + j * n: space.d + (j + 1) * n] = sgn * cvec
        elif r.kind in ("sign_longrun", "zero_longrun"):
            L = long_run_matrix(A)
            i0 = r.i - 1
            value = float(L[i0] @ Bj)
            LBj = L @ Bj
            blk = np.outer(L[i0], LBj)      # same for every lag block
            g[: space.na] = np.tile(blk, (1, p)).ravel(order="F")
            g[space.d + j * n: space.d + (j + 1) * n] = L[i0]
            g *= sgn
        elif r.kind == "zero_b":
            i0 = r.i - 1
            value = float(B[i0, j])
            g[space.d + j * n + i0] = sgn
        else:  # zero_binv
            i0 = r.i - 1
            Si = np.linalg.solve(Sigma, np.eye(n))
            ci = Si[:, i0]
            value = float(ci @ Bj)
            g[space.d + j * n: space.d + (j + 1) * n] = sgn * ci
            G = -np.outer(ci, Si @ Bj)
            g[space.na: space.d] = sgn * _sym_grad_to_vech(G, n)
        if r.sense == "<=":
            return r.bound - value, g
        return value - r.bound, g

    return fun


def _wald_inequality(space: _JointSpace, mu_hat: np.ndarray, factor, T: int, c: float):
    def fun(x):
        r = mu_hat - x[: space.d]
        y = cho_solve(factor, r)
        g = np.zeros(space.dim)
        g[: space.d] = 2.0 * T * y
        return c - float(T * r @ y), g

    return fun


def _stability_inequality(space: _JointSpace, margin: float = 1.0 - 1e-6):
    def rho(x):
        A = x[: space.na].reshape(space.n, space.n * space.p, order="F")
        return margin - stability_margin(A)

    return with_fd_gradient(rho)


def _eigenclip(Sigma: np.ndarray, floor_scale: float = 1e-8) -> np.ndarray:
    vals, vecs = np.linalg.eigh(Sigma)
    floor = floor_scale * max(float(vals.max()), 1.0)
    if vals.min() >= floor:
        return Sigma
    vals = np.maximum(vals, floor)
    return (vecs * vals) @ vecs.T


def _psd_sqrt(M: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(M)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def _joint_starts(space, rf, rset, target, c, center, config, direction):
    """Start 0 lifts the inner solution; the rest jitter mu inside the
    ellipsoid (uniformly, by radial rescaling of a Gaussian direction) and
    rotate B accordingly."""
    n = space.n
    starts = []
    P_hat = np.linalg.cholesky(_eigenclip(rf.Sigma))
    Q_center = None
    if center is not None:
        B0 = center.argmax_B if direction == "max" else center.argmin_B
        starts.append(space.join(rf.A, rf.Sigma, B0))
        Q_center, _ = np.linalg.qr(np.linalg.solve(P_hat, B0))
    rng = spawn_generator(config.seed, target.k, target.i, target.j,
                          int(target.cumulative), 0 if direction == "max" else 1)
    F = _psd_sqrt(rf.Omega)
    need = max(config.starts - len(starts), 0)
    for s in range(need):
        z = rng.standard_normal(space.d)
        z *= rng.uniform() ** (1.0 / space.d) / max(np.linalg.norm(z), 1e-300)
        mu_s = rf.mu + np.sqrt(c / rf.T) * (F @ z)
        A_s, Sigma_s = unpack_mu(mu_s, n, rf.p)
        Sigma_s = _eigenclip(Sigma_s)
        P_s = np.linalg.cholesky(Sigma_s)
        if s == 0 and Q_center is not None:
            Q = Q_center
        else:
            Q = haar_orthogonal(rng, n)
        B_s = _sign_fix(P_s @ Q, constraint_rows(A_s, Sigma_s, rset))
        starts.append(np.concatenate([mu_s[: space.na], vech(Sigma_s),
                                      B_s.ravel(order="F")]))
    return starts


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def project_endpoint(rf: ReducedForm, rset: RestrictionSet, target: Target,
                     c: float, direction: str, config: ProjectionConfig | None = None,
                     center: IdentifiedSetBounds | None = None,
                     extra_starts: tuple = ()) -> EndpointResult:
    """One endpoint of the projection interval for one target.

    c = 0 collapses the ellipsoid to the point estimate, where the answer
    is the corresponding identified-set endpoint at mu_hat; that case is
    delegated to the inner problem directly.

    center, when already computed by the caller, skips a redundant inner
    solve; extra_starts are full joint vectors appended to the start list
    (used by the calibration loop to warm-start neighbouring radii).
    """
    config = config or ProjectionConfig()
    if direction not in ("max", "min"):
        raise DomainError(f"direction must be 'max' or 'min', got {direction!r}")
    if c < 0:
        raise DomainError(f"squared radius must be >= 0, got {c}")
    if rf.Omega is None:
        raise DomainError("reduced form carries no Omega; run estimate() or attach one")
    target.validate(rf.n)
    rset.check_normalization(target.j)
    spec = VarSpec(n=rf.n, p=rf.p, demean=rf.demean)

    if center is None:
        try:
            center = bounds(rf.mu, spec, rset, target, config.inner)
        except EmptyIdentifiedSet:
            center = None
            warnings.warn(
                "identified set is empty at the point estimate; searching the "
                "rest of the ellipsoid", EmptyAtCenter, stacklevel=2)

    space = _JointSpace(rf.n, rf.p)

    if c == 0.0:
        if center is None:
            raise EmptyIdentifiedSet(
                "identified set empty at mu_hat and the ellipsoid is degenerate (c=0)")
        value = center.upper if direction == "max" else center.lower
        B = center.argmax_B if direction == "max" else center.argmin_B
        return EndpointResult(
            value=float(value), mu_star=rf.mu.copy(), B_star=B, wald=0.0,
            stability=stability_margin(rf.A), status="center", converged=True)

    factor, _ = _factor_psd(rf.Omega, config.ridge)
    equalities = _factor_equalities(space)
    inequalities = [_wald_inequality(space, rf.mu, factor, rf.T, c)]
    for r in rset.restrictions:
        (equalities if r.is_equality else inequalities).append(
            _joint_restriction(space, r))
    if config.require_stable:
        inequalities.append(_stability_inequality(space))

    starts = _joint_starts(space, rf, rset, target, c, center, config,
                           direction)
    starts.extend(np.asarray(s, dtype=float).ravel() for s in extra_starts)
    problem = NlpProblem(
        dimension=space.dim, objective=_joint_objective(space, target),
        equalities=tuple(equalities), inequalities=tuple(inequalities),
        starts=tuple(starts))
    try:
        sol = solve(problem, direction, config.solver)
    except NoFeasibleStart:
        if center is None:
            return EndpointResult(
                value=np.nan, mu_star=np.full(space.d, np.nan),
                B_star=np.full((rf.n, rf.n), np.nan), wald=np.nan,
                stability=np.nan, status="failed", converged=False)
        value = center.upper if direction == "max" else center.lower
        B = center.argmax_B if direction == "max" else center.argmin_B
        return EndpointResult(
            value=float(value), mu_star=rf.mu.copy(), B_star=B, wald=0.0,
            stability=stability_margin(rf.A), status="center-fallback",
            converged=False)

    A_s, Sigma_s, B_s = space.split(sol.x)
    value = sol.value
    status = "ok"
    # the point estimate stays inside the ellipsoid for every c >= 0, so the
    # plug-in endpoints are always attainable; never report anything tighter
    if center is not None:
        center_value = center.upper if direction == "max" else center.lower
        if (direction == "max" and center_value > value) or \
           (direction == "min" and center_value < value):
            value = float(center_value)
            A_s, Sigma_s = rf.A, rf.Sigma
            B_s = center.argmax_B if direction == "max" else center.argmin_B
            status = "center-improved"
    mu_star = pack_mu(A_s, Sigma_s)
    r = rf.mu - mu_star
    wald = float(rf.T * r @ cho_solve(factor, r))
    return EndpointResult(
        value=float(value), mu_star=mu_star, B_star=np.asarray(B_s), wald=wald,
        stability=stability_margin(A_s), status=status,
        start_index=sol.start_index,
        converged=sol.converged if status == "ok" else True)


def projection_region(rf: ReducedForm, rset: RestrictionSet, targets, c: float,
                      config: ProjectionConfig | None = None,
                      warm: dict | None = None) -> ProjectionRegion:
    """Per-target projection intervals; the region is their product.

    Endpoint failures leave NaN intervals with a per-target status instead
    of aborting the whole region. warm maps (target_index, direction) to a
    joint start vector from a previous radius.
    """
    config = config or ProjectionConfig()
    if rf.Omega is None:
        raise DomainError("reduced form carries no Omega; run estimate() or attach one")
    targets = list(targets)
    spec = VarSpec(n=rf.n, p=rf.p, demean=rf.demean)
    H = len(targets)
    intervals = np.full((H, 2), np.nan)
    status = []
    endpoints = []
    empty_at_center = False
    warm = warm or {}
    for h, t in enumerate(targets):
        try:
            center = bounds(rf.mu, spec, rset, t, config.inner)
        except EmptyIdentifiedSet:
            center = None
            empty_at_center = True
        w_lo = warm.get((h, "min"))
        w_hi = warm.get((h, "max"))
        try:
            lo = project_endpoint(rf, rset, t, c, "min", config, center=center,
                                  extra_starts=(w_lo,) if w_lo is not None else ())
            hi = project_endpoint(rf, rset, t, c, "max", config, center=center,
                                  extra_starts=(w_hi,) if w_hi is not None else ())
        except EmptyIdentifiedSet:
            # c = 0 with an empty plug-in set: nothing to report for this
            # target, but the other targets still get their intervals
            status.append("failed")
            endpoints.append((None, None))
            continue
        endpoints.append((lo, hi))
        if np.isnan(lo.value) or np.isnan(hi.value):
            status.append("failed")
            continue
        intervals[h, 0] = min(lo.value, hi.value)
        intervals[h, 1] = max(lo.value, hi.value)
        status.append("ok" if lo.status.startswith(("ok", "center"))
                      and hi.status.startswith(("ok", "center")) else "partial")
    return ProjectionRegion(
        targets=tuple(targets), intervals=intervals, c=float(c),
        status=tuple(status), endpoints=tuple(endpoints),
        alpha_equivalent=chi2_cdf(c, rf.d) if c > 0 else None,
        empty_at_center=empty_at_center)

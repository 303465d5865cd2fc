"""Radius calibration and the companion interval constructions.

The robust-Bayes loop: draw reduced-form parameters from a posterior,
precompute every draw's identified-set bounds once, then bisect on the
squared radius c until the projection region contains the target fraction
of drawn sets. Credibility is monotone in c (regions are nested), which is
what makes plain bisection sound; the trace is kept and checked against
Monte Carlo noise as a diagnostic.

Also here: the shortest robust credible interval (per target), delta-method
intervals from finite-difference bound gradients, and the frequentist
Monte-Carlo radius calibration over a grid of candidate parameters.

Radii are squared (c) throughout, and alpha always names the credibility
or confidence level itself: the default baseline radius at level alpha is
chi2_quantile(d, alpha).
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (BracketFailure, DimensionMismatch, DomainError,
                     EmptyIdentifiedSet, NonDifferentiableSuspect,
                     NonMonotoneDetected, NoValidDraws, SingularSigma)
from ._rng import spawn_generator
from .idset import BatchBounds, BoundsConfig, bounds, bounds_batch
from .posterior import PosteriorDraws
from .projection import (ProjectionConfig, ProjectionRegion, chi2_quantile,
                         contains, effective_dof, project_endpoint,
                         projection_region)
from .restrictions import RestrictionSet
from .varcore import ReducedForm, Target, VarSpec, pack_mu, unpack_mu


@dataclass(frozen=True)
class CalibrateConfig:
    bounds: BoundsConfig = field(default_factory=BoundsConfig)
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    strict_empty: bool = False     # count excluded draws as failures
    max_iter: int = 60
    bracket_expansions: int = 3
    c_tol: float = 1e-9


@dataclass(frozen=True)
class CalibrationResult:
    c_star: float
    achieved: float
    eta: float
    iterations: tuple[tuple[float, float], ...]
    effective_dof: float
    excluded_draws: int
    alpha: float
    region: ProjectionRegion = field(repr=False, default=None)


@dataclass(frozen=True)
class DmInterval:
    target: Target
    r: float
    delta: float
    lower: float
    upper: float
    sigma_lower: float
    sigma_upper: float


def robust_credibility(bounds_array: BatchBounds, region: ProjectionRegion,
                       strict: bool = False) -> float:
    """Fraction of drawn identified sets the region contains whole.

    Rows whose status is not ok (empty set, non-PD Sigma) are excluded from
    the denominator by default; strict=True keeps them in and scores them
    as failures.
    """
    H = len(region.targets)
    if bounds_array.values.shape[1] != H:
        raise DimensionMismatch(
            f"bounds have {bounds_array.values.shape[1]} targets, region has {H}")
    M = bounds_array.values.shape[0]
    hits = 0
    n_ok = 0
    for m in range(M):
        if bounds_array.status[m] != "ok":
            continue
        n_ok += 1
        hits += contains(region, bounds_array.values[m])
    if strict:
        if M == 0:
            raise NoValidDraws("no draws at all")
        return hits / M
    if n_ok == 0:
        raise NoValidDraws("every draw was excluded (empty or singular)")
    return hits / n_ok


def _draws_matrix(draws) -> np.ndarray:
    if isinstance(draws, PosteriorDraws):
        return draws.draws
    arr = np.asarray(draws, dtype=float)
    return arr[None, :] if arr.ndim == 1 else arr


def calibrate_radius(rf: ReducedForm, rset: RestrictionSet, targets, draws,
                     alpha: float, eta: float = 0.005,
                     config: CalibrateConfig | None = None,
                     bounds_array: BatchBounds | None = None,
                     region_cache: dict | None = None) -> CalibrationResult:
    """Smallest squared radius whose robust credibility hits alpha.

    alpha is the credibility level itself (0.68 asks for 68% of the drawn
    identified sets inside the region). Bounds per draw are computed once
    up front (pass bounds_array to skip even that); each candidate c only
    costs one projection-region build, warm-started from the previous
    radius. The bracket starts at the full-dof radius
    chi2_quantile(d, alpha) and doubles up to bracket_expansions times
    when that is not credible enough.

    region_cache, when given, is used (and mutated) as the per-c region
    store, keyed by round(c, 9); seed it with already-built regions to skip
    re-solving them, or inspect it afterwards.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")
    if eta <= 0.0:
        raise DomainError(f"eta must be positive, got {eta}")
    config = config or CalibrateConfig()
    targets = list(targets)
    spec = VarSpec(n=rf.n, p=rf.p, demean=rf.demean)
    if bounds_array is None:
        bounds_array = bounds_batch(_draws_matrix(draws), spec, rset, targets,
                                    config.bounds)
    M = bounds_array.values.shape[0]
    excluded = sum(s != "ok" for s in bounds_array.status)

    lo_band = alpha - eta
    hi_band = alpha + eta
    cache: dict[float, ProjectionRegion] = region_cache if region_cache is not None else {}
    warm: dict = {}
    trace: list[tuple[float, float]] = []

    def region_at(c: float) -> ProjectionRegion:
        key = round(c, 9)
        if key not in cache:
            reg = projection_region(rf, rset, targets, c, config.projection,
                                    warm=warm)
            for h, (lo, hi) in enumerate(reg.endpoints):
                if lo is not None and np.isfinite(lo.value):
                    warm[(h, "min")] = np.concatenate(
                        [lo.mu_star, lo.B_star.ravel(order="F")])
                if hi is not None and np.isfinite(hi.value):
                    warm[(h, "max")] = np.concatenate(
                        [hi.mu_star, hi.B_star.ravel(order="F")])
            cache[key] = reg
        return cache[key]

    def cred_at(c: float) -> float:
        value = robust_credibility(bounds_array, region_at(c),
                                   strict=config.strict_empty)
        trace.append((float(c), float(value)))
        return value

    def finish(c_star: float, achieved: float) -> CalibrationResult:
        _warn_if_nonmonotone(trace, M)
        dof = effective_dof(c_star, alpha) if c_star > 0 else 0.0
        region = replace(region_at(c_star), effective_dof=dof)
        return CalibrationResult(
            c_star=float(c_star), achieved=float(achieved), eta=float(eta),
            iterations=tuple(trace), effective_dof=float(dof),
            excluded_draws=int(excluded), alpha=float(alpha), region=region)

    cred0 = cred_at(0.0)
    if cred0 >= lo_band:
        # degenerate case: even the plug-in region is credible enough
        return finish(0.0, cred0)

    c_hi = chi2_quantile(rf.d, alpha)
    cred_hi = cred_at(c_hi)
    expansions = 0
    while cred_hi < alpha and expansions < config.bracket_expansions:
        c_hi *= 2.0
        cred_hi = cred_at(c_hi)
        expansions += 1
    if cred_hi < lo_band:
        raise BracketFailure(
            f"credibility {cred_hi:.4f} at c={c_hi:.4g} after {expansions} "
            f"bracket expansions is still below {lo_band:.4f}")
    if cred_hi <= hi_band:
        return finish(c_hi, cred_hi)

    c_lo = 0.0
    for _ in range(config.max_iter):
        mid = 0.5 * (c_lo + c_hi)
        cm = cred_at(mid)
        if lo_band <= cm <= hi_band:
            return finish(mid, cm)
        if cm < lo_band:
            c_lo = mid
        else:
            c_hi = mid
            cred_hi = cm
        if c_hi - c_lo <= config.c_tol * max(1.0, c_hi):
            break
    # credibility jumped across the whole band at one c; report the upper end
    return finish(c_hi, cred_hi)


def _warn_if_nonmonotone(trace, M: int) -> None:
    noise = 2.0 / math.sqrt(max(M, 1))
    pts = sorted(trace)
    for (c1, v1), (c2, v2) in zip(pts, pts[1:]):
        if c2 > c1 and v2 < v1 - noise:
            warnings.warn(
                f"credibility fell from {v1:.4f} at c={c1:.4g} to {v2:.4f} at "
                f"c={c2:.4g}, beyond Monte Carlo noise {noise:.4f}",
                NonMonotoneDetected, stacklevel=3)
            return


def gk_robust_region(bounds_array: BatchBounds, target_index: int,
                     alpha: float) -> tuple[float, float]:
    """Shortest interval containing an alpha fraction of drawn sets whole.

    Candidate lower endpoints are the drawn set lowers; sweeping them in
    descending order while keeping the q smallest uppers in a heap finds
    the minimal-length cover in O(M log M).
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")
    ok = [m for m, s in enumerate(bounds_array.status) if s == "ok"]
    if not ok:
        raise NoValidDraws("no usable draws for the robust credible interval")
    lows = bounds_array.values[ok, target_index, 0]
    ups = bounds_array.values[ok, target_index, 1]
    M_ok = len(ok)
    q = max(1, math.ceil(alpha * M_ok))
    order = np.argsort(lows, kind="stable")
    heap: list[float] = []   # negated uppers, keeps the q smallest
    best = (np.inf, np.nan, np.nan)
    for idx in order[::-1]:
        heapq.heappush(heap, -float(ups[idx]))
        if len(heap) > q:
            heapq.heappop(heap)
        if len(heap) == q:
            length = -heap[0] - float(lows[idx])
            if length < best[0]:
                best = (length, float(lows[idx]), -heap[0])
    return best[1], best[2]


# ---------------------------------------------------------------------------
# delta-method intervals
# ---------------------------------------------------------------------------

def dm_sigma(mu: np.ndarray, rset: RestrictionSet, target: Target,
             omega: np.ndarray, step: float = 1e-5,
             config: BoundsConfig | None = None,
             suspect_tol: float = 0.1):
    """Delta-method standard errors of the two bound functions at mu.

    Central finite differences coordinate by coordinate; the one-sided
    differences are compared and a NonDifferentiableSuspect warning flags
    coordinates where they disagree by more than suspect_tol relative (the
    bound functions are only directionally differentiable in general).

    Returns (sigma_lower, sigma_upper, grad_lower, grad_upper).
    """
    mu = np.asarray(mu, dtype=float).ravel()
    omega = np.asarray(omega, dtype=float)
    n = rset.n
    p = _lag_order(mu.size, n)
    spec = VarSpec(n=n, p=p)
    config = config or BoundsConfig(starts=6)
    base = bounds(mu, spec, rset, target, config)
    d = mu.size
    g_lo = np.empty(d)
    g_hi = np.empty(d)
    suspects = []
    for i in range(d):
        h = step * (1.0 + abs(mu[i]))
        mu_p = mu.copy()
        mu_m = mu.copy()
        mu_p[i] += h
        mu_m[i] -= h
        b_p = bounds(mu_p, spec, rset, target, config)
        b_m = bounds(mu_m, spec, rset, target, config)
        g_lo[i] = (b_p.lower - b_m.lower) / (2.0 * h)
        g_hi[i] = (b_p.upper - b_m.upper) / (2.0 * h)
        for fwd, bwd in (
            ((b_p.lower - base.lower) / h, (base.lower - b_m.lower) / h),
            ((b_p.upper - base.upper) / h, (base.upper - b_m.upper) / h),
        ):
            denom = max(abs(fwd), abs(bwd))
            if abs(fwd - bwd) > suspect_tol * denom + 1e-8:
                suspects.append(i)
                break
    if suspects:
        warnings.warn(
            f"one-sided differences disagree at coordinate(s) {sorted(set(suspects))}; "
            "the bound may be kinked there and the delta-method reading is suspect",
            NonDifferentiableSuspect, stacklevel=2)
    sigma_lo = float(np.sqrt(max(g_lo @ omega @ g_lo, 0.0)))
    sigma_hi = float(np.sqrt(max(g_hi @ omega @ g_hi, 0.0)))
    return sigma_lo, sigma_hi, g_lo, g_hi


def dm_interval(rf: ReducedForm, rset: RestrictionSet, target: Target,
                r: float, delta: float = 0.0, step: float = 1e-5,
                config: BoundsConfig | None = None) -> DmInterval:
    """[lower - (r+delta) sigma_lower / sqrt(T), upper + (r+delta) sigma_upper / sqrt(T)]."""
    if r < 0 or delta < 0:
        raise DomainError(f"r and delta must be >= 0, got r={r}, delta={delta}")
    if rf.Omega is None:
        raise DomainError("reduced form carries no Omega; run estimate() first")
    spec = VarSpec(n=rf.n, p=rf.p, demean=rf.demean)
    base = bounds(rf.mu, spec, rset, target, config or BoundsConfig(starts=6))
    s_lo, s_hi, _, _ = dm_sigma(rf.mu, rset, target, rf.Omega, step, config)
    width = (r + delta) / math.sqrt(rf.T)
    return DmInterval(
        target=target, r=float(r), delta=float(delta),
        lower=float(base.lower - width * s_lo),
        upper=float(base.upper + width * s_hi),
        sigma_lower=s_lo, sigma_upper=s_hi)


# ---------------------------------------------------------------------------
# frequentist Monte-Carlo calibration
# ---------------------------------------------------------------------------

def _lag_order(mu_len: int, n: int) -> int:
    na = mu_len - n * (n + 1) // 2
    if na <= 0 or na % (n * n):
        raise DimensionMismatch(f"mu length {mu_len} fits no lag order for n={n}")
    return na // (n * n)


def _rf_from_mu(mu: np.ndarray, T: int, n: int, p: int,
                omega: np.ndarray) -> ReducedForm:
    """Wrap a bare mu as a ReducedForm; QT is estimation metadata the
    projection never reads, so an identity placeholder is fine."""
    A, Sigma = unpack_mu(mu, n, p)
    return ReducedForm(A=A, Sigma=Sigma, mu=pack_mu(A, Sigma), T=T,
                       QT=np.eye(n * p), n=n, p=p, Omega=omega)


def frequentist_coverage(mu_i: np.ndarray, omega_hat: np.ndarray, T: int,
                         rset: RestrictionSet, target: Target, c: float,
                         M: int, K: int, seed: int,
                         config: ProjectionConfig | None = None) -> float:
    """Worst-case Monte Carlo coverage of the projection interval at mu_i.

    Draws mu_hat_m ~ N(mu_i, omega_hat/T) with omega_hat held fixed, builds
    each draw's projection interval at squared radius c, and reports the
    minimum containment frequency over a K-point grid of lambda values
    spanning the identified set at mu_i.
    """
    if M < 1 or K < 1:
        raise DomainError(f"need M >= 1 and K >= 1, got M={M}, K={K}")
    mu_i = np.asarray(mu_i, dtype=float).ravel()
    omega_hat = np.asarray(omega_hat, dtype=float)
    n = rset.n
    p = _lag_order(mu_i.size, n)
    spec = VarSpec(n=n, p=p)
    config = config or ProjectionConfig(starts=4, inner=BoundsConfig(starts=6))
    truth = bounds(mu_i, spec, rset, target, config.inner)
    grid = np.linspace(truth.lower, truth.upper, K)
    scale = omega_hat / T
    try:
        root = np.linalg.cholesky(scale)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(scale)
        root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    counts = np.zeros(K)
    valid = 0
    for m in range(M):
        rng = spawn_generator(seed, m)
        mu_m = mu_i + root @ rng.standard_normal(mu_i.size)
        try:
            _, Sigma_m = unpack_mu(mu_m, n, p)
            np.linalg.cholesky(Sigma_m)
        except np.linalg.LinAlgError:
            continue
        valid += 1
        lo, hi = _draw_interval(mu_m, omega_hat, T, spec, rset, target, c, config)
        counts += (grid >= lo - 1e-10) & (grid <= hi + 1e-10)
    if valid == 0:
        raise NoValidDraws("every simulated draw had a non-PD Sigma")
    return float(np.min(counts / valid))


def _draw_interval(mu_m, omega_hat, T, spec, rset, target, c, config):
    """One draw's projection interval; empty sets give an empty interval."""
    if c == 0.0:
        try:
            b = bounds(mu_m, spec, rset, target, config.inner)
        except (EmptyIdentifiedSet, SingularSigma):
            return np.inf, -np.inf
        return b.lower, b.upper
    rf_m = _rf_from_mu(mu_m, T, spec.n, spec.p, omega_hat)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lo = project_endpoint(rf_m, rset, target, c, "min", config)
        hi = project_endpoint(rf_m, rset, target, c, "max", config)
    if np.isnan(lo.value) or np.isnan(hi.value):
        return np.inf, -np.inf
    return min(lo.value, hi.value), max(lo.value, hi.value)


def calibrate_frequentist(grid_mus, radii_grid, omega_hat: np.ndarray, T: int,
                          rset: RestrictionSet, target: Target, alpha: float,
                          M: int, K: int, seed: int,
                          config: ProjectionConfig | None = None):
    """ApproxCL per candidate squared radius; pick the closest to alpha.

    alpha is the target confidence level. ApproxCL(c) = min over the mu
    grid of frequentist_coverage; draws reuse the same seeds across radii,
    so the table is non-decreasing in c up to solver tolerance. Ties in
    |ApproxCL - alpha| go to the smaller radius. Returns (r_star, table)
    with table rows (radius, approx_cl).
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")
    grid_mus = [np.asarray(mu, dtype=float).ravel() for mu in grid_mus]
    radii = [float(c) for c in radii_grid]
    if not grid_mus or not radii:
        raise DomainError("grid_mus and radii_grid must be nonempty")
    table = []
    for c in sorted(radii):
        cl = min(frequentist_coverage(mu_i, omega_hat, T, rset, target, c,
                                      M, K, seed, config)
                 for mu_i in grid_mus)
        table.append((c, cl))
    best = min(table, key=lambda row: (abs(row[1] - alpha), row[0]))
    return best[0], tuple(table)

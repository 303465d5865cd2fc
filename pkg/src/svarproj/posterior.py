"""Posterior samplers for the reduced-form parameter.

Two sources: the conjugate Normal-Wishart family (exact updates, exact
sampling) and the large-sample Gaussian approximation centred at the
estimate. Both emit packed mu rows so downstream bound evaluation never
needs to know where a draw came from. A Haar accept/reject band routine
is included as the conventional Bayesian baseline to compare regions
against.

Matrix square roots here are symmetric (eigendecomposition) roots; the
moment checks in the tests are root-invariant, but symmetric roots keep
the update algebra literal.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._rng import haar_orthogonal, spawn_generator
from .errors import (DegenerateWishart, DimensionMismatch, DomainError,
                     LowAcceptance, NoValidDraws, SingularUpdate)
from .idset import _sign_fix
from .restrictions import RestrictionSet, constraint_rows
from .varcore import (ReducedForm, Target, TimeSeriesData, irf_stack, pack_mu,
                      unpack_mu)

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class NwHyper:
    """Normal-Wishart prior hyperparameters.

    A0bar is the prior slope mean (n x np), S0 the prior scale (SPD), N0
    the prior slope precision scaled by T (PSD), v0 the prior degrees of
    freedom. N0 = 0, v0 = 0 is the flat limit: the update then returns the
    least-squares quantities unchanged.
    """

    A0bar: np.ndarray
    S0: np.ndarray
    N0: np.ndarray
    v0: float

    def __post_init__(self):
        A0 = np.asarray(self.A0bar, dtype=float)
        S0 = np.asarray(self.S0, dtype=float)
        N0 = np.asarray(self.N0, dtype=float)
        if S0.ndim != 2 or S0.shape[0] != S0.shape[1]:
            raise DimensionMismatch(f"S0 must be square, got {S0.shape}")
        if N0.ndim != 2 or N0.shape[0] != N0.shape[1]:
            raise DimensionMismatch(f"N0 must be square, got {N0.shape}")
        if not np.allclose(S0, S0.T, atol=1e-10):
            raise DimensionMismatch("S0 must be symmetric")
        if not np.allclose(N0, N0.T, atol=1e-10):
            raise DimensionMismatch("N0 must be symmetric")
        if self.v0 < 0:
            raise DomainError(f"v0 must be >= 0, got {self.v0}")
        object.__setattr__(self, "A0bar", A0)
        object.__setattr__(self, "S0", S0)
        object.__setattr__(self, "N0", N0)
        object.__setattr__(self, "v0", float(self.v0))

    @classmethod
    def flat(cls, n: int, p: int) -> "NwHyper":
        return cls(A0bar=np.zeros((n, n * p)), S0=np.eye(n),
                   N0=np.zeros((n * p, n * p)), v0=0.0)


@dataclass(frozen=True)
class PosteriorDraws:
    draws: np.ndarray                  # (M, d) of packed mu rows
    source: str                        # normal_wishart | gaussian_approx
    seed: int
    n: int
    p: int
    status: tuple[str, ...] = ()       # per row: ok | singular

    def __post_init__(self):
        if self.draws.ndim != 2 or self.draws.shape[0] < 1:
            raise DimensionMismatch("draws must be a nonempty M x d matrix")

    @property
    def M(self) -> int:
        return self.draws.shape[0]


def _sym_sqrt(M: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(M)
    if vals.min() < -1e-10 * max(abs(vals.max()), 1.0):
        raise SingularUpdate("matrix is not positive semidefinite")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def _inv_sym_sqrt(M: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(M)
    if vals.min() <= 0:
        raise SingularUpdate("matrix is singular; cannot take inverse root")
    return (vecs / np.sqrt(vals)) @ vecs.T


def _check_pair(rf: ReducedForm, data: TimeSeriesData) -> None:
    if data.n != rf.n:
        raise DimensionMismatch(f"data has {data.n} columns, reduced form n={rf.n}")
    if data.rows - rf.p != rf.T:
        raise DimensionMismatch(
            f"data implies T={data.rows - rf.p}, reduced form has T={rf.T}")


def nw_update(hyper: NwHyper, rf: ReducedForm,
              data: TimeSeriesData) -> tuple[np.ndarray, np.ndarray]:
    """Posterior location (A_T_bar) and scale (S_T) of the conjugate family.

    A_T_bar = A_hat Q_T K^{-1} + A0bar (N0/T) K^{-1} with K = N0/T + Q_T;
    S_T blends the prior scale, the residual covariance, and a shrinkage
    penalty on the slope movement, weighted by v0, T and 1 over T + v0.
    """
    _check_pair(rf, data)
    T = rf.T
    npdim = rf.n * rf.p
    if hyper.A0bar.shape != (rf.n, npdim) or hyper.N0.shape != (npdim, npdim):
        raise DimensionMismatch(
            f"hyperparameters sized for n={hyper.S0.shape[0]} do not match "
            f"n={rf.n}, p={rf.p}")
    K = hyper.N0 / T + rf.QT
    if np.linalg.cond(K) > _COND_LIMIT:
        raise SingularUpdate("N0/T + Q_T is numerically singular")
    Kinv = np.linalg.inv(K)
    A_T = rf.A @ rf.QT @ Kinv + hyper.A0bar @ (hyper.N0 / T) @ Kinv
    dA = A_T - hyper.A0bar
    w = T + hyper.v0
    S_T = (hyper.v0 / w) * hyper.S0 + (T / w) * rf.Sigma \
        + (1.0 / w) * dA @ (hyper.N0 @ Kinv @ rf.QT) @ dA.T
    return A_T, (S_T + S_T.T) / 2.0


def nw_posterior_draws(hyper: NwHyper, rf: ReducedForm, data: TimeSeriesData,
                       M: int, seed: int) -> PosteriorDraws:
    """Exact draws from the Normal-Wishart posterior.

    Per draw: Sigma* = S_T^{1/2} G^{-1} S_T^{1/2} with G the Gram matrix of
    T standard normal vectors (an inverse-Wishart draw), then the slope
    around A_T_bar with covariance K^{-1} kron Sigma*/T. Draw m depends on
    (seed, m) only.
    """
    if M < 1:
        raise DomainError(f"M must be >= 1, got {M}")
    if rf.T <= rf.n + 1:
        raise DomainError(f"need T > n + 1 for a proper posterior, T={rf.T}")
    A_T, S_T = nw_update(hyper, rf, data)
    T, n, npdim = rf.T, rf.n, rf.n * rf.p
    K = hyper.N0 / T + rf.QT
    K_inv_half = _inv_sym_sqrt(K)
    S_half = _sym_sqrt(S_T)
    out = np.empty((M, rf.d))
    for m in range(M):
        rng = spawn_generator(seed, m)
        G = None
        for attempt in range(2):
            Z = rng.standard_normal((T, n))
            Gc = Z.T @ Z / T
            if np.linalg.cond(Gc) < _COND_LIMIT:
                G = Gc
                break
        if G is None:
            raise DegenerateWishart(
                f"draw {m}: Gram matrix singular twice in a row")
        Sigma = S_half @ np.linalg.inv(G) @ S_half
        Sigma = (Sigma + Sigma.T) / 2.0
        W = rng.standard_normal((n, npdim))
        A = A_T + _sym_sqrt(Sigma / T) @ W @ K_inv_half
        out[m] = pack_mu(A, Sigma)
    return PosteriorDraws(draws=out, source="normal_wishart", seed=seed,
                          n=n, p=rf.p, status=("ok",) * M)


def gaussian_posterior_draws(rf: ReducedForm, M: int, seed: int) -> PosteriorDraws:
    """mu* ~ N(mu_hat, Omega/T), the large-sample approximation.

    Rows whose implied Sigma is not positive definite are kept but flagged
    'singular' so credibility denominators can exclude them explicitly.
    """
    if M < 1:
        raise DomainError(f"M must be >= 1, got {M}")
    if rf.Omega is None:
        raise DomainError("reduced form carries no Omega; run estimate() first")
    scale = rf.Omega / rf.T
    try:
        root = np.linalg.cholesky(scale)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(scale)
        root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    out = np.empty((M, rf.d))
    status = []
    for m in range(M):
        rng = spawn_generator(seed, m)
        out[m] = rf.mu + root @ rng.standard_normal(rf.d)
        _, Sigma = unpack_mu(out[m], rf.n, rf.p)
        try:
            np.linalg.cholesky(Sigma)
            status.append("ok")
        except np.linalg.LinAlgError:
            status.append("singular")
    return PosteriorDraws(draws=out, source="gaussian_approx", seed=seed,
                          n=rf.n, p=rf.p, status=tuple(status))


@dataclass(frozen=True)
class UhligBands:
    """Equal-tailed pointwise quantile bands from the accept/reject sampler."""

    targets: tuple[Target, ...]
    bands: np.ndarray                  # (H, 2)
    acceptance_rate: float
    n_accepted: int
    values: np.ndarray                 # (n_accepted, H) accepted lambdas


def uhlig_credible_bands(hyper: NwHyper, rf: ReducedForm, data: TimeSeriesData,
                         rset: RestrictionSet, targets, alpha: float,
                         M: int, seed: int) -> UhligBands:
    """Accept/reject over Normal-Wishart x Haar: the conventional Bayesian
    comparison point.

    Each posterior draw gets one Haar rotation, sign-fixed per shock column
    where a pure flip helps, and is kept only if every restriction holds.
    alpha is the band's credibility level; the band is equal-tailed, so the
    quantiles are ((1 - alpha)/2, (1 + alpha)/2) per target.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")
    targets = list(targets)
    for t in targets:
        t.validate(rf.n)
    draws = nw_posterior_draws(hyper, rf, data, M, seed)
    kept = []
    kmax = max([t.k for t in targets] + [rset.max_horizon()])
    for m in range(M):
        A, Sigma = unpack_mu(draws.draws[m], rf.n, rf.p)
        try:
            P = np.linalg.cholesky(Sigma)
        except np.linalg.LinAlgError:
            continue
        rng = spawn_generator(seed, m, 1)
        Q = haar_orthogonal(rng, rf.n)
        rows = constraint_rows(A, Sigma, rset)
        B = _sign_fix(P @ Q, rows)
        ok = True
        for row in rows:
            v = float(row.c @ B[:, row.col])
            if row.sense == ">=":
                ok = v >= row.bound - 1e-9
            elif row.sense == "<=":
                ok = v <= row.bound + 1e-9
            else:
                ok = abs(v - row.bound) <= 1e-9
            if not ok:
                break
        if not ok:
            continue
        stack = irf_stack(A, kmax)
        lam = np.empty(len(targets))
        for h, t in enumerate(targets):
            Ck = stack[: t.k + 1].sum(axis=0) if t.cumulative else stack[t.k]
            lam[h] = Ck[t.i0] @ B[:, t.j0]
        kept.append(lam)
    if not kept:
        raise NoValidDraws(
            f"no draw of {M} satisfied the restrictions; bands undefined")
    values = np.asarray(kept)
    rate = values.shape[0] / M
    if rate < 1e-3:
        warnings.warn(f"acceptance rate {rate:.2%} is below 0.1%",
                      LowAcceptance, stacklevel=2)
    bands = np.column_stack([
        np.quantile(values, (1.0 - alpha) / 2.0, axis=0),
        np.quantile(values, (1.0 + alpha) / 2.0, axis=0),
    ])
    return UhligBands(targets=tuple(targets), bands=bands,
                      acceptance_rate=rate, n_accepted=values.shape[0],
                      values=values)

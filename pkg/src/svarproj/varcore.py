"""Reduced-form VAR estimation and impulse-response algebra.

Conventions, fixed package-wide:

* vec stacks columns (Fortran order); vech stacks the lower triangle
  column-wise.
* mu = [vec(A); vech(Sigma)] with d = n^2 p + n(n+1)/2.
* The slope matrix A is n x (n p), lag blocks [A_1 ... A_p] side by side.
* The first p rows of the data only ever serve as regressors, so the
  effective sample size is T = rows - p everywhere (estimation, the
  covariance of mu_hat, Wald scaling).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import (
    DataFormatError,
    DimensionMismatch,
    ShortSample,
    SingularDesign,
    UnitRoot,
)

_COND_LIMIT = 1e12
_UNIT_ROOT_COND = 1e10


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeSeriesData:
    """Observed series, rows = time (oldest first), columns = variables."""

    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DimensionMismatch(f"data must be 2-d, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataFormatError("data contains non-finite entries")
        if len(self.names) != values.shape[1]:
            raise DimensionMismatch(
                f"{len(self.names)} names for {values.shape[1]} columns"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(str(s) for s in self.names))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class VarSpec:
    """Model dimensions and preprocessing flags."""

    n: int
    p: int
    demean: bool = True
    cumulative: bool = False

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise DimensionMismatch(f"need n >= 1 and p >= 1, got n={self.n}, p={self.p}")


@dataclass(frozen=True)
class Target:
    """One structural impulse-response coefficient: horizon k, response
    variable i, shock j (both 1-based)."""

    k: int
    i: int
    j: int
    cumulative: bool = False

    def __post_init__(self):
        if self.k < 0:
            raise DimensionMismatch(f"horizon must be >= 0, got {self.k}")

    def validate(self, n: int) -> None:
        if not (1 <= self.i <= n and 1 <= self.j <= n):
            raise DimensionMismatch(f"target indices ({self.i},{self.j}) out of range for n={n}")

    @property
    def i0(self) -> int:
        return self.i - 1

    @property
    def j0(self) -> int:
        return self.j - 1


@dataclass(frozen=True)
class ReducedForm:
    """Least-squares estimate plus everything downstream modules need."""

    A: np.ndarray                    # n x (n p)
    Sigma: np.ndarray                # n x n, symmetrized
    mu: np.ndarray                   # [vec(A); vech(Sigma)]
    T: int                           # effective sample size, rows - p
    QT: np.ndarray                   # (1/T) sum X_t X_t'
    n: int
    p: int
    demean: bool = True
    Omega: np.ndarray | None = None  # asymptotic covariance of sqrt(T)(mu_hat - mu)

    @property
    def d(self) -> int:
        return self.n * self.n * self.p + self.n * (self.n + 1) // 2

    def with_omega(self, omega: np.ndarray) -> "ReducedForm":
        return replace(self, Omega=omega)


# ---------------------------------------------------------------------------
# vec / vech plumbing
# ---------------------------------------------------------------------------

def vech_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """(row, col) index arrays of the lower triangle in column-wise order."""
    rows, cols = [], []
    for j in range(n):
        for i in range(j, n):
            rows.append(i)
            cols.append(j)
    return np.asarray(rows), np.asarray(cols)


def vech(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    r, c = vech_indices(M.shape[0])
    return M[r, c]


def unvech(v: np.ndarray, n: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.size != n * (n + 1) // 2:
        raise DimensionMismatch(f"vech length {v.size} does not match n={n}")
    S = np.zeros((n, n))
    r, c = vech_indices(n)
    S[r, c] = v
    S[c, r] = v
    return S


def duplication_matrix(n: int) -> np.ndarray:
    """D with D.vech(S) = vec(S) for symmetric S; shape (n^2, n(n+1)/2)."""
    half = n * (n + 1) // 2
    D = np.zeros((n * n, half))
    r, c = vech_indices(n)
    for t in range(half):
        i, j = r[t], c[t]
        D[i + j * n, t] = 1.0
        D[j + i * n, t] = 1.0
    return D


def elimination_matrix(n: int) -> np.ndarray:
    """L with L.vec(S) = vech(S); shape (n(n+1)/2, n^2)."""
    half = n * (n + 1) // 2
    L = np.zeros((half, n * n))
    r, c = vech_indices(n)
    for t in range(half):
        L[t, r[t] + c[t] * n] = 1.0
    return L


def pack_mu(A: np.ndarray, Sigma: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    n = Sigma.shape[0]
    if Sigma.shape != (n, n):
        raise DimensionMismatch(f"Sigma must be square, got {Sigma.shape}")
    if not np.allclose(Sigma, Sigma.T, atol=1e-8, rtol=0.0):
        raise DimensionMismatch("Sigma must be symmetric")
    if A.shape[0] != n or A.shape[1] % n:
        raise DimensionMismatch(f"A shape {A.shape} incompatible with n={n}")
    return np.concatenate([A.ravel(order="F"), vech(Sigma)])


def unpack_mu(mu: np.ndarray, n: int, p: int) -> tuple[np.ndarray, np.ndarray]:
    mu = np.asarray(mu, dtype=float)
    na = n * n * p
    d = na + n * (n + 1) // 2
    if mu.size != d:
        raise DimensionMismatch(f"mu length {mu.size}, expected d={d} for n={n}, p={p}")
    A = mu[:na].reshape(n, n * p, order="F")
    Sigma = unvech(mu[na:], n)
    return A, Sigma


def infer_lag_order(mu_len: int, n: int) -> int:
    """Lag order implied by len(mu) and n; errors if no integer p fits."""
    na = mu_len - n * (n + 1) // 2
    if na <= 0 or na % (n * n):
        raise DimensionMismatch(f"mu length {mu_len} fits no lag order for n={n}")
    return na // (n * n)


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------

def _design(data: TimeSeriesData, spec: VarSpec) -> tuple[np.ndarray, np.ndarray]:
    """Response block Y_t and stacked-lag regressors X_t, t = p..rows-1."""
    Y = data.values
    if spec.demean:
        Y = Y - Y.mean(axis=0)
    rows, p = data.rows, spec.p
    X = np.hstack([Y[p - m: rows - m] for m in range(1, p + 1)])
    return Y[p:], X


def ols_estimate(data: TimeSeriesData, spec: VarSpec) -> ReducedForm:
    """Equation-by-equation least squares of Y_t on (Y_{t-1}', ..., Y_{t-p}')'.

    Parameters
    ----------
    data : TimeSeriesData
    spec : VarSpec
        Column count must match the data.

    Returns
    -------
    ReducedForm
        With Sigma symmetrized and mu packed; Omega is left unset, see
        asymptotic_covariance.
    """
    if data.n != spec.n:
        raise DimensionMismatch(f"data has {data.n} columns, spec says n={spec.n}")
    T = data.rows - spec.p
    if T <= spec.n * spec.p + 1:
        raise ShortSample(
            f"effective T={T} with n={spec.n}, p={spec.p}; need T > n*p + 1"
        )
    Yt, X = _design(data, spec)
    QT = X.T @ X / T
    if np.linalg.cond(QT) > _COND_LIMIT:
        raise SingularDesign("regressor second-moment matrix is numerically singular")
    A = np.linalg.solve(QT, X.T @ Yt / T).T
    resid = Yt - X @ A.T
    Sigma = resid.T @ resid / T
    Sigma = (Sigma + Sigma.T) / 2.0
    return ReducedForm(
        A=A, Sigma=Sigma, mu=pack_mu(A, Sigma), T=T, QT=QT,
        n=spec.n, p=spec.p, demean=spec.demean,
    )


def asymptotic_covariance(data: TimeSeriesData, rf: ReducedForm) -> np.ndarray:
    """Sandwich covariance of sqrt(T)(mu_hat - mu).

    Omega = V M V' with M the second moment of the stacked score
    m_t = [vec(eta_t X_t'); vec(eta_t eta_t' - Sigma_hat)] and V block
    diagonal: QT^{-1} kron I_n on the slope block (column-stacking vec)
    and the elimination matrix on the covariance block.
    """
    spec = VarSpec(n=rf.n, p=rf.p, demean=rf.demean)
    if data.n != rf.n:
        raise DimensionMismatch(f"data has {data.n} columns, reduced form has n={rf.n}")
    Yt, X = _design(data, spec)
    T = Yt.shape[0]
    if T != rf.T:
        raise DimensionMismatch(f"data implies T={T}, reduced form has T={rf.T}")
    eta = Yt - X @ rf.A.T
    n, npdim = rf.n, rf.n * rf.p
    # vec(eta X') under column stacking is kron(X, eta)
    m_slope = np.einsum("tc,ta->tca", X, eta).reshape(T, npdim * n)
    m_cov = np.einsum("ta,tb->tab", eta, eta).reshape(T, n * n) - rf.Sigma.ravel()
    m = np.hstack([m_slope, m_cov])
    M = m.T @ m / T
    if np.linalg.cond(rf.QT) > _COND_LIMIT:
        raise SingularDesign("regressor second-moment matrix is numerically singular")
    V = np.zeros((rf.d, npdim * n + n * n))
    V[: npdim * n, : npdim * n] = np.kron(np.linalg.inv(rf.QT), np.eye(n))
    V[npdim * n:, npdim * n:] = elimination_matrix(n)
    omega = V @ M @ V.T
    return (omega + omega.T) / 2.0


def estimate(data: TimeSeriesData, spec: VarSpec) -> ReducedForm:
    """ols_estimate plus the sandwich covariance attached."""
    rf = ols_estimate(data, spec)
    return rf.with_omega(asymptotic_covariance(data, rf))


# ---------------------------------------------------------------------------
# impulse-response algebra
# ---------------------------------------------------------------------------

def irf_stack(A: np.ndarray, kmax: int) -> np.ndarray:
    """All moving-average coefficient matrices C_0..C_kmax, stacked."""
    A = np.ascontiguousarray(A, dtype=float)
    n = A.shape[0]
    if A.shape[1] % n:
        raise DimensionMismatch(f"A shape {A.shape} is not n x (n p)")
    return _kernels.irf_stack(A, A.shape[1] // n, int(kmax))


def irf_matrix(A: np.ndarray, k: int) -> np.ndarray:
    """C_k(A) from the recursion C_k = sum_{m=1..min(k,p)} C_{k-m} A_m."""
    if k < 0:
        raise DimensionMismatch(f"horizon must be >= 0, got {k}")
    return irf_stack(A, k)[k]


def structural_irf(A: np.ndarray, B: np.ndarray, target: Target) -> float:
    """lambda = e_i' C_k(A) B e_j, cumulative sum over horizons if flagged."""
    stack = irf_stack(A, target.k)
    Ck = stack.sum(axis=0) if target.cumulative else stack[target.k]
    return float(Ck[target.i0] @ B[:, target.j0])


def companion_matrix(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    p = A.shape[1] // n
    F = np.zeros((n * p, n * p))
    F[:n] = A
    if p > 1:
        F[n:, :-n] = np.eye(n * (p - 1))
    return F


def stability_margin(A: np.ndarray) -> float:
    """Spectral radius of the companion matrix; below one means stable."""
    return float(np.max(np.abs(np.linalg.eigvals(companion_matrix(A)))))


def long_run_matrix(A: np.ndarray) -> np.ndarray:
    """(I - A_1 - ... - A_p)^{-1}, the cumulative response at the infinite
    horizon."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    p = A.shape[1] // n
    S = np.eye(n) - sum(A[:, m * n: (m + 1) * n] for m in range(p))
    if np.linalg.cond(S) > _UNIT_ROOT_COND:
        raise UnitRoot("I - A_1 - ... - A_p is numerically singular")
    return np.linalg.inv(S)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def load_csv(path) -> TimeSeriesData:
    """Read a data file: header row of variable names, then numeric rows,
    oldest first, comma delimiter, no missing values.

    Raises DataFormatError naming the offending row and column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            names = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        names = [s.strip() for s in names]
        if not names or any(not s for s in names):
            raise DataFormatError(f"{path}: header row must name every column")
        rows = []
        for rownum, record in enumerate(reader, start=2):
            if len(record) != len(names):
                raise DataFormatError(
                    f"{path}: row {rownum} has {len(record)} fields, expected {len(names)}"
                )
            parsed = []
            for colnum, cell in enumerate(record, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise DataFormatError(
                        f"{path}: non-numeric cell at row {rownum}, column {colnum} "
                        f"({names[colnum - 1]}): {cell!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise DataFormatError(f"{path}: no observations after the header")
    return TimeSeriesData(values=np.asarray(rows, dtype=float), names=tuple(names))

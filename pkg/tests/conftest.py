import numpy as np
import pytest

from svarproj import TimeSeriesData, VarSpec, estimate
from svarproj.restrictions import Restriction, RestrictionSet

# Shared DGP: a comfortably stable bivariate VAR(1) with correlated shocks.
# Spectral radius of A is ~0.56, so even short samples estimate cleanly.
DGP_A = np.array([[0.5, 0.1], [0.2, 0.3]])
DGP_SIGMA = np.array([[1.0, 0.3], [0.3, 0.8]])

# Impact sign pattern: shock 1 moves both variables up, shock 2 moves the
# first down and the second up. Columns of any feasible B are separated,
# which keeps the identified set nonempty and well inside the Haar support.
SIGN_PATTERN = RestrictionSet(n=2, restrictions=(
    Restriction(kind="sign_irf", j=1, i=1, k=0, sense=">="),
    Restriction(kind="sign_irf", j=1, i=2, k=0, sense=">="),
    Restriction(kind="sign_irf", j=2, i=1, k=0, sense="<="),
    Restriction(kind="sign_irf", j=2, i=2, k=0, sense=">="),
), shock_labels=("demand", "supply"))


def simulate_var(A, Sigma, T, seed, burn=100):
    """Simulate T rows of a stationary VAR given lag blocks side by side."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    p = A.shape[1] // n
    rng = np.random.default_rng(seed)
    P = np.linalg.cholesky(Sigma)
    y = np.zeros((T + burn, n))
    for t in range(p, T + burn):
        mean = sum(A[:, m * n:(m + 1) * n] @ y[t - 1 - m] for m in range(p))
        y[t] = mean + P @ rng.standard_normal(n)
    return y[burn:]


def random_stable_var(rng, n=2, p=1, rho_max=0.9):
    """Draw (A, Sigma) with spectral radius below rho_max and Sigma PD."""
    while True:
        A = rng.standard_normal((n, n * p)) * 0.4
        comp = np.zeros((n * p, n * p))
        comp[:n] = A
        if p > 1:
            comp[n:, :-n] = np.eye(n * (p - 1))
        if max(abs(np.linalg.eigvals(comp))) < rho_max:
            break
    L = rng.standard_normal((n, n)) * 0.5
    Sigma = L @ L.T + 0.3 * np.eye(n)
    return A, Sigma


@pytest.fixture(scope="session")
def sample_rf():
    """One estimated reduced form, shared wherever only shapes matter."""
    y = simulate_var(DGP_A, DGP_SIGMA, 300, seed=42)
    data = TimeSeriesData(values=y, names=("emp", "wage"))
    return estimate(data, VarSpec(n=2, p=1))


@pytest.fixture(scope="session")
def sample_data():
    y = simulate_var(DGP_A, DGP_SIGMA, 300, seed=42)
    return TimeSeriesData(values=y, names=("emp", "wage"))

"""Declarative identifying restrictions, reduced to rows linear in B e_j.

Every supported restriction evaluates, at a fixed (A, Sigma), to a linear
form c'(B e_j) compared against a bound:

* sign_irf / zero_irf      c = C_k(A)' e_i, cumulative sums supported
* sign_longrun / zero_longrun   c = ((I - sum A_m)^{-1})' e_i
* zero_b                   c = e_i
* zero_binv                c = Sigma^{-1} e_i, using B'^{-1} = Sigma^{-1} B
* linear_b                 weighted sums of IRF coefficients on one shock

Ratio (elasticity) bounds are supplied pre-linearized through linear_b,
which keeps every row linear in the shock column and avoids singularities
at zero denominators. Indices i, j are 1-based.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (DataFormatError, DimensionMismatch, DomainError,
                     NormalizationMissing)
from .varcore import irf_stack, long_run_matrix, vech_indices

KINDS = ("sign_irf", "zero_irf", "zero_b", "zero_binv",
         "sign_longrun", "zero_longrun", "linear_b")
SENSES = (">=", "<=", "=")

_ZERO_KINDS = {"zero_irf", "zero_b", "zero_binv", "zero_longrun"}
_SIGN_KINDS = {"sign_irf", "sign_longrun"}


@dataclass(frozen=True)
class Restriction:
    """One identifying restriction.

    For linear_b the row is sum of coeff * e_i' C_k(A) B e_j over the
    weights list [(i, k, coeff), ...], all on shock column j; the i and k
    fields are ignored in that case.
    """

    kind: str
    j: int
    i: int = 1
    k: int = 0
    sense: str = ">="
    bound: float = 0.0
    weights: tuple[tuple[int, int, float], ...] | None = None
    cumulative: bool = False
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown restriction kind {self.kind!r}")
        if self.sense not in SENSES:
            raise DomainError(f"unknown sense {self.sense!r}")
        if self.kind in _ZERO_KINDS:
            object.__setattr__(self, "sense", "=")
            object.__setattr__(self, "bound", 0.0)
        if self.kind in _SIGN_KINDS and self.sense == "=":
            raise DomainError(f"{self.kind} cannot have sense '='")
        if self.kind == "linear_b":
            if not self.weights:
                raise DomainError("linear_b needs at least one weight term")
            object.__setattr__(
                self,
                "weights",
                tuple((int(i), int(k), float(c)) for i, k, c in self.weights),
            )
        if self.k < 0:
            raise DomainError(f"horizon must be >= 0, got {self.k}")

    @property
    def is_equality(self) -> bool:
        return self.sense == "="

    def validate(self, n: int) -> None:
        if not (1 <= self.j <= n):
            raise DimensionMismatch(f"shock index {self.j} out of range for n={n}")
        if self.kind == "linear_b":
            for i, k, _ in self.weights:
                if not (1 <= i <= n):
                    raise DimensionMismatch(f"weight variable {i} out of range for n={n}")
                if k < 0:
                    raise DimensionMismatch(f"weight horizon {k} must be >= 0")
        elif not (1 <= self.i <= n):
            raise DimensionMismatch(f"variable index {self.i} out of range for n={n}")


@dataclass(frozen=True)
class RestrictionSet:
    """A family of restrictions on an n-variable model."""

    n: int
    restrictions: tuple[Restriction, ...]
    shock_labels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "restrictions", tuple(self.restrictions))
        for r in self.restrictions:
            r.validate(self.n)
        if self.shock_labels:
            if len(self.shock_labels) != self.n:
                raise DimensionMismatch(
                    f"{len(self.shock_labels)} shock labels for n={self.n}"
                )
            object.__setattr__(self, "shock_labels", tuple(map(str, self.shock_labels)))

    def __len__(self) -> int:
        return len(self.restrictions)

    def max_horizon(self) -> int:
        k = 0
        for r in self.restrictions:
            if r.kind in ("sign_irf", "zero_irf"):
                k = max(k, r.k)
            elif r.kind == "linear_b":
                k = max(k, max(kk for _, kk, _ in r.weights))
        return k

    def needs_long_run(self) -> bool:
        return any(r.kind in ("sign_longrun", "zero_longrun") for r in self.restrictions)

    def sign_restricted_shocks(self) -> set[int]:
        """1-based shock columns carrying at least one inequality."""
        return {r.j for r in self.restrictions if not r.is_equality}

    def check_normalization(self, j: int) -> None:
        if j not in self.sign_restricted_shocks():
            raise NormalizationMissing(
                f"shock column {j} has no sign restriction; its bounds are "
                "ambiguous up to a sign flip"
            )


@dataclass(frozen=True)
class ConstraintRow:
    """One linearized restriction: c'(B e_col) [sense] bound, col 0-based."""

    c: np.ndarray
    col: int
    sense: str
    bound: float
    restriction: Restriction
    index: int

    @property
    def is_equality(self) -> bool:
        return self.sense == "="


def _row_vector(r: Restriction, stack: np.ndarray, longrun: np.ndarray | None,
                sigma_inv: np.ndarray | None) -> np.ndarray:
    """The c vector of one restriction at fixed (A, Sigma) summaries."""
    if r.kind in ("sign_irf", "zero_irf"):
        Ck = stack[: r.k + 1].sum(axis=0) if r.cumulative else stack[r.k]
        return Ck[r.i - 1].copy()
    if r.kind in ("sign_longrun", "zero_longrun"):
        return longrun[r.i - 1].copy()
    if r.kind == "zero_b":
        c = np.zeros(stack.shape[1])
        c[r.i - 1] = 1.0
        return c
    if r.kind == "zero_binv":
        return sigma_inv[:, r.i - 1].copy()
    # linear_b
    c = np.zeros(stack.shape[1])
    for i, k, coeff in r.weights:
        Ck = stack[: k + 1].sum(axis=0) if r.cumulative else stack[k]
        c += coeff * Ck[i - 1]
    return c


def constraint_rows(A: np.ndarray, Sigma: np.ndarray,
                    rset: RestrictionSet) -> list[ConstraintRow]:
    """Reduce every restriction to a row c'(B e_j) [sense] bound at (A, Sigma).

    The rows depend on A only through the IRF matrices and the long-run
    matrix, and on Sigma only through its inverse (zero_binv rows).
    """
    A = np.asarray(A, dtype=float)
    if A.shape[0] != rset.n:
        raise DimensionMismatch(f"A has {A.shape[0]} rows, restriction set has n={rset.n}")
    stack = irf_stack(A, rset.max_horizon())
    longrun = long_run_matrix(A) if rset.needs_long_run() else None
    sigma_inv = None
    if any(r.kind == "zero_binv" for r in rset.restrictions):
        sigma_inv = np.linalg.inv(np.asarray(Sigma, dtype=float))
    rows = []
    for idx, r in enumerate(rset.restrictions):
        rows.append(ConstraintRow(
            c=_row_vector(r, stack, longrun, sigma_inv),
            col=r.j - 1,
            sense=r.sense,
            bound=float(r.bound),
            restriction=r,
            index=idx,
        ))
    return rows


@dataclass(frozen=True)
class EvalReport:
    residuals: np.ndarray
    feasible: bool
    tol: float


def evaluate(A: np.ndarray, Sigma: np.ndarray, B: np.ndarray,
             rset: RestrictionSet, tol: float = 1e-6) -> EvalReport:
    """Residuals of every restriction row plus the vech(BB' - Sigma) block.

    Inequality residuals are oriented so feasible means >= -tol; equality
    residuals (including the factorization block) must be within tol in
    absolute value.
    """
    B = np.asarray(B, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    if B.shape != (rset.n, rset.n):
        raise DimensionMismatch(f"B must be {rset.n} x {rset.n}, got {B.shape}")
    residuals = []
    feasible = True
    for row in constraint_rows(A, Sigma, rset):
        v = float(row.c @ B[:, row.col])
        if row.sense == ">=":
            g = v - row.bound
            feasible &= g >= -tol
        elif row.sense == "<=":
            g = row.bound - v
            feasible &= g >= -tol
        else:
            g = v - row.bound
            feasible &= abs(g) <= tol
        residuals.append(g)
    r, c = vech_indices(rset.n)
    fact = (B @ B.T - Sigma)[r, c]
    feasible &= bool(np.all(np.abs(fact) <= tol))
    return EvalReport(
        residuals=np.concatenate([np.asarray(residuals), fact]) if residuals
        else fact.copy(),
        feasible=bool(feasible),
        tol=tol,
    )


# ---------------------------------------------------------------------------
# the bivariate labor-market preset
# ---------------------------------------------------------------------------

def bh_labor_market_preset(V: float = 1.0) -> RestrictionSet:
    """Bivariate labor-market demand/supply identification, 10 inequalities.

    Column 1 is an expansionary demand shock (impact signs +,+), column 2
    an expansionary supply shock (impact signs -,+). Short-run demand and
    supply elasticities are bounded through pre-linearized ratio rows, and
    the long-run response of the second variable to the demand shock is
    bounded by |gamma| <= 2V.
    """
    if V <= 0:
        raise DimensionMismatch(f"V must be positive, got {V}")
    V = float(V)
    rows = [
        Restriction("sign_irf", j=1, i=1, k=0, sense=">=", label="demand impact on variable 1 positive"),
        Restriction("sign_irf", j=1, i=2, k=0, sense=">=", label="demand impact on variable 2 positive"),
        Restriction("sign_irf", j=2, i=1, k=0, sense="<=", label="supply impact on variable 1 negative"),
        Restriction("sign_irf", j=2, i=2, k=0, sense=">=", label="supply impact on variable 2 positive"),
        Restriction("linear_b", j=1, sense=">=", weights=((1, 0, 2.0), (2, 0, -1.0)),
                    label="demand elasticity upper bound 2"),
        Restriction("linear_b", j=1, sense=">=", weights=((2, 0, 1.0), (1, 0, -0.27)),
                    label="demand elasticity lower bound 0.27"),
        Restriction("linear_b", j=2, sense=">=", weights=((2, 0, 1.0), (1, 0, 0.15)),
                    label="supply elasticity upper bound -0.15"),
        Restriction("linear_b", j=2, sense=">=", weights=((1, 0, -2.5), (2, 0, -1.0)),
                    label="supply elasticity lower bound -2.5"),
        Restriction("sign_longrun", j=1, i=2, sense=">=", bound=-2.0 * V,
                    label="long-run demand effect above -2V"),
        Restriction("sign_longrun", j=1, i=2, sense="<=", bound=2.0 * V,
                    label="long-run demand effect below 2V"),
    ]
    return RestrictionSet(n=2, restrictions=tuple(rows),
                          shock_labels=("demand", "supply"))


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

def to_dict(rset: RestrictionSet) -> dict:
    records = []
    for r in rset.restrictions:
        rec = {"kind": r.kind, "j": r.j, "sense": r.sense, "bound": r.bound}
        if r.kind == "linear_b":
            rec["weights"] = [list(w) for w in r.weights]
        else:
            rec["i"] = r.i
        if r.kind in ("sign_irf", "zero_irf", "linear_b"):
            rec["k"] = r.k
            if r.cumulative:
                rec["cumulative"] = True
        if r.label:
            rec["label"] = r.label
        records.append(rec)
    out = {"n": rset.n, "restrictions": records}
    if rset.shock_labels:
        out["shock_labels"] = list(rset.shock_labels)
    return out


def from_dict(payload: dict) -> RestrictionSet:
    try:
        n = int(payload["n"])
        records = payload["restrictions"]
    except (KeyError, TypeError) as exc:
        raise DataFormatError(f"restriction file needs 'n' and 'restrictions': {exc}") from None
    restrictions = []
    for idx, rec in enumerate(records):
        if "kind" not in rec:
            raise DataFormatError(f"restriction record {idx} has no 'kind'")
        try:
            restrictions.append(Restriction(
                kind=rec["kind"],
                j=int(rec.get("j", 1)),
                i=int(rec.get("i", 1)),
                k=int(rec.get("k", 0)),
                sense=rec.get("sense", ">="),
                bound=float(rec.get("bound", 0.0)),
                weights=tuple(tuple(w) for w in rec["weights"]) if rec.get("weights") else None,
                cumulative=bool(rec.get("cumulative", False)),
                label=str(rec.get("label", "")),
            ))
        except (DimensionMismatch, ValueError, TypeError) as exc:
            raise DataFormatError(f"restriction record {idx}: {exc}") from None
    return RestrictionSet(
        n=n,
        restrictions=tuple(restrictions),
        shock_labels=tuple(payload.get("shock_labels", ())),
    )


def load_restrictions(path) -> RestrictionSet:
    """Read a restriction file (JSON: n, shock_labels, restriction records)."""
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: {exc}") from None
    return from_dict(payload)


def save_restrictions(rset: RestrictionSet, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_dict(rset), fh, indent=2, sort_keys=True)
        fh.write("\n")

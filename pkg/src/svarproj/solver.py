"""Multistart local solver for smooth constrained programs.

Thin front end over scipy.optimize: SLSQP first, trust-constr as the
fallback when SLSQP stalls outside the feasible set. Every callback
returns (value, gradient); plain functions can be adapted with
with_fd_gradient. The solver itself is deterministic, multistart
randomness is the caller's job (starts are data, not config).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import NonlinearConstraint, minimize

from .errors import DimensionMismatch, DomainError, NoFeasibleStart


@dataclass(frozen=True)
class SolverConfig:
    feas_tol: float = 1e-8
    opt_tol: float = 1e-6
    max_iter: int = 500


@dataclass(frozen=True)
class NlpProblem:
    """max/min objective(x) s.t. eq(x)=0, ineq(x) >= 0, x in R^dimension.

    objective, equalities and inequalities are callables x -> (value, grad).
    """

    dimension: int
    objective: object
    equalities: tuple = ()
    inequalities: tuple = ()
    starts: tuple = ()

    def __post_init__(self):
        starts = tuple(np.asarray(s, dtype=float).ravel() for s in self.starts)
        if not starts:
            raise DimensionMismatch("NlpProblem needs at least one start")
        for s in starts:
            if s.size != self.dimension:
                raise DimensionMismatch(
                    f"start has {s.size} entries, problem dimension is {self.dimension}"
                )
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "equalities", tuple(self.equalities))
        object.__setattr__(self, "inequalities", tuple(self.inequalities))


@dataclass(frozen=True)
class NlpSolution:
    x: np.ndarray
    value: float
    feasibility_violation: float
    converged: bool
    start_index: int
    n_feasible_starts: int = 1
    diagnostics: tuple = field(default=(), repr=False)


class _Memo:
    """Re-evaluation guard: scipy queries fun and jac at the same x."""

    __slots__ = ("_fun", "_x", "_out")

    def __init__(self, fun):
        self._fun = fun
        self._x = None
        self._out = None

    def both(self, x):
        if self._x is None or not np.array_equal(x, self._x):
            self._x = np.array(x, dtype=float, copy=True)
            # explosive trial iterates overflow IRF powers; the resulting
            # non-finite values are rejected by the line search, not reported
            with np.errstate(over="ignore", invalid="ignore"):
                self._out = self._fun(self._x)
        return self._out

    def value(self, x):
        return self.both(x)[0]

    def grad(self, x):
        return self.both(x)[1]


def _stack(funs):
    """Bundle scalar constraints into one vector-valued (value, jac) callable."""

    def call(x):
        vals = np.empty(len(funs))
        jac = np.empty((len(funs), x.size))
        for i, f in enumerate(funs):
            v, g = f(x)
            vals[i] = v
            jac[i] = np.asarray(g, dtype=float).ravel()
        return vals, jac

    return _Memo(call)


def _violation(problem, x) -> float:
    worst = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for f in problem.equalities:
            worst = max(worst, abs(float(f(x)[0])))
        for f in problem.inequalities:
            worst = max(worst, max(0.0, -float(f(x)[0])))
    return worst


def _run_slsqp(fun, x0, eq, ineq, config):
    cons = []
    if eq is not None:
        cons.append({"type": "eq", "fun": eq.value, "jac": eq.grad})
    if ineq is not None:
        cons.append({"type": "ineq", "fun": ineq.value, "jac": ineq.grad})
    return minimize(
        fun, x0, jac=True, method="SLSQP", constraints=cons,
        options={"maxiter": config.max_iter, "ftol": config.opt_tol * 1e-4},
    )


def _run_trust_constr(fun, x0, eq, ineq, config):
    cons = []
    if eq is not None:
        cons.append(NonlinearConstraint(eq.value, 0.0, 0.0, jac=eq.grad))
    if ineq is not None:
        cons.append(NonlinearConstraint(ineq.value, 0.0, np.inf, jac=ineq.grad))
    with warnings.catch_warnings():
        # quasi-Newton updates on locally linear constraints chatter, and
        # active-set degeneracy at ellipsoid/sign corners is routine here
        warnings.filterwarnings("ignore", message="delta_grad == 0.0")
        warnings.filterwarnings("ignore", message="Singular Jacobian matrix")
        return minimize(
            fun, x0, jac=True, method="trust-constr", constraints=cons,
            options={"maxiter": 2 * config.max_iter, "gtol": config.opt_tol,
                     "xtol": 1e-12, "verbose": 0},
        )


def solve(problem: NlpProblem, direction: str = "max",
          config: SolverConfig | None = None) -> NlpSolution:
    """Best feasible local optimum across all starts.

    Each start runs SLSQP and, if the returned point is infeasible, retries
    with trust-constr from the same start. A start counts as feasible when
    the worst constraint residual is within feas_tol. Ties across starts go
    to the lowest start index, so adding starts never changes an already
    winning solution and never worsens the reported optimum.
    """
    if direction not in ("max", "min"):
        raise DomainError(f"direction must be 'max' or 'min', got {direction!r}")
    config = config or SolverConfig()
    sign = -1.0 if direction == "max" else 1.0
    obj = _Memo(problem.objective)

    def fun(x):
        v, g = obj.both(x)
        return sign * float(v), sign * np.asarray(g, dtype=float).ravel()

    eq = _stack(problem.equalities) if problem.equalities else None
    ineq = _stack(problem.inequalities) if problem.inequalities else None

    best = None
    n_feasible = 0
    diagnostics = []
    for s_idx, x0 in enumerate(problem.starts):
        found = None
        for runner, method in ((_run_slsqp, "slsqp"),
                               (_run_trust_constr, "trust-constr")):
            try:
                res = runner(fun, x0, eq, ineq, config)
            except Exception as exc:  # scipy can raise from degenerate subproblems
                diagnostics.append({"start": s_idx, "method": method,
                                    "error": f"{type(exc).__name__}: {exc}"})
                continue
            viol = _violation(problem, res.x)
            with np.errstate(over="ignore", invalid="ignore"):
                res_value = float(problem.objective(res.x)[0])
            diagnostics.append({
                "start": s_idx, "method": method, "success": bool(res.success),
                "message": str(getattr(res, "message", "")),
                "value": res_value,
                "violation": float(viol),
            })
            if viol <= config.feas_tol and np.all(np.isfinite(res.x)):
                found = (np.asarray(res.x, dtype=float), res_value,
                         viol, bool(res.success))
                break
        if found is None:
            continue
        n_feasible += 1
        x_star, value, viol, ok = found
        better = best is None or (value > best[1] if direction == "max"
                                  else value < best[1])
        if better:
            best = (x_star, value, viol, ok, s_idx)

    if best is None:
        raise NoFeasibleStart(
            f"no start reached feasibility within {config.feas_tol:g} "
            f"({len(problem.starts)} starts tried)",
            diagnostics=tuple(diagnostics),
        )
    x_star, value, viol, ok, s_idx = best
    return NlpSolution(
        x=x_star, value=value, feasibility_violation=viol,
        converged=ok and viol <= config.feas_tol, start_index=s_idx,
        n_feasible_starts=n_feasible, diagnostics=tuple(diagnostics),
    )


def with_fd_gradient(fun, step: float = 1e-7):
    """Adapt a plain scalar function to the (value, grad) callback contract.

    Forward differences with per-coordinate step scaling; fine for the cheap
    polynomial maps this package feeds the solver, not for noisy objectives.
    """

    def wrapped(x):
        x = np.asarray(x, dtype=float)
        f0 = float(fun(x))
        g = np.empty(x.size)
        for i in range(x.size):
            h = step * (1.0 + abs(x[i]))
            xp = x.copy()
            xp[i] += h
            g[i] = (float(fun(xp)) - f0) / h
        return f0, g

    return wrapped


def gradient_error(fun, x, step: float = 1e-6) -> float:
    """Worst relative disagreement between fun's gradient and central differences."""
    x = np.asarray(x, dtype=float)
    _, g = fun(x)
    g = np.asarray(g, dtype=float).ravel()
    worst = 0.0
    for i in range(x.size):
        h = step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fd = (float(fun(xp)[0]) - float(fun(xm)[0])) / (2.0 * h)
        scale = max(1.0, abs(g[i]), abs(fd))
        worst = max(worst, abs(g[i] - fd) / scale)
    return worst

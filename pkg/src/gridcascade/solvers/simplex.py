"""Bounded-variable two-phase revised simplex.

Minimises ``c @ x`` subject to ``a_ub @ x <= b_ub``, ``a_eq @ x == b_eq`` and
``lb <= x <= ub`` (entries of the bound vectors may be infinite, variables
with ``-inf/+inf`` bounds are free).

Pricing is Dantzig's rule for speed; after a run of degenerate pivots the
solver falls back to Bland's rule, which guarantees termination, and switches
back once it makes a real step.  Very large instances are routed to scipy's
HiGHS wrapper behind the same interface; the native path is authoritative for
everything the self-tests cover.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

_DUAL_TOL = 1e-9
_PIV_TOL = 1e-10
_STEP_TOL = 1e-11
_BLAND_AFTER = 30
_REFACTOR_EVERY = 100
_MAX_ITER = 100_000

# beyond this size the dense tableau bookkeeping dominates; hand off to HiGHS
_NATIVE_MAX_ROWS = 150
_NATIVE_MAX_COLS = 400


@dataclass
class LpProblem:
    c: np.ndarray
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None


@dataclass
class LpResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    x: np.ndarray | None = None
    objective: float = np.nan
    # row prices ordered [equality rows..., inequality rows...]
    duals: np.ndarray | None = None
    n_iter: int = 0
    backend: str = "native"

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# ---------------------------------------------------------------------------
# problem normalisation
# ---------------------------------------------------------------------------

def _as_2d(a, n: int) -> np.ndarray:
    if a is None:
        return np.zeros((0, n))
    if hasattr(a, "toarray"):  # scipy.sparse, only reaches the native path when small
        return a.toarray().astype(float)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return a


def _as_1d(b) -> np.ndarray:
    if b is None:
        return np.zeros(0)
    return np.atleast_1d(np.asarray(b, dtype=float))


@dataclass
class _Std:
    """Equality standard form: rows of [a_eq; a_ub | I_slack]."""

    a: np.ndarray
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    n_struct: int
    n_eq: int
    field_names: list = field(default_factory=list)


def _standardise(p: LpProblem) -> _Std:
    c = np.asarray(p.c, dtype=float)
    n = c.size
    a_eq = _as_2d(p.a_eq, n)
    a_ub = _as_2d(p.a_ub, n)
    b_eq = _as_1d(p.b_eq)
    b_ub = _as_1d(p.b_ub)
    m_eq, m_ub = a_eq.shape[0], a_ub.shape[0]
    lb = np.full(n, 0.0) if p.lb is None else np.asarray(p.lb, dtype=float).copy()
    ub = np.full(n, np.inf) if p.ub is None else np.asarray(p.ub, dtype=float).copy()

    a = np.zeros((m_eq + m_ub, n + m_ub))
    a[:m_eq, :n] = a_eq
    a[m_eq:, :n] = a_ub
    if m_ub:
        a[m_eq:, n:] = np.eye(m_ub)
    b = np.concatenate([b_eq, b_ub])
    lb_all = np.concatenate([lb, np.zeros(m_ub)])
    ub_all = np.concatenate([ub, np.full(m_ub, np.inf)])
    return _Std(a=a, b=b, lb=lb_all, ub=ub_all, n_struct=n, n_eq=m_eq)


# ---------------------------------------------------------------------------
# core iteration
# ---------------------------------------------------------------------------

class _Simplex:
    def __init__(self, std: _Std):
        self.a = std.a
        self.b = std.b
        self.lb = std.lb
        self.ub = std.ub
        self.m, self.n_real = self.a.shape
        self.n_iter = 0

    def setup(self) -> None:
        m, n = self.m, self.n_real
        # nonbasic start values: finite bound nearest zero, free vars at 0
        xv = np.where(np.isfinite(self.lb), self.lb, 0.0)
        only_ub = ~np.isfinite(self.lb) & np.isfinite(self.ub)
        xv[only_ub] = self.ub[only_ub]
        r = self.b - self.a @ xv
        sigma = np.where(r >= 0.0, 1.0, -1.0)

        # append artificial columns sigma_i * e_i
        art = np.zeros((m, m))
        art[np.arange(m), np.arange(m)] = sigma
        self.a = np.hstack([self.a, art])
        self.lb = np.concatenate([self.lb, np.zeros(m)])
        self.ub = np.concatenate([self.ub, np.full(m, np.inf)])
        self.n_total = n + m
        self.art_cols = np.arange(n, n + m)

        self.basis = self.art_cols.copy()
        self.binv = np.diag(sigma)  # inverse of diag(sigma)
        self.x_basic = np.abs(r)
        # status: 0 at-lb, 1 at-ub, 2 basic, 3 free-at-zero
        self.status = np.zeros(self.n_total, dtype=np.int8)
        self.status[~np.isfinite(self.lb) & ~np.isfinite(self.ub)] = 3
        self.status[only_ub.nonzero()[0]] = 1
        self.status[self.basis] = 2
        self.xv = np.concatenate([xv, np.zeros(m)])
        self.can_enter = np.ones(self.n_total, dtype=bool)

    # -- helpers ------------------------------------------------------------

    def _nonbasic(self) -> np.ndarray:
        return (self.status != 2).nonzero()[0]

    def _refactor(self) -> None:
        bmat = self.a[:, self.basis]
        try:
            self.binv = np.linalg.inv(bmat)
        except np.linalg.LinAlgError:
            # should be unreachable: pivots keep the basis regular
            raise RuntimeError("simplex basis became singular")
        nb = self._nonbasic()
        rhs = self.b - self.a[:, nb] @ self.xv[nb]
        self.x_basic = self.binv @ rhs

    def run(self, cost: np.ndarray) -> str:
        degenerate_streak = 0
        while True:
            if self.n_iter >= _MAX_ITER:
                return "iteration_limit"
            self.n_iter += 1
            if self.n_iter % _REFACTOR_EVERY == 0:
                self._refactor()

            y = cost[self.basis] @ self.binv
            nb = self._nonbasic()
            nb = nb[self.can_enter[nb]]
            d = cost[nb] - y @ self.a[:, nb]
            st = self.status[nb]
            viol = np.zeros(nb.size)
            at_lb = st == 0
            at_ub = st == 1
            free = st == 3
            viol[at_lb] = np.maximum(0.0, -d[at_lb])
            viol[at_ub] = np.maximum(0.0, d[at_ub])
            viol[free] = np.abs(d[free])
            eligible = viol > _DUAL_TOL
            if not eligible.any():
                return "optimal"

            if degenerate_streak >= _BLAND_AFTER:
                j_pos = eligible.nonzero()[0][0]  # lowest index: Bland
            else:
                j_pos = int(np.argmax(viol))
            j = int(nb[j_pos])
            dj = d[j_pos]
            # direction of change of the entering variable
            if self.status[j] == 0:
                t = 1.0
            elif self.status[j] == 1:
                t = -1.0
            else:
                t = 1.0 if dj < 0 else -1.0

            alpha = self.binv @ self.a[:, j]
            step = np.inf
            leaving_pos = -1  # -1: entering flips to its other bound
            span = self.ub[j] - self.lb[j]
            if np.isfinite(span):
                step = span
            eff = t * alpha
            basic_lb = self.lb[self.basis]
            basic_ub = self.ub[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                down = np.where(eff > _PIV_TOL, (self.x_basic - basic_lb) / eff, np.inf)
                up = np.where(eff < -_PIV_TOL, (basic_ub - self.x_basic) / (-eff), np.inf)
            limits = np.minimum(down, up)
            limits = np.maximum(limits, 0.0)
            min_basic = limits.min() if limits.size else np.inf
            if min_basic < step:
                step = min_basic
                ties = (limits <= step + _STEP_TOL).nonzero()[0]
                # deterministic + anti-cycling: leave the lowest variable index
                leaving_pos = int(ties[np.argmin(self.basis[ties])])
            if not np.isfinite(step):
                return "unbounded"

            degenerate_streak = degenerate_streak + 1 if step < _STEP_TOL else 0

            self.x_basic = self.x_basic - step * eff
            if leaving_pos < 0:
                # bound flip, basis unchanged
                self.xv[j] = self.xv[j] + t * step
                self.status[j] = 1 if self.status[j] == 0 else 0
                continue

            leave = int(self.basis[leaving_pos])
            enter_value = self.xv[j] + t * step
            leave_value = self.x_basic[leaving_pos]
            # classify the leaving variable at whichever bound it hit
            if np.isfinite(self.lb[leave]) and abs(leave_value - self.lb[leave]) <= abs(
                leave_value - self.ub[leave]
            ):
                self.status[leave] = 0
                self.xv[leave] = self.lb[leave]
            elif np.isfinite(self.ub[leave]):
                self.status[leave] = 1
                self.xv[leave] = self.ub[leave]
            else:
                self.status[leave] = 3
                self.xv[leave] = 0.0

            self.basis[leaving_pos] = j
            self.status[j] = 2
            # product-form update of binv
            piv = alpha[leaving_pos]
            row = self.binv[leaving_pos, :] / piv
            self.binv = self.binv - np.outer(alpha, row)
            self.binv[leaving_pos, :] = row
            self.x_basic[leaving_pos] = enter_value

    def solution(self) -> np.ndarray:
        x = self.xv.copy()
        x[self.basis] = self.x_basic
        return x


def _solve_native(p: LpProblem) -> LpResult:
    std = _standardise(p)
    c = np.asarray(p.c, dtype=float)
    n = std.n_struct
    if std.a.shape[0] == 0:
        # pure box problem
        x = np.where(c > 0, std.lb[:n], np.where(c < 0, std.ub[:n], 0.0))
        zero_c = c == 0
        x[zero_c] = np.clip(0.0, std.lb[:n][zero_c], std.ub[:n][zero_c])
        if not np.all(np.isfinite(x)):
            return LpResult(status="unbounded")
        return LpResult(status="optimal", x=x, objective=float(c @ x),
                        duals=np.zeros(0), n_iter=0)

    sx = _Simplex(std)
    sx.setup()

    cost1 = np.zeros(sx.n_total)
    cost1[sx.art_cols] = 1.0
    status = sx.run(cost1)
    if status != "optimal":
        return LpResult(status="iteration_limit", n_iter=sx.n_iter)
    phase1_obj = float(cost1[sx.basis] @ sx.x_basic)
    feas_tol = 1e-9 * (1.0 + np.max(np.abs(std.b), initial=0.0))
    if phase1_obj > max(feas_tol, 1e-9):
        return LpResult(status="infeasible", n_iter=sx.n_iter)

    # lock artificials out of phase 2
    sx.ub[sx.art_cols] = 0.0
    sx.can_enter[sx.art_cols] = False
    cost2 = np.zeros(sx.n_total)
    cost2[:n] = c
    status = sx.run(cost2)
    if status != "optimal":
        return LpResult(status=status, n_iter=sx.n_iter)

    x_all = sx.solution()
    x = x_all[:n]
    finite_lb = np.isfinite(std.lb[:n])
    finite_ub = np.isfinite(std.ub[:n])
    x[finite_lb] = np.maximum(x[finite_lb], std.lb[:n][finite_lb])
    x[finite_ub] = np.minimum(x[finite_ub], std.ub[:n][finite_ub])
    duals = cost2[sx.basis] @ sx.binv
    return LpResult(
        status="optimal",
        x=x,
        objective=float(c @ x),
        duals=duals,
        n_iter=sx.n_iter,
    )


# ---------------------------------------------------------------------------
# HiGHS fallback for very large instances
# ---------------------------------------------------------------------------

def _solve_highs(p: LpProblem) -> LpResult:
    from scipy.optimize import linprog

    c = np.asarray(p.c, dtype=float)
    n = c.size
    lb = np.full(n, 0.0) if p.lb is None else np.asarray(p.lb, dtype=float)
    ub = np.full(n, np.inf) if p.ub is None else np.asarray(p.ub, dtype=float)
    # an (n, 2) array takes linprog's fast validation path; lists of tuples
    # cost more than the solve itself on small instances
    bounds = np.column_stack([lb, ub])
    res = linprog(
        c,
        A_ub=p.a_ub,
        b_ub=p.b_ub,
        A_eq=p.a_eq,
        b_eq=p.b_eq,
        bounds=bounds,
        method="highs",
    )
    status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, "iteration_limit")
    if status != "optimal":
        return LpResult(status=status, backend="highs")
    duals = None
    if res.eqlin is not None and res.ineqlin is not None:
        duals = np.concatenate([np.atleast_1d(res.eqlin.marginals),
                                np.atleast_1d(res.ineqlin.marginals)])
    return LpResult(
        status="optimal",
        x=np.asarray(res.x, dtype=float),
        objective=float(res.fun),
        duals=duals,
        n_iter=int(res.nit),
        backend="highs",
    )


def _n_rows(a) -> int:
    if a is None:
        return 0
    if hasattr(a, "shape") and len(a.shape) == 2:
        return int(a.shape[0])
    return np.atleast_2d(a).shape[0]


def solve_lp(problem: LpProblem, backend: str = "auto") -> LpResult:
    """Solve an LP.  ``backend`` is ``auto``, ``native`` or ``highs``."""
    if problem.lb is not None and problem.ub is not None:
        lb = np.asarray(problem.lb, dtype=float)
        ub = np.asarray(problem.ub, dtype=float)
        if np.any(lb > ub):
            return LpResult(status="infeasible")
    if backend == "auto":
        n = np.asarray(problem.c).size
        m = _n_rows(problem.a_ub) + _n_rows(problem.a_eq)
        backend = "native" if (m <= _NATIVE_MAX_ROWS and n <= _NATIVE_MAX_COLS) else "highs"
    if backend == "native":
        return _solve_native(problem)
    if backend == "highs":
        return _solve_highs(problem)
    raise ValueError(f"unknown LP backend {backend!r}")

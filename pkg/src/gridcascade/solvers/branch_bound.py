"""Branch-and-bound integer programming on top of the LP relaxation.

Depth-first search with a deterministic node order: always branch on the
lowest-index fractional variable and explore the child nearest its fractional
value first.  The node budget exists for the degenerate subset-sum style
instances the island detector can produce at large scale; every desk-size
problem finishes well inside it, the status reports when it was hit, and the
incumbent found so far is still returned.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .simplex import LpProblem, LpResult, solve_lp

# a node relaxation hook returns (status, x, objective) for given box bounds
NodeSolver = Callable[[np.ndarray, np.ndarray], tuple[str, np.ndarray | None, float]]

log = logging.getLogger(__name__)

_INT_TOL = 1e-6
_OBJ_TOL = 1e-9


@dataclass
class IlpProblem:
    c: np.ndarray
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    integer: np.ndarray | None = None  # bool mask, default all integer


@dataclass
class IlpResult:
    status: str  # optimal | infeasible | budget_exhausted
    x: np.ndarray | None = None
    objective: float = np.nan
    n_nodes: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _check_integral_feasible(p: IlpProblem, x: np.ndarray) -> bool:
    tol = 1e-7
    if p.a_ub is not None:
        if np.any(np.atleast_2d(p.a_ub) @ x > np.atleast_1d(p.b_ub) + tol):
            return False
    if p.a_eq is not None:
        if np.any(np.abs(np.atleast_2d(p.a_eq) @ x - np.atleast_1d(p.b_eq)) > tol):
            return False
    return True


def solve_ilp(
    problem: IlpProblem,
    node_budget: int = 200_000,
    lp_backend: str = "auto",
    x0: np.ndarray | None = None,
    node_solver: NodeSolver | None = None,
) -> IlpResult:
    """Solve the ILP; ``x0``, when given and feasible, seeds the incumbent.

    A seeded incumbent never changes the optimum, it only tightens pruning
    from the start and guarantees that a budget-exhausted run can still hand
    back something at least as good as the seed.  ``node_solver`` replaces
    the generic LP call per node for callers whose relaxation has a cheap
    closed form; it must return the exact relaxation optimum.
    """
    c = np.asarray(problem.c, dtype=float)
    n = c.size
    integer = (
        np.ones(n, dtype=bool)
        if problem.integer is None
        else np.asarray(problem.integer, dtype=bool)
    )
    lb0 = np.zeros(n) if problem.lb is None else np.asarray(problem.lb, dtype=float)
    ub0 = np.ones(n) if problem.ub is None else np.asarray(problem.ub, dtype=float)

    if lp_backend == "auto":
        # the native simplex needs on the order of one bound flip per column,
        # so beyond a few dozen columns HiGHS's flat per-call cost wins
        lp_backend = "native" if n <= 32 else "highs"

    # When every objective coefficient on integer variables is itself an
    # integer (and continuous variables carry none), integral solutions have
    # integer objectives, so a node must beat the incumbent by a whole unit
    # to be worth exploring.
    integral_obj = bool(
        np.all(c[~integer] == 0.0) and np.all(c[integer] == np.round(c[integer]))
    )

    best_x: np.ndarray | None = None
    best_obj = np.inf
    n_nodes = 0
    saw_budget = False

    if x0 is not None:
        xs = np.asarray(x0, dtype=float).copy()
        xs[integer] = np.round(xs[integer])
        in_box = np.all(xs >= lb0 - _INT_TOL) and np.all(xs <= ub0 + _INT_TOL)
        np.clip(xs, lb0, ub0, out=xs)
        if in_box and _check_integral_feasible(problem, xs):
            best_x = xs
            best_obj = float(c @ xs)

    stack: list[tuple[np.ndarray, np.ndarray]] = [(lb0.copy(), ub0.copy())]
    while stack:
        if n_nodes >= node_budget:
            saw_budget = True
            log.warning("branch-and-bound node budget %d exhausted", node_budget)
            break
        lb, ub = stack.pop()
        n_nodes += 1
        if node_solver is not None:
            n_status, n_x, n_obj = node_solver(lb, ub)
            lp = LpResult(status=n_status, x=n_x, objective=n_obj)
        else:
            lp = solve_lp(
                LpProblem(c=c, a_ub=problem.a_ub, b_ub=problem.b_ub,
                          a_eq=problem.a_eq, b_eq=problem.b_eq, lb=lb, ub=ub),
                backend=lp_backend,
            )
        if lp.status != "optimal":
            continue
        prune_at = best_obj - (1.0 - 1e-7 if integral_obj else _OBJ_TOL)
        if lp.objective >= prune_at:
            continue
        x = lp.x
        frac = np.abs(x - np.round(x))
        frac[~integer] = 0.0
        fractional = (frac > _INT_TOL).nonzero()[0]
        if fractional.size == 0:
            xi = x.copy()
            xi[integer] = np.round(xi[integer])
            np.clip(xi, lb, ub, out=xi)
            if _check_integral_feasible(problem, xi):
                obj = float(c @ xi)
                if obj < best_obj - _OBJ_TOL:
                    best_obj = obj
                    best_x = xi
            continue
        k = int(fractional[0])
        lo = np.floor(x[k])
        lb_hi = lb.copy()
        lb_hi[k] = lo + 1.0
        ub_lo = ub.copy()
        ub_lo[k] = lo
        # dive toward the relaxation first: explore the child nearest the
        # fractional value so an incumbent shows up early, which is what the
        # whole-unit pruning above feeds on
        if x[k] - lo >= 0.5:
            stack.append((lb, ub_lo))
            stack.append((lb_hi, ub))
        else:
            stack.append((lb_hi, ub))
            stack.append((lb, ub_lo))

    if best_x is None:
        return IlpResult(status="budget_exhausted" if saw_budget else "infeasible",
                         n_nodes=n_nodes)
    status = "budget_exhausted" if saw_budget else "optimal"
    return IlpResult(status=status, x=best_x, objective=best_obj, n_nodes=n_nodes)

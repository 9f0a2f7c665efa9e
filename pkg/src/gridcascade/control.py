"""Preventive overload control.

Builds and solves the redispatch program a control centre would run after
estimating the topology: subject to its believed admittance, shrink
generation and load (never increase, never below zero) so that measurable
line flows return inside their ratings, trading residual overload against
shed load through a fixed penalty weight.

The program is always feasible: overload slack variables absorb whatever
cannot be fixed, and the all-zero action is feasible whenever nothing
measurable is overloaded, which lets callers skip the solve entirely in the
common quiet case.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .gridmodel import Grid
from .solvers import LpProblem, LpResult, solve_lp

log = logging.getLogger(__name__)

OVERLOAD_WEIGHT_DEFAULT = 100.0
_EPS_ACT = 1e-12


@dataclass
class ControlProblem:
    """Controller view of one tier: believed grid plus measured loadings.

    All line endpoint indices are positions into ``buses``.  Buses outside
    the measurable set take zero ``gen_reducible``/``load_sheddable`` so the
    LP cannot command them.
    """

    buses: np.ndarray
    b_hat: np.ndarray | sparse.spmatrix
    ref_positions: list[int]
    line_ids: np.ndarray
    line_u: np.ndarray
    line_v: np.ndarray
    line_x: np.ndarray
    line_flow: np.ndarray
    line_rating: np.ndarray
    gen_reducible: np.ndarray
    load_sheddable: np.ndarray
    overload_weight: float = OVERLOAD_WEIGHT_DEFAULT

    @property
    def n_bus(self) -> int:
        return self.buses.size

    @property
    def n_line(self) -> int:
        return self.line_ids.size

    def has_overload(self) -> bool:
        return bool(np.any(np.abs(self.line_flow) > self.line_rating + _EPS_ACT))


@dataclass
class ControlAction:
    gen_delta: dict[int, float] = field(default_factory=dict)
    load_delta: dict[int, float] = field(default_factory=dict)
    overload_residual: dict[int, float] = field(default_factory=dict)
    objective: float = 0.0
    solved: bool = True
    flagged: str = ""

    @property
    def is_noop(self) -> bool:
        return not self.gen_delta and not self.load_delta

    @property
    def total_load_shed(self) -> float:
        return -sum(self.load_delta.values())


def build_control_lp(problem: ControlProblem) -> LpProblem:
    """Assemble the redispatch LP.

    Columns are [angle changes | per-line overload slack | generation
    changes | load changes].  Balance ties injection changes to angle
    changes through the believed admittance; two rows per measurable line
    keep its post-action flow inside rating plus slack.  Matrices are built
    sparse so the full-system case stays affordable.
    """
    n, m = problem.n_bus, problem.n_line
    width = 3 * n + m
    col_ov = n
    col_pg = n + m
    col_pl = 2 * n + m

    bh = sparse.coo_matrix(problem.b_hat)
    eq_rows = np.concatenate([bh.row, np.arange(n), np.arange(n)])
    eq_cols = np.concatenate([bh.col, col_pg + np.arange(n), col_pl + np.arange(n)])
    eq_vals = np.concatenate([bh.data, -np.ones(n), np.ones(n)])
    a_eq = sparse.coo_matrix((eq_vals, (eq_rows, eq_cols)), shape=(n, width)).tocsr()
    b_eq = np.zeros(n)

    w = 1.0 / problem.line_x if m else problem.line_x
    rows, cols, vals = [], [], []
    for sign, base in ((1.0, 0), (-1.0, m)):
        r = base + np.arange(m)
        rows.extend([r, r, r])
        cols.extend([problem.line_u, problem.line_v, col_ov + np.arange(m)])
        vals.extend([sign * w, -sign * w, -np.ones(m)])
    if m:
        a_ub = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(2 * m, width),
        ).tocsr()
        b_ub = np.concatenate(
            [problem.line_rating - problem.line_flow,
             problem.line_rating + problem.line_flow]
        )
    else:
        a_ub, b_ub = None, None

    lb = np.concatenate(
        [np.full(n, -np.inf), np.zeros(m), -problem.gen_reducible,
         -problem.load_sheddable]
    )
    ub = np.concatenate([np.full(n, np.inf), np.full(m, np.inf), np.zeros(2 * n)])
    for r in problem.ref_positions:
        lb[r] = ub[r] = 0.0

    c = np.zeros(width)
    c[col_ov:col_pg] = problem.overload_weight
    c[col_pl:] = -1.0
    return LpProblem(c=c, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=b_eq, lb=lb, ub=ub)


def solve_preventive_control(
    problem: ControlProblem, backend: str = "auto"
) -> ControlAction:
    """Redispatch decision for one tier.

    Returns the no-op action without solving when nothing measurable is
    overloaded (zero is then feasible and the objective cannot go below
    zero), and also falls back to the no-op, flagged, when the LP solve
    fails numerically.
    """
    if problem.n_line == 0 or not problem.has_overload():
        return ControlAction(flagged="no measurable overload")
    lp = build_control_lp(problem)
    res: LpResult = solve_lp(lp, backend=backend)
    if not res.optimal or res.x is None:
        log.warning("control LP returned %s; taking no action", res.status)
        return ControlAction(solved=False, flagged=f"lp {res.status}")

    n, m = problem.n_bus, problem.n_line
    ov = res.x[n: n + m]
    dg = res.x[n + m: 2 * n + m]
    dl = res.x[2 * n + m:]
    dg = np.clip(dg, -problem.gen_reducible, 0.0)
    dl = np.clip(dl, -problem.load_sheddable, 0.0)
    gen_delta = {
        int(problem.buses[i]): float(dg[i]) for i in np.nonzero(dg < -_EPS_ACT)[0]
    }
    load_delta = {
        int(problem.buses[i]): float(dl[i]) for i in np.nonzero(dl < -_EPS_ACT)[0]
    }
    overload_residual = {
        int(problem.line_ids[j]): float(ov[j])
        for j in np.nonzero(ov > 1e-9)[0]
    }
    return ControlAction(
        gen_delta=gen_delta,
        load_delta=load_delta,
        overload_residual=overload_residual,
        objective=float(res.objective),
        solved=True,
    )


def apply_control(grid: Grid, action: ControlAction) -> None:
    """Apply nonpositive redispatch deltas, clamping at zero."""
    for bus, d in action.gen_delta.items():
        grid.gen_p[bus] = max(0.0, grid.gen_p[bus] + d)
    for bus, d in action.load_delta.items():
        grid.load_p[bus] = max(0.0, grid.load_p[bus] + d)

"""Line-outage localisation inside a detected island.

Second stage of topology estimation.  Given a detected member set, the
island's pre-outage state is reconstructed from the previous-tier estimate:
internal lines not observed open are assumed closed, and every boundary line
is replaced by a fictitious injection equal to the flow it used to carry into
its island-side bus.  The change in measured line flows is then a sparse
combination of per-line signature columns; a constrained lasso with the
observed-closed columns pinned to zero recovers which unobserved lines are
out.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .island_detect import PotentialParent, RequiredInjections
from .solvers import LassoProblem, factor_pinned, solve_constrained_lasso

log = logging.getLogger(__name__)

LAMBDA_SCALE_DEFAULT = 1e-3
LAMBDA_GRID_SCALES = (1e-2, 1e-3, 1e-4)
SUPPORT_TOL_FLOOR = 1e-4
SUPPORT_TOL_FRACTION = 0.05


@dataclass
class IslandEstimate:
    """Pre/post-outage hypothesis for one detected island.

    Lines are the parent's internal lines not observed open, all assumed
    closed in ``b``; ``duos`` holds the boundary replacement injections that
    make ``p_pre`` a self-contained pre-outage state for the island alone.
    """

    buses: np.ndarray                 # sorted bus indices
    line_ids: np.ndarray
    line_from: np.ndarray             # local positions
    line_to: np.ndarray
    line_x: np.ndarray
    b: np.ndarray                     # dense admittance, every listed line closed
    p_pre: np.ndarray
    p_post: np.ndarray
    p_tilde: np.ndarray
    duos: dict[int, float]
    ref_pos: int

    @property
    def n_bus(self) -> int:
        return self.buses.size

    @property
    def n_line(self) -> int:
        return self.line_ids.size

    def position(self, bus: int) -> int:
        return int(np.searchsorted(self.buses, bus))


@dataclass
class LassoInputs:
    y: np.ndarray
    a: np.ndarray                     # rows = measured lines, cols = island lines
    fixed_zero: np.ndarray            # per-column, observed-closed lines
    measured_line_ids: np.ndarray
    column_line_ids: np.ndarray


@dataclass
class OutageVector:
    s: np.ndarray                     # aligned with column_line_ids
    support: tuple[int, ...]
    converged: bool
    lam: float
    tol: float
    notes: list[str] = field(default_factory=list)


def build_island_admittance_with_duos(
    parent: PotentialParent,
    required: RequiredInjections,
    island_buses: frozenset[int],
    x_of: np.ndarray,
) -> IslandEstimate:
    """Assemble the all-lines-closed admittance and the duo-corrected states.

    ``x_of`` maps global line ids to reactances.  The pre-outage injection of
    a boundary bus is the parent prior plus the previous flow into it on each
    severed tie, so the island's pre-outage flows can be reproduced without
    the rest of the parent.
    """
    buses = np.array(sorted(island_buses), dtype=int)
    pos = {int(b): i for i, b in enumerate(buses)}
    k = buses.size

    lids, lfrom, lto, lx = [], [], [], []
    for lid, u, v in parent.lines:
        if u in pos and v in pos:
            lids.append(lid)
            lfrom.append(pos[u])
            lto.append(pos[v])
            lx.append(float(x_of[lid]))
    line_ids = np.array(lids, dtype=int)
    line_from = np.array(lfrom, dtype=int)
    line_to = np.array(lto, dtype=int)
    line_x = np.array(lx)

    b = np.zeros((k, k))
    w = 1.0 / line_x if line_x.size else line_x
    np.add.at(b, (line_from, line_from), w)
    np.add.at(b, (line_to, line_to), w)
    np.add.at(b, (line_from, line_to), -w)
    np.add.at(b, (line_to, line_from), -w)

    duos: dict[int, float] = {}
    for lid, u, v in parent.prior_lines:
        u_in, v_in = u in pos, v in pos
        if u_in == v_in:
            continue
        flow = parent.flows_prior.get(lid, 0.0)
        inside = v if v_in else u
        into = flow if v_in else -flow
        duos[inside] = duos.get(inside, 0.0) + into

    prior_p = np.array(
        [parent.gen_prior.get(int(b_), 0.0) - parent.load_prior.get(int(b_), 0.0)
         for b_ in buses]
    )
    p_pre = prior_p.copy()
    for bus, inj in duos.items():
        p_pre[pos[bus]] += inj
    p_post = np.array([required.p.get(int(b_), 0.0) for b_ in buses])

    ref_candidates = [b_ for b_ in buses if required.gen.get(int(b_), 0.0) > 0.0]
    ref_bus = int(ref_candidates[0]) if ref_candidates else int(buses[0])
    return IslandEstimate(
        buses=buses,
        line_ids=line_ids,
        line_from=line_from,
        line_to=line_to,
        line_x=line_x,
        b=b,
        p_pre=p_pre,
        p_post=p_post,
        p_tilde=p_post - p_pre,
        duos=duos,
        ref_pos=pos[ref_bus],
    )


def _incidence_local(est: IslandEstimate) -> np.ndarray:
    m = np.zeros((est.n_bus, est.n_line))
    cols = np.arange(est.n_line)
    m[est.line_from, cols] = 1.0
    m[est.line_to, cols] = -1.0
    return m


def compute_lasso_inputs(
    est: IslandEstimate, measured_flows: dict[int, float]
) -> LassoInputs | None:
    """Residual flow changes and per-line signature columns.

    Returns None when no internal line has a flow measurement; the caller
    should then fall back to the assumed-closed admittance unchanged.
    """
    measured_ids = sorted(set(measured_flows) & set(est.line_ids.tolist()))
    if not measured_ids:
        return None
    col_of = {int(l): j for j, l in enumerate(est.line_ids)}
    rows = np.array([col_of[l] for l in measured_ids], dtype=int)

    solve = factor_pinned(est.b, [est.ref_pos])
    m_all = _incidence_local(est)
    x_cols = solve(m_all)                       # B^{-1} M
    w_tilde = solve(est.p_tilde)
    theta_pre = solve(est.p_pre)

    du = est.line_from[rows]
    dv = est.line_to[rows]
    dx = est.line_x[rows]
    flow_pre = (theta_pre[du] - theta_pre[dv]) / dx
    c_ptilde = (w_tilde[du] - w_tilde[dv]) / dx
    flow_now = np.array([measured_flows[l] for l in measured_ids])
    y = (flow_now - flow_pre) - c_ptilde

    a = (x_cols[du, :] - x_cols[dv, :]) / dx[:, None]
    fixed = np.isin(est.line_ids, np.array(measured_ids, dtype=int))
    return LassoInputs(
        y=y,
        a=a,
        fixed_zero=fixed,
        measured_line_ids=np.array(measured_ids, dtype=int),
        column_line_ids=est.line_ids.copy(),
    )


def default_support_tol(s: np.ndarray) -> float:
    peak = float(np.max(np.abs(s))) if s.size else 0.0
    return max(SUPPORT_TOL_FRACTION * peak, SUPPORT_TOL_FLOOR)


def detect_line_outages(
    inputs: LassoInputs,
    lam: float | None = None,
    tol: float | None = None,
    use_lambda_grid: bool = False,
) -> OutageVector:
    """Sparse recovery of which assumed-closed lines are actually out.

    The default penalty weight is 1e-3 times the peak column correlation;
    with ``use_lambda_grid`` the 1e-2/1e-3/1e-4 multiples are all fitted and
    the largest weight whose residual is within 5% of the best one wins,
    preferring the sparsest consistent answer.
    """
    notes: list[str] = []
    free = ~inputs.fixed_zero
    corr = float(np.max(np.abs(inputs.a[:, free].T @ inputs.y))) if free.any() else 0.0
    if corr <= 0.0:
        s = np.zeros(inputs.a.shape[1])
        return OutageVector(s=s, support=(), converged=True,
                            lam=lam or 0.0, tol=tol or SUPPORT_TOL_FLOOR, notes=notes)

    def fit(l: float):
        return solve_constrained_lasso(
            LassoProblem(a=inputs.a, y=inputs.y, lam=l, fixed_zero=inputs.fixed_zero)
        )

    if lam is not None:
        result = fit(lam)
        chosen_lam = lam
    elif use_lambda_grid:
        fits = [(scale * corr, fit(scale * corr)) for scale in LAMBDA_GRID_SCALES]
        best = min(r.residual_norm for _, r in fits)
        chosen_lam, result = max(
            (pair for pair in fits if pair[1].residual_norm <= 1.05 * best + 1e-12),
            key=lambda pair: pair[0],
        )
    else:
        chosen_lam = LAMBDA_SCALE_DEFAULT * corr
        result = fit(chosen_lam)

    if not result.converged:
        notes.append("lasso hit sweep budget; using last iterate")
    s = result.s
    tol_val = default_support_tol(s[free]) if tol is None else tol
    support_mask = (np.abs(s) > tol_val) & free
    bad = (np.abs(s) > tol_val) & inputs.fixed_zero
    if bad.any():
        culprits = inputs.column_line_ids[bad].tolist()
        log.error("outage signal on observed-closed lines %s; dropping", culprits)
        notes.append(f"contradiction on observed-closed lines {culprits}")
    support = tuple(int(l) for l in inputs.column_line_ids[support_mask])
    return OutageVector(
        s=s, support=support, converged=result.converged,
        lam=chosen_lam, tol=tol_val, notes=notes,
    )


def assemble_estimated_admittance(
    est: IslandEstimate, support: tuple[int, ...]
) -> np.ndarray:
    """Remove the detected outages from the all-closed admittance."""
    b_hat = est.b.copy()
    out = set(support)
    for j, lid in enumerate(est.line_ids):
        if int(lid) in out:
            u, v, w = est.line_from[j], est.line_to[j], 1.0 / est.line_x[j]
            b_hat[u, u] -= w
            b_hat[v, v] -= w
            b_hat[u, v] += w
            b_hat[v, u] += w
    return b_hat


def detect_via_angles(
    est: IslandEstimate,
    theta_tilde_me: dict[int, float],
    lam: float | None = None,
    tol: float | None = None,
    fixed_zero_ids: set[int] | None = None,
) -> OutageVector:
    """Angle-residual variant of the signature regression, for cross-checks.

    ``theta_tilde_me`` holds measured angle deviations (post minus pre) per
    bus, in the island reference convention.  The rows of the regression are
    measured buses instead of measured lines; the outage vector solved for
    is the same.
    """
    measured = sorted(b for b in theta_tilde_me if b in set(est.buses.tolist()))
    if not measured:
        raise ValueError("no measured angles inside the island")
    rows = np.array([est.position(b) for b in measured], dtype=int)
    solve = factor_pinned(est.b, [est.ref_pos])
    m_all = _incidence_local(est)
    x_cols = solve(m_all)
    w_tilde = solve(est.p_tilde)
    theta_now = np.array([theta_tilde_me[b] for b in measured])
    y = theta_now - w_tilde[rows]
    a = x_cols[rows, :]
    fixed = (
        np.isin(est.line_ids, np.array(sorted(fixed_zero_ids), dtype=int))
        if fixed_zero_ids
        else np.zeros(est.n_line, dtype=bool)
    )
    inputs = LassoInputs(
        y=y, a=a, fixed_zero=fixed,
        measured_line_ids=np.array([], dtype=int),
        column_line_ids=est.line_ids.copy(),
    )
    return detect_line_outages(inputs, lam=lam, tol=tol)

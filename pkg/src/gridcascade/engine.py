"""Quasi-steady-state cascade engine.

Drives the coupled simulation: an initial bus outage splits the grid,
islands shed proportionally and drift to distinct frequencies, flows are
re-solved, the monitoring layer takes a partial snapshot, the topology
estimator and (optionally) preventive control run, overloaded lines trip,
and communication failures propagate.  One pass of that sequence is a tier;
the cascade ends when a tier trips nothing.

The true grid state and the control centre's belief about it are kept
strictly separate: everything the estimator and controller see comes from
the measurement snapshot and the running :class:`SystemEstimate`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .caseio import ExperimentConfig, apply_rating_fallback, parse_case, to_grid
from .control import (
    ControlAction,
    ControlProblem,
    apply_control,
    solve_preventive_control,
)
from .cyber import (
    CyberNetwork,
    MeasurementSnapshot,
    build_scada,
    extract_snapshot,
    propagate_comm_failures,
)
from .gridmodel import (
    FlowState,
    Grid,
    connected_components,
    reference_bus,
    solve_dc_power_flow,
)
from .island_detect import (
    DetectionResult,
    EstimatedIsland,
    SystemEstimate,
    bounds_for_group,
    construct_potential_parent,
    detect_island,
    group_by_frequency,
    predict_required_injections,
    strengthen_bounds_with_flows,
)
from .line_outage import (
    build_island_admittance_with_duos,
    compute_lasso_inputs,
    detect_line_outages,
)
from .solvers import solve_linear_system

log = logging.getLogger(__name__)

F_NOMINAL = 60.0
FREQ_SENSITIVITY = 0.05
FREQ_STEP = 0.01
TIER_CAP = 50
_EPS_DIV = 1e-9
_EPS_ZERO = 1e-12
_TRIP_REL_TOL = 1e-9


@dataclass
class EngineParams:
    f_nominal: float = F_NOMINAL
    freq_sensitivity: float = FREQ_SENSITIVITY
    freq_step: float = FREQ_STEP
    balance_epsilon: float = 1e-10
    balance_epsilon_noisy: float = 1e-6
    tier_cap: int = TIER_CAP
    max_solutions: int = 25
    ilp_node_budget: int = 1200
    lasso_lambda: float | None = None
    lasso_tol: float | None = None
    lasso_lambda_grid: bool = False
    overload_weight: float = 100.0
    flow_noise_amplitude: float = 0.0

    @property
    def effective_epsilon(self) -> float:
        if self.flow_noise_amplitude > 0.0:
            return self.balance_epsilon_noisy
        return self.balance_epsilon


@dataclass
class IslandState:
    label: int
    buses: np.ndarray
    imbalance: float          # pre-shedding, signed
    gen_ratio: float
    load_ratio: float
    blacked_out: bool
    frequency: float = math.nan
    ref_bus: int = -1


@dataclass
class IslandReport:
    """Scoring record for one true island at one tier."""

    buses: frozenset[int]
    stratum: str              # "high" | "low" | "unobserved"
    matched: bool
    matched_nonzero: bool


@dataclass
class LineReport:
    """Outage-localisation record for one detected island at one tier."""

    true_out: frozenset[int]
    detected: frozenset[int]
    unobserved_closed: frozenset[int]


@dataclass
class TierRecord:
    tier: int
    island_sets: list[frozenset[int]]
    island_frequencies: list[float]
    islands_detected: int | None
    island_reports: list[IslandReport]
    line_reports: list[LineReport]
    load_served: float
    tripped: tuple[int, ...]
    estimation_ran: bool
    control_load_shed: float = 0.0
    blackouts: int = 0

    @property
    def islands_true(self) -> int:
        return len(self.island_sets)


@dataclass
class CascadeMetrics:
    tiers: list[TierRecord]
    final_load_served: float
    hit_tier_cap: bool
    initial_failed_buses: tuple[int, ...]

    @property
    def n_tiers(self) -> int:
        return len(self.tiers)


@dataclass
class CascadeState:
    grid: Grid
    cyber: CyberNetwork
    mode: str
    params: EngineParams
    rng: np.random.Generator
    initial_load: float
    initial_gen: np.ndarray
    tier: int = 1
    islands: list[IslandState] = field(default_factory=list)
    flow: FlowState | None = None
    frequencies: np.ndarray | None = None
    snapshot: MeasurementSnapshot | None = None
    estimate: SystemEstimate | None = None
    records: list[TierRecord] = field(default_factory=list)
    last_action: ControlAction | None = None
    # (group, parent) signatures whose membership search already blew its
    # node budget; identical retries are skipped on later tiers
    stuck_groups: set = field(default_factory=set)


# ---------------------------------------------------------------------------
# primitive steps
# ---------------------------------------------------------------------------

def proportional_shed(
    gen: np.ndarray, load: np.ndarray, island_buses: np.ndarray
) -> tuple[float, float]:
    """Scale the surplus side of an island down to balance, in place.

    Returns the (generation, load) ratios applied; exactly one is below one
    whenever the island was imbalanced.
    """
    sg = float(gen[island_buses].sum())
    sl = float(load[island_buses].sum())
    if sg <= _EPS_ZERO and sl <= _EPS_ZERO:
        return 1.0, 1.0
    if sg > sl:
        r = sl / sg
        gen[island_buses] *= r
        return r, 1.0
    if sl > sg:
        r = sg / sl
        load[island_buses] *= r
        return 1.0, r
    return 1.0, 1.0


def assign_frequencies(
    islands: list[IslandState], params: EngineParams
) -> dict[int, float]:
    """Per-island frequency from the pre-shedding imbalance.

    Surplus islands drift high, deficit islands low; coincidentally equal
    values are bumped upward in label order until every pair differs by at
    least one step, so frequency grouping stays unambiguous.
    """
    out: dict[int, float] = {}
    assigned: list[float] = []
    for isl in sorted(islands, key=lambda i: i.label):
        f = params.f_nominal * (1.0 + params.freq_sensitivity * isl.imbalance)
        while any(abs(f - g) < params.freq_step - 1e-12 for g in assigned):
            f += params.freq_step
        assigned.append(f)
        out[isl.label] = f
    return out


def trip_overloaded(flow: FlowState, grid: Grid) -> list[int]:
    """Open every active line strictly above its rating.  Mutates the grid.

    A line exactly at its rating stays in service.  The comparison carries a
    relative slack because the controller's optimum lands flows exactly on
    the rating; without it, solver rounding at the 1e-15 level would turn
    the boundary rule into a coin flip.
    """
    active = grid.active_lines()
    slack = _TRIP_REL_TOL * np.maximum(grid.rating, 1.0)
    over = np.abs(flow.flow) > grid.rating + slack
    tripped = sorted(int(k) for k in np.nonzero(active & over)[0])
    for k in tripped:
        grid.line_closed[k] = False
    return tripped


def total_load_served(state: CascadeState) -> float:
    if state.initial_load <= _EPS_ZERO:
        return 0.0
    alive = state.grid.bus_alive
    return float(state.grid.load_p[alive].sum()) / state.initial_load


def apply_initial_outage(
    grid: Grid,
    cyber: CyberNetwork,
    fraction: float,
    rng: np.random.Generator,
) -> tuple[Grid, CyberNetwork]:
    """Fail a random set of buses, sparing the control-centre bus.

    The fraction is taken of the whole bus count and rounded up; failed
    buses lose their injections, their lines open, and their collocated
    communication nodes die.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"outage fraction must be in (0, 1), got {fraction}")
    g = grid.copy()
    cy = cyber.copy()
    k = math.ceil(fraction * g.n_bus)
    eligible = np.array(
        [b for b in range(g.n_bus) if g.bus_alive[b] and b != cy.cc_bus], dtype=int
    )
    if k > eligible.size:
        raise ValueError("outage fraction leaves no eligible buses")
    failed = np.sort(rng.choice(eligible, size=k, replace=False))
    g.bus_alive[failed] = False
    g.gen_p[failed] = 0.0
    g.load_p[failed] = 0.0
    failed_set = set(int(b) for b in failed)
    tripped = [
        int(l) for l in range(g.n_line)
        if g.line_closed[l]
        and (int(g.from_bus[l]) in failed_set or int(g.to_bus[l]) in failed_set)
    ]
    for l in tripped:
        g.line_closed[l] = False
    cy = propagate_comm_failures(cy, tripped, frozenset(failed_set))
    return g, cy


# ---------------------------------------------------------------------------
# setup
# ---------------------------------------------------------------------------

def truth_estimate(grid: Grid, flow: FlowState) -> SystemEstimate:
    """Exact estimate of the current grid, the tier-1 parent."""
    active = grid.active_lines()
    _, comps = connected_components(
        grid.n_bus, grid.from_bus, grid.to_bus, active, grid.bus_alive
    )
    islands = []
    for comp in comps:
        comp_set = set(int(b) for b in comp)
        lines = tuple(
            (int(l), int(grid.from_bus[l]), int(grid.to_bus[l]))
            for l in np.nonzero(active)[0]
            if int(grid.from_bus[l]) in comp_set and int(grid.to_bus[l]) in comp_set
        )
        islands.append(
            EstimatedIsland(
                buses=frozenset(comp_set),
                gen={int(b): float(grid.gen_p[b]) for b in comp},
                load={int(b): float(grid.load_p[b]) for b in comp},
                lines=lines,
                flows={lid: float(flow.flow[lid]) for lid, _, _ in lines},
                exact=True,
            )
        )
    return SystemEstimate(tier=0, islands=islands)


def setup_cascade(
    grid: Grid,
    config: ExperimentConfig,
    rng: np.random.Generator,
    params: EngineParams | None = None,
) -> CascadeState:
    """Balance the intact grid, assign ratings, wire the monitoring layer."""
    g = grid.copy()
    p = params or EngineParams(
        lasso_lambda=config.lasso_lambda,
        lasso_tol=config.lasso_tol,
    )
    all_buses = np.arange(g.n_bus)
    proportional_shed(g.gen_p, g.load_p, all_buses)
    base = solve_dc_power_flow(g)
    if base.failed_islands:
        raise RuntimeError("base-case power flow failed; case unusable")
    g.rating = apply_rating_fallback(g, base.flow, config.rating_fallback_factor)
    cyber = build_scada(g, config.type1_link_count)
    state = CascadeState(
        grid=g,
        cyber=cyber,
        mode=config.control_mode,
        params=p,
        rng=rng,
        initial_load=float(g.load_p.sum()),
        initial_gen=g.gen_p.copy(),
    )
    state.estimate = truth_estimate(g, base)
    return state


# ---------------------------------------------------------------------------
# estimation orchestration
# ---------------------------------------------------------------------------

def _estimate_flows(
    grid: Grid,
    buses: frozenset[int],
    lines: tuple[tuple[int, int, int], ...],
    gen: dict[int, float],
    load: dict[int, float],
) -> dict[int, float]:
    """Believed flows on a believed topology.

    Solved per believed component with a pinned reference and no residual
    check: believed injections need not balance when the estimate is wrong,
    and an angle profile is still what the next tier's reference flows need.
    """
    order = np.array(sorted(buses), dtype=int)
    pos = {int(b): i for i, b in enumerate(order)}
    n = order.size
    if n == 0 or not lines:
        return {}
    lf = np.array([pos[u] for _, u, v in lines], dtype=int)
    lt = np.array([pos[v] for _, u, v in lines], dtype=int)
    lx = np.array([float(grid.x[lid]) for lid, _, _ in lines])
    w = 1.0 / lx
    b = np.zeros((n, n))
    np.add.at(b, (lf, lf), w)
    np.add.at(b, (lt, lt), w)
    np.add.at(b, (lf, lt), -w)
    np.add.at(b, (lt, lf), -w)
    _, comps = connected_components(n, lf, lt, np.ones(len(lines), dtype=bool))
    pins = [int(c[0]) for c in comps]
    inj = np.array([gen.get(int(u), 0.0) - load.get(int(u), 0.0) for u in order])
    theta = solve_linear_system(b, inj, pinned=pins, check=False)
    return {
        int(lid): float((theta[lf[j]] - theta[lt[j]]) / lx[j])
        for j, (lid, _, _) in enumerate(lines)
    }


def _exact_island_from_breakers(
    parent, snapshot: MeasurementSnapshot, group: list[int]
) -> EstimatedIsland:
    """Read an island straight off breaker statuses (fully observable parent)."""
    adj: dict[int, list[int]] = {int(b): [] for b in parent.buses}
    for _, u, v in parent.lines:
        adj[u].append(v)
        adj[v].append(u)
    seen = set(group[:1])
    stack = list(seen)
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    buses = frozenset(seen)
    lines = tuple(
        (lid, u, v) for lid, u, v in parent.lines if u in buses and v in buses
    )
    return EstimatedIsland(
        buses=buses,
        gen={b: snapshot.gen_me[b] for b in buses},
        load={b: snapshot.load_me[b] for b in buses},
        lines=lines,
        flows={lid: snapshot.flows_me[lid] for lid, _, _ in lines
               if lid in snapshot.flows_me},
        exact=True,
    )


def run_estimation(
    state: CascadeState, snapshot: MeasurementSnapshot
) -> tuple[SystemEstimate, list[LineReport], int]:
    """One tier of topology estimation over all frequency groups.

    Produces the next estimate history (fresh detections plus carried-over
    prior islands for groups that could not be resolved) and the raw line
    localisation records used by the metrics layer.
    """
    g = state.grid
    p = state.params
    prev = state.estimate
    assert prev is not None
    obs = set(snapshot.observable)
    groups = group_by_frequency(snapshot)

    fresh: list[EstimatedIsland] = []
    carried_ids: set[int] = set()
    carried: list[EstimatedIsland] = []
    claimed: set[int] = set()
    line_reports: list[LineReport] = []

    def carry(prior: EstimatedIsland | None) -> None:
        if prior is not None and id(prior) not in carried_ids:
            carried_ids.add(id(prior))
            carried.append(prior)

    for gi, group in enumerate(groups):
        others = [og for j, og in enumerate(groups) if j != gi]
        prior = prev.owner_of(group[0])
        parent = construct_potential_parent(prev, snapshot, group)
        if parent is None:
            carry(prior)
            continue
        if set(int(b) for b in parent.buses) <= obs:
            est = _exact_island_from_breakers(parent, snapshot, group)
            if est.buses & claimed:
                continue
            fresh.append(est)
            claimed |= est.buses
            continue
        required = predict_required_injections(parent, snapshot, group)
        if required is None:
            carry(prior)
            continue
        key = (tuple(group), parent.buses.tobytes(),
               tuple(lid for lid, _, _ in parent.lines))
        if key in state.stuck_groups:
            carry(prior)
            continue
        bounds = bounds_for_group(group, others)
        bounds = strengthen_bounds_with_flows(
            bounds, parent, snapshot,
            threshold=1e-7 + 10.0 * p.flow_noise_amplitude,
        )
        other_claimed = claimed | set(b for og in others for b in og)
        det: DetectionResult = detect_island(
            parent,
            required,
            bounds,
            epsilon=p.effective_epsilon,
            max_solutions=p.max_solutions,
            other_claimed=other_claimed,
            node_budget=p.ilp_node_budget,
        )
        if not det.success:
            log.info("island detection failed for group %s: %s",
                     group[:6], det.reason)
            if "budget" in det.reason:
                state.stuck_groups.add(key)
            carry(prior)
            continue

        hyp = build_island_admittance_with_duos(parent, required, det.buses, g.x)
        inputs = compute_lasso_inputs(hyp, snapshot.flows_me)
        if inputs is None:
            support: tuple[int, ...] = ()
            log.info("no measurable lines in detected island; keeping all closed")
        else:
            vec = detect_line_outages(
                inputs,
                lam=p.lasso_lambda,
                tol=p.lasso_tol,
                use_lambda_grid=p.lasso_lambda_grid,
            )
            support = vec.support

        unobserved = [
            int(lid) for lid in hyp.line_ids if int(lid) not in snapshot.breaker_me
        ]
        true_out = frozenset(l for l in unobserved if not g.line_closed[l])
        line_reports.append(
            LineReport(
                true_out=true_out,
                detected=frozenset(support),
                unobserved_closed=frozenset(set(unobserved) - true_out),
            )
        )

        believed = tuple(
            (int(lid), int(parent_u), int(parent_v))
            for lid, parent_u, parent_v in zip(
                hyp.line_ids, hyp.buses[hyp.line_from], hyp.buses[hyp.line_to]
            )
            if int(lid) not in set(support)
        )
        est_gen = {
            b: snapshot.gen_me[b] if b in obs else required.gen.get(b, 0.0)
            for b in det.buses
        }
        est_load = {
            b: snapshot.load_me[b] if b in obs else required.load.get(b, 0.0)
            for b in det.buses
        }
        flows = _estimate_flows(g, det.buses, believed, est_gen, est_load)
        fresh.append(
            EstimatedIsland(
                buses=det.buses, gen=est_gen, load=est_load,
                lines=believed, flows=flows,
            )
        )
        claimed |= det.buses

    estimate = SystemEstimate(tier=state.tier, islands=fresh + carried)
    return estimate, line_reports, len(fresh)


def score_islands(
    state: CascadeState,
    snapshot: MeasurementSnapshot,
    fresh_count: int,
) -> list[IslandReport]:
    """Compare true islands against the fresh part of the estimate."""
    g = state.grid
    obs = set(snapshot.observable)
    assert state.estimate is not None
    fresh_sets = [isl.buses for isl in state.estimate.islands[:fresh_count]]
    nz_global = frozenset(
        int(b) for b in np.nonzero(
            np.abs(g.gen_p - g.load_p) > _EPS_ZERO
        )[0]
    )
    reports = []
    for isl in state.islands:
        members = frozenset(int(b) for b in isl.buses)
        obs_members = members & obs
        has_gen = any(g.gen_p[b] > _EPS_ZERO for b in obs_members)
        has_load = any(g.load_p[b] > _EPS_ZERO for b in obs_members)
        if has_gen and has_load:
            frac = len(obs_members) / len(members)
            stratum = "high" if frac >= 0.5 else "low"
        else:
            stratum = "unobserved"
        nz = members & nz_global
        matched = any(s == members for s in fresh_sets)
        matched_nonzero = any(
            (s & nz_global) == nz for s in fresh_sets
        ) if nz else matched
        reports.append(
            IslandReport(
                buses=members, stratum=stratum,
                matched=matched, matched_nonzero=matched_nonzero,
            )
        )
    return reports


# ---------------------------------------------------------------------------
# control orchestration
# ---------------------------------------------------------------------------

def _local_admittance(
    buses: np.ndarray, lines: list[tuple[int, int, int]], x_of: np.ndarray
):
    from scipy import sparse

    pos = {int(b): i for i, b in enumerate(buses)}
    lf = np.array([pos[u] for _, u, v in lines], dtype=int)
    lt = np.array([pos[v] for _, u, v in lines], dtype=int)
    w = np.array([1.0 / float(x_of[lid]) for lid, _, _ in lines])
    n = buses.size
    rows = np.concatenate([lf, lt, lf, lt])
    cols = np.concatenate([lf, lt, lt, lf])
    vals = np.concatenate([w, w, -w, -w])
    b = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return b, lf, lt


def _component_refs(
    buses: np.ndarray, lf: np.ndarray, lt: np.ndarray, gen_capable: np.ndarray
) -> list[int]:
    n = buses.size
    mask = np.ones(lf.size, dtype=bool)
    _, comps = connected_components(n, lf, lt, mask)
    refs = []
    for comp in comps:
        cands = [int(i) for i in comp if gen_capable[int(buses[i])]]
        refs.append(cands[0] if cands else int(comp[0]))
    return refs


def build_mode_control_problem(
    state: CascadeState, snapshot: MeasurementSnapshot, flow: FlowState
) -> ControlProblem | None:
    """Assemble the controller's view for the current mode.

    The believed admittance differs per mode: truth under perfect cyber,
    the estimator's output in proposed mode, and breaker-only guesses with
    unobserved lines assumed closed or open in the two baseline modes.
    """
    g = state.grid
    mode = state.mode
    obs = set(snapshot.observable)

    if mode == "perfect":
        buses = np.nonzero(g.bus_alive)[0]
        lines = [
            (int(l), int(g.from_bus[l]), int(g.to_bus[l]))
            for l in np.nonzero(g.active_lines())[0]
        ]
        gen_red = g.gen_p[buses].copy()
        load_shed = g.load_p[buses].copy()
        flow_of = {lid: float(flow.flow[lid]) for lid, _, _ in lines}
    elif mode == "proposed":
        est = state.estimate
        if est is None or not est.islands:
            return None
        bus_set = set()
        lines_map: dict[int, tuple[int, int, int]] = {}
        for isl in est.islands:
            bus_set |= set(isl.buses)
            for lid, u, v in isl.lines:
                lines_map[lid] = (lid, u, v)
        buses = np.array(sorted(bus_set), dtype=int)
        lines = [lines_map[k] for k in sorted(lines_map)]
        gen_red = np.array(
            [snapshot.gen_me.get(int(b), 0.0) if int(b) in obs else 0.0
             for b in buses]
        )
        load_shed = np.array(
            [snapshot.load_me.get(int(b), 0.0) if int(b) in obs else 0.0
             for b in buses]
        )
        flow_of = dict(snapshot.flows_me)
    elif mode in ("breaker-only-closed", "breaker-only-open"):
        buses = np.arange(g.n_bus)
        assume_closed = mode == "breaker-only-closed"
        lines = [
            (int(l), int(g.from_bus[l]), int(g.to_bus[l]))
            for l in range(g.n_line)
            if snapshot.breaker_me.get(int(l), assume_closed)
        ]
        gen_red = np.array(
            [snapshot.gen_me.get(int(b), 0.0) if int(b) in obs else 0.0
             for b in buses]
        )
        load_shed = np.array(
            [snapshot.load_me.get(int(b), 0.0) if int(b) in obs else 0.0
             for b in buses]
        )
        flow_of = dict(snapshot.flows_me)
    else:
        return None

    if not lines:
        return None
    b_hat, lf, lt = _local_admittance(buses, lines, g.x)
    refs = _component_refs(buses, lf, lt, state.initial_gen > _EPS_ZERO)

    pos = {int(b): i for i, b in enumerate(buses)}
    me_rows = [
        j for j, (lid, _, _) in enumerate(lines) if lid in flow_of
    ]
    line_ids = np.array([lines[j][0] for j in me_rows], dtype=int)
    return ControlProblem(
        buses=buses,
        b_hat=b_hat,
        ref_positions=refs,
        line_ids=line_ids,
        line_u=lf[me_rows],
        line_v=lt[me_rows],
        line_x=np.array([float(g.x[l]) for l in line_ids]),
        line_flow=np.array([flow_of[int(l)] for l in line_ids]),
        line_rating=np.array([float(g.rating[l]) for l in line_ids]),
        gen_reducible=gen_red,
        load_sheddable=load_shed,
        overload_weight=state.params.overload_weight,
    )


def _apply_control_to_estimate(state: CascadeState, action: ControlAction) -> None:
    """Fold the centre's own commands into its believed injections and flows."""
    est = state.estimate
    if est is None:
        return
    touched: set[int] = set(action.gen_delta) | set(action.load_delta)
    for isl in est.islands:
        hit = touched & isl.buses
        if not hit:
            continue
        for b in hit:
            if b in action.gen_delta:
                isl.gen[b] = max(0.0, isl.gen.get(b, 0.0) + action.gen_delta[b])
            if b in action.load_delta:
                isl.load[b] = max(0.0, isl.load.get(b, 0.0) + action.load_delta[b])
        isl.flows = _estimate_flows(state.grid, isl.buses, isl.lines,
                                    isl.gen, isl.load)


# ---------------------------------------------------------------------------
# tier loop
# ---------------------------------------------------------------------------

def _form_islands(state: CascadeState) -> None:
    g = state.grid
    _, comps = connected_components(
        g.n_bus, g.from_bus, g.to_bus, g.active_lines(), g.bus_alive
    )
    islands = []
    for label, comp in enumerate(comps):
        sg = float(g.gen_p[comp].sum())
        sl = float(g.load_p[comp].sum())
        imb = (sg - sl) / max(sg, sl, _EPS_DIV)
        blacked = sg <= _EPS_ZERO or sl <= _EPS_ZERO
        if blacked:
            g.gen_p[comp] = 0.0
            g.load_p[comp] = 0.0
            rg = rl = 0.0
        else:
            rg, rl = proportional_shed(g.gen_p, g.load_p, comp)
        islands.append(
            IslandState(
                label=label, buses=comp, imbalance=imb,
                gen_ratio=rg, load_ratio=rl, blacked_out=blacked,
                ref_bus=reference_bus(g, comp),
            )
        )
    state.islands = islands


def _blackout_failed_flow(state: CascadeState, flow: FlowState) -> FlowState:
    """Zero out islands whose flow solve did not close; re-solve once."""
    if not flow.failed_islands:
        return flow
    g = state.grid
    for label in flow.failed_islands:
        comp = flow.islands[label]
        comp_set = set(int(b) for b in comp)
        g.gen_p[comp] = 0.0
        g.load_p[comp] = 0.0
        for isl in state.islands:
            if set(int(b) for b in isl.buses) == comp_set:
                isl.blacked_out = True
    log.warning("blacked out %d islands after failed flow solve",
                len(flow.failed_islands))
    return solve_dc_power_flow(g)


def step_tier(state: CascadeState, control_mode: str | None = None) -> CascadeState:
    """Advance the cascade by one tier.  Appends a TierRecord."""
    mode = control_mode or state.mode
    g = state.grid
    p = state.params

    _form_islands(state)
    freq_by_label = assign_frequencies(state.islands, p)
    frequencies = np.full(g.n_bus, np.nan)
    for isl in state.islands:
        isl.frequency = freq_by_label[isl.label]
        frequencies[isl.buses] = isl.frequency
    state.frequencies = frequencies

    flow = solve_dc_power_flow(g)
    flow = _blackout_failed_flow(state, flow)

    snap = extract_snapshot(g, flow, frequencies, state.cyber, state.tier)
    if p.flow_noise_amplitude > 0.0 and snap.flows_me:
        noise = state.rng.uniform(
            -p.flow_noise_amplitude, p.flow_noise_amplitude, len(snap.flows_me)
        )
        snap.flows_me = {
            lid: f + e for (lid, f), e in zip(sorted(snap.flows_me.items()), noise)
        }
    state.snapshot = snap

    estimation_ran = mode in ("proposed", "none")
    line_reports: list[LineReport] = []
    islands_detected: int | None = None
    if estimation_ran:
        estimate, line_reports, fresh_count = run_estimation(state, snap)
        state.estimate = estimate
        islands_detected = fresh_count
        island_reports = score_islands(state, snap, fresh_count)
    else:
        island_reports = []

    control_shed = 0.0
    state.last_action = None
    if mode != "none":
        problem = build_mode_control_problem(state, snap, flow)
        if problem is not None:
            action = solve_preventive_control(problem)
            state.last_action = action
            if not action.is_noop:
                apply_control(g, action)
                control_shed = action.total_load_shed
                if estimation_ran:
                    _apply_control_to_estimate(state, action)
                for isl in state.islands:
                    if not isl.blacked_out:
                        proportional_shed(g.gen_p, g.load_p, isl.buses)
                flow = solve_dc_power_flow(g)
                flow = _blackout_failed_flow(state, flow)
    state.flow = flow

    tripped = trip_overloaded(flow, g)
    state.cyber = propagate_comm_failures(state.cyber, set(tripped))

    state.records.append(
        TierRecord(
            tier=state.tier,
            island_sets=[frozenset(int(b) for b in isl.buses)
                         for isl in state.islands],
            island_frequencies=[isl.frequency for isl in state.islands],
            islands_detected=islands_detected,
            island_reports=island_reports,
            line_reports=line_reports,
            load_served=total_load_served(state),
            tripped=tuple(tripped),
            estimation_ran=estimation_ran,
            control_load_shed=control_shed,
            blackouts=sum(1 for isl in state.islands if isl.blacked_out),
        )
    )
    state.tier += 1
    return state


def run_cascade(
    config: ExperimentConfig,
    grid: Grid | None = None,
    rng: np.random.Generator | None = None,
    params: EngineParams | None = None,
) -> CascadeMetrics:
    """Run one cascade to quiescence or the tier cap."""
    if grid is None:
        grid = to_grid(parse_case(config.case_path))
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    state = setup_cascade(grid, config, rng, params)
    before = state.grid.bus_alive.copy()
    state.grid, state.cyber = apply_initial_outage(
        state.grid, state.cyber, config.initial_outage_fraction, rng
    )
    failed = tuple(
        int(b) for b in np.nonzero(before & ~state.grid.bus_alive)[0]
    )
    hit_cap = False
    while True:
        step_tier(state)
        if not state.records[-1].tripped:
            break
        if len(state.records) >= state.params.tier_cap:
            hit_cap = True
            log.warning("cascade hit the tier cap (%d)", state.params.tier_cap)
            break
    return CascadeMetrics(
        tiers=state.records,
        final_load_served=state.records[-1].load_served,
        hit_tier_cap=hit_cap,
        initial_failed_buses=failed,
    )

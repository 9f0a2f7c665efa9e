"""Island identification from partial measurements.

First stage of topology estimation.  Buses observable by the control centre
are grouped by measured frequency; each group seeds a search for the full
member set of its island inside a potential parent (the previous tier's
estimate pruned by observed-open breakers).  Membership is found by
maximising the number of included buses subject to near-zero net injection,
then verifying the chosen set is electrically connected, shrinking the
cardinality cap until it is.

All of the search happens on the zero-injection-reduced graph; pass-through
buses are re-attached afterwards.
"""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field

import numpy as np

from .cyber import MeasurementSnapshot
from .gridmodel import ReducedGraph, connectedness_rank_test, reduce_zero_injection
from .solvers import IlpProblem, LpProblem, solve_ilp, solve_lp

log = logging.getLogger(__name__)

FREQ_GROUP_TOL = 1e-6
DEFAULT_EPSILON = 1e-10
DEFAULT_MAX_SOLUTIONS = 25
EXACT_SIZE_CAP = 22
# once a feasible seed is in hand, a short search either improves on it or
# the seed is good enough; certifying optimality is not worth the nodes
_HINT_NODE_CAP = 400


# ---------------------------------------------------------------------------
# estimate bookkeeping shared with the engine
# ---------------------------------------------------------------------------

@dataclass
class EstimatedIsland:
    """One island as the control centre believes it to be.

    ``lines`` keeps endpoint pairs alongside ids so later tiers can rebuild
    graphs without consulting the true grid; ``exact`` marks islands read off
    directly because every member was observable.
    """

    buses: frozenset[int]
    gen: dict[int, float]
    load: dict[int, float]
    lines: tuple[tuple[int, int, int], ...]   # believed-closed internal (id, u, v)
    flows: dict[int, float]
    exact: bool = False


@dataclass
class SystemEstimate:
    tier: int
    islands: list[EstimatedIsland]

    def owner_of(self, bus: int) -> EstimatedIsland | None:
        for isl in self.islands:
            if bus in isl.buses:
                return isl
        return None


@dataclass
class PotentialParent:
    """Previous-tier estimated island, pruned by observed-open breakers.

    ``lines`` is the pruned list used for detection; ``prior_lines`` keeps
    the unpruned believed-closed set, needed later to enumerate boundary
    ties, and the prior generation/load is what shedding ratios scale.
    """

    buses: np.ndarray                        # sorted bus indices
    lines: list[tuple[int, int, int]]        # (line_id, u, v), observed-open removed
    prior_lines: list[tuple[int, int, int]]  # believed-closed at the previous tier
    gen_prior: dict[int, float]
    load_prior: dict[int, float]
    flows_prior: dict[int, float]            # per line_id, previous-tier estimate


@dataclass
class RequiredInjections:
    """Hypothesised post-shed injections for every parent bus."""

    p: dict[int, float]
    gen_ratio: float
    load_ratio: float
    gen: dict[int, float] = field(default_factory=dict)
    load: dict[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class MembershipBounds:
    """Frequency-derived membership constraints for one island search."""

    members: frozenset[int]       # observable buses that must be included
    excluded: frozenset[int]      # observable buses of other frequency groups


@dataclass
class DetectionResult:
    success: bool
    buses: frozenset[int] = frozenset()
    reduced_members: frozenset[int] = frozenset()
    attempts: int = 0
    m_a_history: list[int] = field(default_factory=list)
    reason: str = ""


# ---------------------------------------------------------------------------
# grouping, parents, priors
# ---------------------------------------------------------------------------

def group_by_frequency(
    snapshot: MeasurementSnapshot, tol: float = FREQ_GROUP_TOL
) -> list[list[int]]:
    """Partition observable buses into same-frequency groups.

    Distinct islands get frequencies at least one collision step apart, far
    wider than ``tol``, so equality within ``tol`` recovers co-membership.
    """
    items = sorted(snapshot.freq_me.items(), key=lambda kv: (kv[1], kv[0]))
    groups: list[list[int]] = []
    last_f = None
    for bus, f in items:
        if last_f is None or abs(f - last_f) > tol:
            groups.append([bus])
        else:
            groups[-1].append(bus)
        last_f = f
    for g in groups:
        g.sort()
    groups.sort(key=lambda g: g[0])
    return groups


def bounds_for_group(
    group: list[int], other_groups: list[list[int]]
) -> MembershipBounds:
    return MembershipBounds(
        members=frozenset(group),
        excluded=frozenset(b for og in other_groups for b in og),
    )


def strengthen_bounds_with_flows(
    bounds: MembershipBounds,
    parent: PotentialParent,
    snapshot: MeasurementSnapshot,
    threshold: float,
) -> MembershipBounds:
    """Classify unobserved endpoints of visibly conducting lines.

    A closed breaker together with a clearly nonzero flow reading proves
    current crosses the line, so both endpoints sit in one electrical
    island and the observed endpoint's frequency group decides the other
    one.  Readings at or below the threshold prove nothing: a stub into a
    failed bus measures exactly zero, and callers widen the threshold past
    the noise floor when measurements are noisy.  This keeps the membership
    search's free variables to the buses the measurements genuinely leave
    open, which is what makes the search tractable on large systems.
    """
    members = set(bounds.members)
    excluded = set(bounds.excluded)
    for lid, u, v in parent.lines:
        if not snapshot.breaker_me.get(lid, False):
            continue
        if abs(snapshot.flows_me.get(lid, 0.0)) <= threshold:
            continue
        for a, b in ((u, v), (v, u)):
            if b in snapshot.observable:
                continue
            if a in bounds.members:
                members.add(b)
            elif a in bounds.excluded:
                excluded.add(b)
    return MembershipBounds(
        members=frozenset(members), excluded=frozenset(excluded)
    )


def construct_potential_parent(
    history: SystemEstimate,
    snapshot: MeasurementSnapshot,
    group: list[int],
) -> PotentialParent | None:
    """Locate the prior island a frequency group came from and prune it.

    Every group bus must sit in the same prior island; a group spanning two
    of them means the running estimate has already diverged, which is logged
    and skipped rather than guessed at.  Lines whose breaker is observed
    open are dropped, and since an island is connected, the parent then
    shrinks to the believed component holding the group; that keeps the
    membership search small once breaker openings have visibly split the
    prior island.
    """
    owners = {id(isl): isl for b in group
              for isl in (history.owner_of(b),) if isl is not None}
    if len(owners) != 1:
        log.error(
            "frequency group %s maps to %d prior islands; skipping",
            group[:6], len(owners),
        )
        return None
    isl = next(iter(owners.values()))
    pruned = [
        (lid, u, v) for (lid, u, v) in isl.lines
        if snapshot.breaker_me.get(lid, True)
    ]

    adj: dict[int, list[int]] = {b: [] for b in isl.buses}
    for _, u, v in pruned:
        adj[u].append(v)
        adj[v].append(u)
    seen = {group[0]}
    stack = [group[0]]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    if not set(group) <= seen:
        log.error(
            "frequency group %s spans several believed components; skipping",
            group[:6],
        )
        return None
    return PotentialParent(
        buses=np.array(sorted(seen), dtype=int),
        lines=[l for l in pruned if l[1] in seen and l[2] in seen],
        prior_lines=list(isl.lines),
        gen_prior=dict(isl.gen),
        load_prior=dict(isl.load),
        flows_prior=dict(isl.flows),
    )


def predict_required_injections(
    parent: PotentialParent,
    snapshot: MeasurementSnapshot,
    island_group: list[int],
) -> RequiredInjections | None:
    """Scale the parent's prior injections by observed shedding ratios.

    Needs one observable generator bus and one observable nonzero-load bus
    in the group; returns None when the island is unobservable in that
    sense.  Ratios are clamped into [0, 1]: shedding never raises output.
    """
    gen_bus = next(
        (b for b in island_group if parent.gen_prior.get(b, 0.0) > 0.0), None
    )
    load_bus = next(
        (b for b in island_group if parent.load_prior.get(b, 0.0) > 0.0), None
    )
    if gen_bus is None or load_bus is None:
        return None
    gen_ratio = snapshot.gen_me[gen_bus] / parent.gen_prior[gen_bus]
    load_ratio = snapshot.load_me[load_bus] / parent.load_prior[load_bus]
    gen_ratio = min(max(gen_ratio, 0.0), 1.0)
    load_ratio = min(max(load_ratio, 0.0), 1.0)
    gen = {int(b): gen_ratio * parent.gen_prior.get(int(b), 0.0) for b in parent.buses}
    load = {int(b): load_ratio * parent.load_prior.get(int(b), 0.0) for b in parent.buses}
    p = {b: gen[b] - load[b] for b in gen}
    return RequiredInjections(
        p=p, gen_ratio=gen_ratio, load_ratio=load_ratio, gen=gen, load=load
    )


# ---------------------------------------------------------------------------
# detection
# ---------------------------------------------------------------------------

def reduce_parent(
    parent: PotentialParent, required: RequiredInjections
) -> ReducedGraph:
    p = np.array([required.p[int(b)] for b in parent.buses])
    edges = [(u, v) for (_, u, v) in parent.lines]
    return reduce_zero_injection(parent.buses, edges, p)


def _bound_arrays(
    reduced: ReducedGraph, bounds: MembershipBounds
) -> tuple[np.ndarray, np.ndarray]:
    k = reduced.nodes.size
    lb = np.zeros(k)
    ub = np.ones(k)
    pos = {int(b): i for i, b in enumerate(reduced.nodes)}
    for b in bounds.members:
        if b in pos:
            lb[pos[b]] = 1.0
    for b in bounds.excluded:
        if b in pos:
            ub[pos[b]] = 0.0
    return lb, ub


def augment_with_zero_buses(
    reduced: ReducedGraph,
    members: np.ndarray,
    other_claimed: set[int],
) -> frozenset[int]:
    """Re-attach pass-through buses around a detected nonzero-bus set.

    A zero-injection bus joins when every nonzero bus reachable from it
    through zero-injection buses is a member, or when none of the spill-over
    neighbours is claimed by another island.  Buses bordering two detected
    islands stay unassigned rather than being double-counted.
    """
    member_pos = set(int(i) for i in members)
    chosen = set(int(reduced.nodes[i]) for i in member_pos)
    for z, closure in reduced.zero_closure.items():
        if not closure & member_pos:
            continue
        spill = closure - member_pos
        if not spill:
            chosen.add(int(z))
            continue
        spill_buses = {int(reduced.nodes[i]) for i in spill}
        if not (spill_buses & other_claimed):
            chosen.add(int(z))
    return frozenset(chosen)


def _original_connected(parent: PotentialParent, bus_set: frozenset[int]) -> bool:
    if len(bus_set) <= 1:
        return True
    adj: dict[int, list[int]] = {b: [] for b in bus_set}
    for _, u, v in parent.lines:
        if u in bus_set and v in bus_set:
            adj[u].append(v)
            adj[v].append(u)
    start = next(iter(bus_set))
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == len(bus_set)


def _interval_of_level_set(
    ts: np.ndarray,
    vs: np.ndarray,
    slopes: np.ndarray,
    level: float,
    below: bool,
) -> tuple[float, float]:
    """Contiguous t-interval where a piecewise-linear g stays on one side.

    ``ts``/``vs`` are the breakpoints of g; convex g with ``below=True`` or
    concave g with ``below=False`` both make the qualifying breakpoints one
    block, so the exact endpoints come from interpolating the two boundary
    segments.
    """
    ok = vs <= level if below else vs >= level
    if not ok.any():
        return np.inf, -np.inf
    first = int(ok.argmax())
    last = len(ok) - 1 - int(ok[::-1].argmax())
    if first == 0:
        a = float(ts[0])
    else:
        s = float(slopes[first - 1])
        a = float(ts[first]) if s == 0.0 else float(
            ts[first - 1] + (level - vs[first - 1]) / s
        )
    if last == len(ts) - 1:
        b = float(ts[-1])
    else:
        s = float(slopes[last])
        b = float(ts[last]) if s == 0.0 else float(
            ts[last] + (level - vs[last]) / s
        )
    return a, b


def _shift_balance(
    z: np.ndarray,
    w: np.ndarray,
    p_hat: np.ndarray,
    asc: np.ndarray,
    need: float,
    tol: float,
) -> np.ndarray | None:
    """Move mass between items at fixed total until p_hat @ z rises by need."""
    z = z.copy()
    di, ri = 0, asc.size - 1
    while need > tol and di < ri:
        d = int(asc[di])
        r = int(asc[ri])
        if z[d] <= 1e-15:
            di += 1
            continue
        room = w[r] - z[r]
        if room <= 1e-15:
            ri -= 1
            continue
        gain = p_hat[r] - p_hat[d]
        if gain <= 1e-15:
            break
        amount = min(z[d], room, need / gain)
        z[d] -= amount
        z[r] += amount
        need -= amount * gain
    return z if need <= tol else None


def _membership_node_solver(
    p_hat: np.ndarray,
    epsilon: float,
    m_a: float,
    a_ub: np.ndarray,
    b_ub: np.ndarray,
):
    """Closed-form LP relaxation for the membership search.

    Per branch-and-bound node the relaxation is

        max 1.x   s.t.   |p_hat . x| <= epsilon,   1 <= 1.x <= m_a,
                         lb <= x <= ub

    Shifting out the lower bounds leaves a continuous knapsack: for a total
    t the reachable balance values form [g_min(t), g_max(t)], filling the
    smallest coefficients first respectively the largest.  g_min is convex
    and g_max concave piecewise-linear, so feasible totals are an interval
    and the optimum sits at its upper end.  One coefficient sort is shared
    by every node; the rest is prefix sums.  Anything that stalls
    numerically falls back to the generic simplex on the same node.
    """
    k = p_hat.size
    asc = np.argsort(p_hat, kind="stable")
    desc = asc[::-1]
    p_asc = p_hat[asc]
    p_desc = p_hat[desc]

    def _generic(lb: np.ndarray, ub: np.ndarray):
        lp = solve_lp(LpProblem(c=-np.ones(k), a_ub=a_ub, b_ub=b_ub, lb=lb, ub=ub))
        return lp.status, lp.x, lp.objective

    def _fill(idx: np.ndarray, w_sorted: np.ndarray, cum: np.ndarray, t: float):
        z_sorted = np.zeros(k)
        j = int(np.searchsorted(cum, t, side="right")) - 1
        j = min(max(j, 0), k)
        z_sorted[:j] = w_sorted[:j]
        if j < k:
            z_sorted[j] = min(max(t - float(cum[j]), 0.0), float(w_sorted[j]))
        z = np.zeros(k)
        z[idx] = z_sorted
        return z

    def _g(cum_w: np.ndarray, cum_v: np.ndarray, p_sorted: np.ndarray, t: float):
        j = int(np.searchsorted(cum_w, t, side="right")) - 1
        j = min(max(j, 0), k)
        if j >= k:
            return float(cum_v[k])
        return float(cum_v[j] + p_sorted[j] * (t - cum_w[j]))

    def solve(lb: np.ndarray, ub: np.ndarray):
        w = ub - lb
        w_asc = w[asc]
        w_desc = w[desc]
        s0 = float(lb.sum())
        p0 = float(p_hat @ lb)
        eps_b = 1e-12 * (float(np.abs(p_asc) @ w_asc) + abs(p0) + 1.0)
        eps_t = 1e-9
        lo_bal = -epsilon - p0
        hi_bal = epsilon - p0
        total = float(w_asc.sum())
        t_lo = max(1.0 - s0, 0.0)
        t_hi = min(float(m_a) - s0, total)
        if t_hi < t_lo - eps_t:
            return "infeasible", None, np.nan

        cw = np.concatenate([[0.0], np.cumsum(w_asc)])
        cv_min = np.concatenate([[0.0], np.cumsum(p_asc * w_asc)])
        cw_d = np.concatenate([[0.0], np.cumsum(w_desc)])
        cv_max = np.concatenate([[0.0], np.cumsum(p_desc * w_desc)])

        a1, b1 = _interval_of_level_set(cw, cv_min, p_asc, hi_bal + eps_b, True)
        a2, b2 = _interval_of_level_set(cw_d, cv_max, p_desc, lo_bal - eps_b, False)
        lo = max(t_lo, a1, a2)
        hi = min(t_hi, b1, b2)
        if hi < lo - eps_t:
            return "infeasible", None, np.nan
        t_star = max(hi, 0.0)

        g_lo = _g(cw, cv_min, p_asc, t_star)
        g_hi = _g(cw_d, cv_max, p_desc, t_star)
        if g_lo >= lo_bal - eps_b:
            z = _fill(asc, w_asc, cw, t_star)
        elif g_hi <= hi_bal + eps_b:
            z = _fill(desc, w_desc, cw_d, t_star)
        else:
            z = _fill(asc, w_asc, cw, t_star)
            z = _shift_balance(
                z, w, p_hat, asc, lo_bal - float(p_hat @ z), max(eps_b, 1e-11)
            )
            if z is None:
                log.debug("membership relaxation stalled; generic node solve")
                return _generic(lb, ub)
        return "optimal", lb + z, -(s0 + t_star)

    return solve


def _greedy_balanced_seed(
    p_hat: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray,
    epsilon: float,
    m_a: float,
) -> np.ndarray | None:
    """Build an incumbent by cancelling the all-in imbalance greedily.

    Starts from every allowed bus and repeatedly drops the free bus whose
    injection sits closest to the running residual.  The relaxation never
    lands on such points on its own: shaving the largest-magnitude
    injection fractionally always costs less count per unit of balance
    than dropping an exact match outright, so an unseeded search has to
    grind through those shave combinations before any cancellation subset
    surfaces.  Returns None as soon as a drop stops shrinking the
    residual; a partial repair is no use as a seed.
    """
    x = ub.astype(float).copy()
    resid = float(p_hat @ x)
    count = float(x.sum())
    pool = sorted((float(p_hat[i]), int(i)) for i in np.nonzero(ub - lb > 0.5)[0])
    while abs(resid) > epsilon:
        if not pool or count <= 1.0:
            return None
        pos = bisect.bisect_left(pool, (resid, -1))
        best = None
        for q in (pos - 1, pos):
            if 0 <= q < len(pool):
                gap = abs(resid - pool[q][0])
                if best is None or gap < best[0]:
                    best = (gap, q)
        if best[0] > epsilon and best[0] >= abs(resid) - 1e-15:
            return None
        value, i = pool.pop(best[1])
        x[i] = 0.0
        resid -= value
        count -= 1.0
    if count < 1.0 or count > m_a:
        return None
    return x


# combination sizes past these points cost more memory than the seed is worth
_SEED_EXCLUSION_MAX = 6
_SEED_TRIPLE_LIMIT = 180
_SEED_CANDIDATE_CAP = 200


def _match_windows(
    sums: np.ndarray, order: np.ndarray, targets: np.ndarray, tol: float
) -> list[tuple[int, np.ndarray]]:
    """Pair each target with the sorted-sum indices within tolerance."""
    lo = np.searchsorted(sums, targets - tol, side="left")
    hi = np.searchsorted(sums, targets + tol, side="right")
    hits = np.nonzero(hi > lo)[0]
    return [(int(q), order[lo[q]:hi[q]]) for q in hits]


def _small_exclusion_seed(
    p_hat: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray,
    epsilon: float,
    m_a: float,
    adj: np.ndarray,
) -> np.ndarray | None:
    """Balance the all-in set by dropping as few free buses as possible.

    The search target is the exact float residual, so the subsets that
    qualify are essentially the true exclusion set (unreachable buses whose
    predicted injections should not be counted) plus rare coincidences.
    Cardinality is the objective being maximised, which makes a minimum
    size exclusion set an optimal incumbent; handing it to the integer
    search lets bound pruning certify it instead of rediscovering it one
    branching decision at a time.  Enumeration is meet-in-the-middle over
    singles, pairs and triples of free injections, so exclusion sets of up
    to six buses are within reach.  Candidates that fail the connectivity
    screen are kept only as a last resort.
    """
    free = np.nonzero(ub - lb > 0.5)[0]
    target = float(p_hat @ ub)
    count_all = float(ub.sum())
    e_lo = max(0, int(np.ceil(count_all - m_a - 1e-9)))
    e_hi = min(_SEED_EXCLUSION_MAX, free.size, int(count_all - 1.0))
    tol = max(0.25 * epsilon, 1e-12)

    def finish(exclusions: list[np.ndarray]) -> np.ndarray | None:
        fallback = None
        for excl in exclusions[:_SEED_CANDIDATE_CAP]:
            x = ub.astype(float).copy()
            x[free[excl]] = 0.0
            if abs(float(p_hat @ x)) > epsilon:
                continue
            if connectedness_rank_test(adj, np.nonzero(x > 0.5)[0]):
                return x
            if fallback is None:
                fallback = x
        return fallback

    if e_lo == 0 and abs(target) <= epsilon:
        return ub.astype(float).copy()

    w = p_hat[free]
    found: list[np.ndarray] = []
    pair_i = pair_j = pair_sums = pair_order = pair_sorted = None
    trip_i = trip_jk = trip_sums = trip_order = trip_sorted = None
    use_triples = 3 <= free.size <= _SEED_TRIPLE_LIMIT

    def build_pairs() -> None:
        nonlocal pair_i, pair_j, pair_sums, pair_order, pair_sorted
        if pair_sums is not None:
            return
        pair_i, pair_j = np.triu_indices(free.size, k=1)
        pair_sums = w[pair_i] + w[pair_j]
        pair_order = np.argsort(pair_sums, kind="stable")
        pair_sorted = pair_sums[pair_order]

    def build_triples() -> None:
        nonlocal trip_i, trip_jk, trip_sums, trip_order, trip_sorted
        if trip_sums is not None:
            return
        build_pairs()
        trip_i = np.repeat(np.arange(free.size), pair_i.size)
        trip_jk = np.tile(np.arange(pair_i.size), free.size)
        distinct = (trip_i != pair_i[trip_jk]) & (trip_i != pair_j[trip_jk])
        trip_i, trip_jk = trip_i[distinct], trip_jk[distinct]
        trip_sums = w[trip_i] + pair_sums[trip_jk]
        trip_order = np.argsort(trip_sums, kind="stable")
        trip_sorted = trip_sums[trip_order]

    for e in range(max(1, e_lo), e_hi + 1):
        found.clear()
        if e >= 2:
            build_pairs()
        if e >= 5 and use_triples:
            build_triples()
        if e == 1:
            for i in np.nonzero(np.abs(w - target) <= tol)[0]:
                found.append(np.array([i]))
        elif e == 2:
            close = np.nonzero(np.abs(pair_sums - target) <= tol)[0]
            for q in close:
                found.append(np.array([pair_i[q], pair_j[q]]))
        elif e == 3:
            for s, matches in _match_windows(
                pair_sorted, pair_order, target - w, tol
            ):
                for q in matches:
                    trio = {s, int(pair_i[q]), int(pair_j[q])}
                    if len(trio) == 3:
                        found.append(np.array(sorted(trio)))
        elif e == 4 or (e == 5 and use_triples):
            left_i = pair_i if e == 4 else trip_i
            left_sums = pair_sums if e == 4 else trip_sums
            for s, matches in _match_windows(
                pair_sorted, pair_order, target - left_sums, tol
            ):
                base = (
                    {int(pair_i[s]), int(pair_j[s])} if e == 4
                    else {int(left_i[s]), int(pair_i[trip_jk[s]]),
                          int(pair_j[trip_jk[s]])}
                )
                for q in matches:
                    combo = base | {int(pair_i[q]), int(pair_j[q])}
                    if len(combo) == e:
                        found.append(np.array(sorted(combo)))
                if len(found) > _SEED_CANDIDATE_CAP:
                    break
        elif e == 6 and use_triples:
            for s, matches in _match_windows(
                trip_sorted, trip_order, target - trip_sums, tol
            ):
                base = {int(trip_i[s]), int(pair_i[trip_jk[s]]),
                        int(pair_j[trip_jk[s]])}
                for q in matches:
                    combo = base | {int(trip_i[q]), int(pair_i[trip_jk[q]]),
                                    int(pair_j[trip_jk[q]])}
                    if len(combo) == 6:
                        found.append(np.array(sorted(combo)))
                if len(found) > _SEED_CANDIDATE_CAP:
                    break
        else:
            continue
        if found:
            unique = {tuple(int(v) for v in excl) for excl in found}
            seed = finish([np.array(u) for u in sorted(unique)])
            if seed is not None:
                return seed
    return None


def _component_hint(
    adj: np.ndarray,
    members: np.ndarray,
    lb: np.ndarray,
    p_hat: np.ndarray,
    epsilon: float,
) -> np.ndarray | None:
    """Pick a balanced connected piece of a rejected solution as a seed.

    A disconnected optimum usually glues the wanted island to other balanced
    pieces; the piece holding every frequency-bound member is itself feasible
    at the next cardinality cap, and seeding it keeps the follow-up search
    from coming back empty-handed when its node budget runs out.
    """
    remaining = list(members)
    comps: list[list[int]] = []
    member_set = set(remaining)
    while remaining:
        start = remaining[0]
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v in adj[u].nonzero()[0]:
                if v in member_set and v not in seen:
                    seen.add(v)
                    stack.append(v)
        comps.append(sorted(seen))
        member_set -= seen
        remaining = sorted(member_set)
    forced = set((lb > 0.5).nonzero()[0])
    if forced:
        comps = [c for c in comps if forced <= set(c)]
    comps = [c for c in comps if abs(float(p_hat[c].sum())) <= epsilon]
    if not comps:
        return None
    comps.sort(key=lambda c: (-len(c), c[0]))
    hint = np.zeros(p_hat.size)
    hint[comps[0]] = 1.0
    return hint


def detect_island(
    parent: PotentialParent,
    required: RequiredInjections,
    bounds: MembershipBounds,
    epsilon: float = DEFAULT_EPSILON,
    max_solutions: int = DEFAULT_MAX_SOLUTIONS,
    other_claimed: set[int] | None = None,
    reduced: ReducedGraph | None = None,
    node_budget: int = 200_000,
) -> DetectionResult:
    """Iterative membership search with connectedness verification.

    Maximises the bus count subject to the balance band and the frequency
    bounds; whenever the optimum is not a single connected piece, the
    cardinality cap drops to one below the last solution's size and the
    search repeats, up to ``max_solutions`` attempts.  ``node_budget`` caps
    the total branch-and-bound work across the attempts so a hard instance
    degrades to a detection failure instead of stalling the tier; an
    incumbent found under an exhausted budget is still screened like any
    other candidate, it just lacks the optimality certificate.
    """
    if reduced is None:
        reduced = reduce_parent(parent, required)
    other_claimed = other_claimed or set()
    k = reduced.nodes.size
    if k == 0:
        return DetectionResult(False, reason="no nonzero-injection buses in parent")
    if bounds.members & bounds.excluded:
        return DetectionResult(False, reason="contradictory frequency bounds")
    lb, ub = _bound_arrays(reduced, bounds)
    p_hat = reduced.p_hat
    scale = float(np.sum(np.abs(p_hat))) + 1.0
    eps_check = max(epsilon, 1e-12 * scale)

    m_a = k + 1
    history: list[int] = []
    n_forced = int(lb.sum())
    nodes_left = node_budget
    hint: np.ndarray | None = None
    for attempt in range(1, max_solutions + 1):
        history.append(m_a)
        if m_a < max(1, n_forced):
            return DetectionResult(
                False, attempts=attempt, m_a_history=history,
                reason="cardinality cap below forced members",
            )
        if nodes_left <= 0:
            return DetectionResult(
                False, attempts=attempt, m_a_history=history,
                reason="node budget exhausted",
            )
        a_ub = np.vstack([p_hat, -p_hat, np.ones(k), -np.ones(k)])
        b_ub = np.array([epsilon, epsilon, float(m_a), -1.0])
        seed = hint
        if seed is None:
            seed = _small_exclusion_seed(
                p_hat, lb, ub, epsilon, float(m_a), reduced.adj
            )
        if seed is None:
            seed = _greedy_balanced_seed(p_hat, lb, ub, epsilon, float(m_a))
        res = solve_ilp(
            IlpProblem(c=-np.ones(k), a_ub=a_ub, b_ub=b_ub, lb=lb, ub=ub),
            node_budget=nodes_left if seed is None else min(nodes_left, _HINT_NODE_CAP),
            x0=seed,
            node_solver=_membership_node_solver(
                p_hat, epsilon, float(m_a), a_ub, b_ub
            ),
        )
        nodes_left -= res.n_nodes
        if res.x is None:
            return DetectionResult(
                False, attempts=attempt, m_a_history=history, reason=res.status
            )
        members = (res.x > 0.5).nonzero()[0]
        size = members.size
        balance = abs(float(p_hat[members].sum()))
        connected = balance <= eps_check and connectedness_rank_test(
            reduced.adj, members
        )
        if connected:
            buses = augment_with_zero_buses(reduced, members, other_claimed)
            if _original_connected(parent, buses):
                return DetectionResult(
                    True,
                    buses=buses,
                    reduced_members=frozenset(int(reduced.nodes[i]) for i in members),
                    attempts=attempt,
                    m_a_history=history,
                )
        hint = None if connected else _component_hint(
            reduced.adj, members, lb, p_hat, epsilon
        )
        m_a = size - 1
    return DetectionResult(
        False, attempts=max_solutions, m_a_history=history,
        reason="no connected solution within attempt budget",
    )


def detect_island_exact(
    parent: PotentialParent,
    required: RequiredInjections,
    bounds: MembershipBounds,
    epsilon: float = DEFAULT_EPSILON,
    other_claimed: set[int] | None = None,
) -> DetectionResult:
    """Exhaustive maximum-cardinality search; oracle for detect_island.

    Enumerates every subset of the reduced graph (capped at 22 buses),
    keeping the largest balanced, bound-respecting, connected one.
    """
    reduced = reduce_parent(parent, required)
    other_claimed = other_claimed or set()
    k = reduced.nodes.size
    if k > EXACT_SIZE_CAP:
        raise ValueError(
            f"exact search limited to {EXACT_SIZE_CAP} reduced buses, got {k}"
        )
    if k == 0:
        return DetectionResult(False, reason="no nonzero-injection buses in parent")
    if bounds.members & bounds.excluded:
        return DetectionResult(False, reason="contradictory frequency bounds")
    lb, ub = _bound_arrays(reduced, bounds)
    forced = lb > 0.5
    banned = ub < 0.5
    free = (~forced & ~banned).nonzero()[0]
    base = forced.nonzero()[0]

    n_free = free.size
    combos = np.arange(2 ** n_free, dtype=np.int64)
    bits = ((combos[:, None] >> np.arange(n_free)) & 1).astype(bool)
    sums = bits @ reduced.p_hat[free] + float(reduced.p_hat[base].sum())
    counts = bits.sum(axis=1) + base.size
    feasible = (np.abs(sums) <= epsilon) & (counts >= 1)

    best: np.ndarray | None = None
    order = np.lexsort((combos, -counts))
    for idx in order:
        if not feasible[idx]:
            continue
        members = np.concatenate([base, free[bits[idx]]])
        members.sort()
        if connectedness_rank_test(reduced.adj, members):
            best = members
            break
    if best is None:
        return DetectionResult(False, reason="no feasible connected subset")
    buses = augment_with_zero_buses(reduced, best, other_claimed)
    return DetectionResult(
        True,
        buses=buses,
        reduced_members=frozenset(int(reduced.nodes[i]) for i in best),
        attempts=1,
    )

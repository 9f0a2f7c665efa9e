"""DC network model: incidence, susceptance, flows, components, reduction.

Buses are referenced by position throughout; ``Grid.bus_ids`` keeps the
external numbering from the case file.  Lines keep a fixed index for their
whole life, open lines simply drop out of the active set, which keeps every
matrix aligned across cascade tiers.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .solvers import solve_linear_system

log = logging.getLogger(__name__)

_ZERO_INJ_TOL = 1e-12
_ISLAND_RESID_TOL = 1e-8


# ---------------------------------------------------------------------------
# core containers
# ---------------------------------------------------------------------------

@dataclass
class Grid:
    """Mutable ground-truth network state (per-unit quantities)."""

    bus_ids: np.ndarray
    gen_p: np.ndarray
    load_p: np.ndarray
    bus_alive: np.ndarray
    from_bus: np.ndarray
    to_bus: np.ndarray
    x: np.ndarray
    rating: np.ndarray
    line_closed: np.ndarray
    base_mva: float = 100.0

    @property
    def n_bus(self) -> int:
        return self.bus_ids.size

    @property
    def n_line(self) -> int:
        return self.from_bus.size

    def injections(self) -> np.ndarray:
        return self.gen_p - self.load_p

    def active_lines(self) -> np.ndarray:
        """Closed lines whose endpoints are both alive."""
        return (
            self.line_closed
            & self.bus_alive[self.from_bus]
            & self.bus_alive[self.to_bus]
        )

    def copy(self) -> "Grid":
        return Grid(
            bus_ids=self.bus_ids.copy(),
            gen_p=self.gen_p.copy(),
            load_p=self.load_p.copy(),
            bus_alive=self.bus_alive.copy(),
            from_bus=self.from_bus,
            to_bus=self.to_bus,
            x=self.x,
            rating=self.rating.copy(),
            line_closed=self.line_closed.copy(),
            base_mva=self.base_mva,
        )


@dataclass
class IncidenceMatrix:
    m: np.ndarray          # n_bus x n_selected, +1 at from, -1 at to
    line_ids: np.ndarray   # selected line indices


@dataclass
class AdmittanceMatrix:
    b: np.ndarray
    incidence: IncidenceMatrix
    susceptance: np.ndarray  # 1/x per selected line


@dataclass
class FlowState:
    theta: np.ndarray
    flow: np.ndarray               # full line-indexed array, 0 on open lines
    island_label: np.ndarray       # -1 for dead buses
    islands: list[np.ndarray]
    ref_buses: list[int]
    failed_islands: list[int] = field(default_factory=list)


# ---------------------------------------------------------------------------
# incidence / admittance
# ---------------------------------------------------------------------------

def build_incidence(
    n_bus: int, from_bus: np.ndarray, to_bus: np.ndarray, line_ids: np.ndarray
) -> IncidenceMatrix:
    m = np.zeros((n_bus, line_ids.size))
    m[from_bus[line_ids], np.arange(line_ids.size)] = 1.0
    m[to_bus[line_ids], np.arange(line_ids.size)] = -1.0
    return IncidenceMatrix(m=m, line_ids=line_ids)


def build_admittance(grid: Grid, line_mask: np.ndarray | None = None) -> AdmittanceMatrix:
    """Susceptance matrix over the selected (default: active) lines."""
    mask = grid.active_lines() if line_mask is None else np.asarray(line_mask, bool)
    ids = mask.nonzero()[0]
    inc = build_incidence(grid.n_bus, grid.from_bus, grid.to_bus, ids)
    d = 1.0 / grid.x[ids]
    f, t = grid.from_bus[ids], grid.to_bus[ids]
    b = np.zeros((grid.n_bus, grid.n_bus))
    np.add.at(b, (f, f), d)
    np.add.at(b, (t, t), d)
    np.add.at(b, (f, t), -d)
    np.add.at(b, (t, f), -d)
    return AdmittanceMatrix(b=b, incidence=inc, susceptance=d)


def line_flows(
    theta: np.ndarray, grid: Grid, line_mask: np.ndarray | None = None
) -> np.ndarray:
    """Per-line flows ``(theta_u - theta_v) / x``; zero on unselected lines."""
    mask = grid.active_lines() if line_mask is None else np.asarray(line_mask, bool)
    flow = np.zeros(grid.n_line)
    ids = mask.nonzero()[0]
    flow[ids] = (theta[grid.from_bus[ids]] - theta[grid.to_bus[ids]]) / grid.x[ids]
    return flow


# ---------------------------------------------------------------------------
# connectivity
# ---------------------------------------------------------------------------

def connected_components(
    n_bus: int,
    from_bus: np.ndarray,
    to_bus: np.ndarray,
    line_mask: np.ndarray,
    bus_alive: np.ndarray | None = None,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Labels per bus (-1 for dead buses) and member lists per component.

    Components are numbered in order of their smallest bus index, so the
    labelling is deterministic for a given topology.
    """
    alive = np.ones(n_bus, dtype=bool) if bus_alive is None else bus_alive
    adj: list[list[int]] = [[] for _ in range(n_bus)]
    for k in np.nonzero(line_mask)[0]:
        u, v = int(from_bus[k]), int(to_bus[k])
        if alive[u] and alive[v]:
            adj[u].append(v)
            adj[v].append(u)
    labels = np.full(n_bus, -1, dtype=int)
    islands: list[np.ndarray] = []
    for start in range(n_bus):
        if not alive[start] or labels[start] >= 0:
            continue
        comp = [start]
        labels[start] = len(islands)
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if labels[v] < 0:
                    labels[v] = labels[start]
                    comp.append(v)
                    queue.append(v)
        islands.append(np.array(sorted(comp), dtype=int))
    return labels, islands


def connectedness_rank_test(adj: np.ndarray, subset: np.ndarray | None = None) -> bool:
    """Connectivity of an induced subgraph via the Laplacian rank.

    The induced subgraph on ``k`` vertices is connected exactly when its
    Laplacian has rank ``k - 1``, i.e. ``1 + rank >= k``.
    """
    a = np.asarray(adj, dtype=float)
    if subset is not None:
        idx = np.asarray(subset, dtype=int)
        a = a[np.ix_(idx, idx)]
    k = a.shape[0]
    if k <= 1:
        return True
    lap = np.diag(a.sum(axis=1)) - a
    rank = np.linalg.matrix_rank(lap)
    return 1 + rank >= k


# ---------------------------------------------------------------------------
# power flow
# ---------------------------------------------------------------------------

def reference_bus(grid: Grid, island: np.ndarray) -> int:
    """Lowest-numbered generator bus of the island, else its lowest bus."""
    island = np.asarray(island, dtype=int)
    gens = island[grid.gen_p[island] > 0.0]
    pool = gens if gens.size else island
    return int(pool[np.argmin(grid.bus_ids[pool])])


def solve_dc_power_flow(
    grid: Grid,
    injections: np.ndarray | None = None,
    line_mask: np.ndarray | None = None,
) -> FlowState:
    """Per-island DC solve with one pinned reference angle per island.

    Islands whose injections do not balance are reported in
    ``failed_islands`` rather than raising, so the engine can black them out.
    """
    p = grid.injections() if injections is None else np.asarray(injections, float)
    mask = grid.active_lines() if line_mask is None else np.asarray(line_mask, bool)
    labels, islands = connected_components(
        grid.n_bus, grid.from_bus, grid.to_bus, mask, grid.bus_alive
    )
    adm = build_admittance(grid, mask)
    refs = [reference_bus(grid, isl) for isl in islands]
    pinned = list(refs) + np.nonzero(~grid.bus_alive)[0].tolist()
    p_eff = np.where(grid.bus_alive, p, 0.0)
    theta = solve_linear_system(adm.b, p_eff, pinned, check=False)

    resid = adm.b @ theta - p_eff
    failed = []
    for lbl, isl in enumerate(islands):
        r = float(np.max(np.abs(resid[isl])))
        if r > _ISLAND_RESID_TOL * (1.0 + float(np.max(np.abs(p_eff[isl])))):
            failed.append(lbl)
            log.warning("island %d flow solve failed, residual %.3e", lbl, r)
    flow = line_flows(theta, grid, mask)
    return FlowState(
        theta=theta,
        flow=flow,
        island_label=labels,
        islands=islands,
        ref_buses=refs,
        failed_islands=failed,
    )


# ---------------------------------------------------------------------------
# zero-injection reduction
# ---------------------------------------------------------------------------

@dataclass
class ReducedGraph:
    """Nonzero-injection skeleton of a parent graph.

    ``zero_closure`` maps every zero-injection bus to the set of reduced-node
    positions reachable from it through zero-injection buses only; this is
    what decides where a pass-through bus is re-attached after detection.
    """

    nodes: np.ndarray
    p_hat: np.ndarray
    adj: np.ndarray
    zero_nodes: np.ndarray
    zero_closure: dict[int, frozenset[int]]


def reduce_zero_injection(
    node_ids: np.ndarray,
    edges: list[tuple[int, int]],
    injections: np.ndarray,
) -> ReducedGraph:
    """Collapse zero-injection buses, pairwise-connecting their neighbours.

    ``edges`` holds pairs of values from ``node_ids``.  Each connected block
    of zero-injection buses turns into a clique over its nonzero neighbours.
    """
    node_ids = np.asarray(node_ids, dtype=int)
    p = np.asarray(injections, dtype=float)
    zero = np.abs(p) <= _ZERO_INJ_TOL
    nodes = node_ids[~zero]
    pos = {int(b): i for i, b in enumerate(nodes)}
    k = nodes.size
    adj = np.zeros((k, k), dtype=bool)
    zero_set = set(node_ids[zero].tolist())

    neigh: dict[int, list[int]] = {int(b): [] for b in node_ids}
    for u, v in edges:
        if u == v:
            continue
        neigh[u].append(v)
        neigh[v].append(u)

    for u, v in edges:
        if u in pos and v in pos and u != v:
            adj[pos[u], pos[v]] = True
            adj[pos[v], pos[u]] = True

    zero_closure: dict[int, frozenset[int]] = {}
    seen: set[int] = set()
    for z0 in sorted(zero_set):
        if z0 in seen:
            continue
        # flood one block of zero-injection buses
        block = [z0]
        seen.add(z0)
        boundary: set[int] = set()
        queue = deque([z0])
        while queue:
            u = queue.popleft()
            for v in neigh[u]:
                if v in zero_set:
                    if v not in seen:
                        seen.add(v)
                        block.append(v)
                        queue.append(v)
                else:
                    boundary.add(pos[v])
        closure = frozenset(boundary)
        for z in block:
            zero_closure[z] = closure
        for a in boundary:
            for b in boundary:
                if a != b:
                    adj[a, b] = True
    return ReducedGraph(
        nodes=nodes,
        p_hat=p[~zero],
        adj=adj,
        zero_nodes=node_ids[zero],
        zero_closure=zero_closure,
    )

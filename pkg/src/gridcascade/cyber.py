"""Communication network collocated with the power grid.

The SCADA topology is a spanning tree of the power graph rooted near the
control centre.  A configurable number of tree links closest to the control
centre are hardened (Type I); every other link (Type II) shares fate with the
power line it runs along and dies when that line trips.  Nodes sit at buses
and die with them.

Observability is plain reachability: a bus is observable while its node can
still reach the control centre.  Observable buses report their injections and
frequency plus the flow and breaker state of incident lines.  Phase angles
are never measured.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .gridmodel import Grid, FlowState

log = logging.getLogger(__name__)

TYPE_ROBUST = 1
TYPE_COLLOCATED = 2


@dataclass(frozen=True)
class CyberLink:
    u: int
    v: int
    kind: int      # TYPE_ROBUST or TYPE_COLLOCATED
    line_id: int   # collocated power line


@dataclass
class CyberNetwork:
    cc_bus: int
    links: tuple[CyberLink, ...]
    node_alive: np.ndarray
    link_alive: np.ndarray

    def copy(self) -> "CyberNetwork":
        return replace(
            self, node_alive=self.node_alive.copy(), link_alive=self.link_alive.copy()
        )


@dataclass
class MeasurementSnapshot:
    tier: int
    observable: frozenset[int]
    gen_me: dict[int, float]
    load_me: dict[int, float]
    freq_me: dict[int, float]
    breaker_me: dict[int, bool]
    flows_me: dict[int, float]


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def control_center_bus(grid: Grid) -> int:
    """Highest-degree bus of the power graph; ties go to the lowest bus id."""
    deg = np.zeros(grid.n_bus, dtype=int)
    closed = grid.line_closed.nonzero()[0]
    np.add.at(deg, grid.from_bus[closed], 1)
    np.add.at(deg, grid.to_bus[closed], 1)
    return int(np.argmax(deg))  # positions are in ascending bus-id order


def build_scada(grid: Grid, type1_count: int = 10) -> CyberNetwork:
    """Spanning tree over line reactances with hardened links near the CC."""
    cc = control_center_bus(grid)
    order = sorted(
        grid.line_closed.nonzero()[0].tolist(),
        key=lambda k: (grid.x[k], int(grid.from_bus[k]), int(grid.to_bus[k]), k),
    )
    uf = _UnionFind(grid.n_bus)
    tree: list[int] = []
    for k in order:
        if uf.union(int(grid.from_bus[k]), int(grid.to_bus[k])):
            tree.append(k)

    # hop distance from the control centre inside the tree
    adj: dict[int, list[tuple[int, int]]] = {}
    for k in tree:
        u, v = int(grid.from_bus[k]), int(grid.to_bus[k])
        adj.setdefault(u, []).append((v, k))
        adj.setdefault(v, []).append((u, k))
    hop = np.full(grid.n_bus, np.inf)
    hop[cc] = 0
    queue = deque([cc])
    while queue:
        u = queue.popleft()
        for v, _ in adj.get(u, []):
            if np.isinf(hop[v]):
                hop[v] = hop[u] + 1
                queue.append(v)

    ranked = sorted(
        tree,
        key=lambda k: (
            min(hop[int(grid.from_bus[k])], hop[int(grid.to_bus[k])]),
            int(grid.from_bus[k]),
            int(grid.to_bus[k]),
        ),
    )
    robust = set(ranked[: max(0, type1_count)])
    links = tuple(
        CyberLink(
            u=int(grid.from_bus[k]),
            v=int(grid.to_bus[k]),
            kind=TYPE_ROBUST if k in robust else TYPE_COLLOCATED,
            line_id=k,
        )
        for k in tree
    )
    return CyberNetwork(
        cc_bus=cc,
        links=links,
        node_alive=grid.bus_alive.copy(),
        link_alive=np.ones(len(links), dtype=bool),
    )


# ---------------------------------------------------------------------------
# failure propagation and observability
# ---------------------------------------------------------------------------

def propagate_comm_failures(
    cyber: CyberNetwork,
    tripped_lines: set[int] | frozenset[int],
    failed_buses: set[int] | frozenset[int] = frozenset(),
) -> CyberNetwork:
    """Kill Type-II links on tripped lines and nodes at failed buses.

    Type-I links are never failed here; they become unusable only if an
    endpoint node dies, which reachability accounts for.
    """
    out = cyber.copy()
    for i, link in enumerate(out.links):
        if link.kind == TYPE_COLLOCATED and link.line_id in tripped_lines:
            out.link_alive[i] = False
    for b in failed_buses:
        out.node_alive[b] = False
    return out


def observable_set(cyber: CyberNetwork) -> frozenset[int]:
    """Buses whose node still reaches the control centre."""
    if not cyber.node_alive[cyber.cc_bus]:
        return frozenset()
    adj: dict[int, list[int]] = {}
    for i, link in enumerate(cyber.links):
        if (
            cyber.link_alive[i]
            and cyber.node_alive[link.u]
            and cyber.node_alive[link.v]
        ):
            adj.setdefault(link.u, []).append(link.v)
            adj.setdefault(link.v, []).append(link.u)
    seen = {cyber.cc_bus}
    queue = deque([cyber.cc_bus])
    while queue:
        u = queue.popleft()
        for v in adj.get(u, []):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return frozenset(seen)


def extract_snapshot(
    grid: Grid,
    flow: FlowState,
    frequencies: np.ndarray,
    cyber: CyberNetwork,
    tier: int,
) -> MeasurementSnapshot:
    """Everything the control centre can currently see.  No phase angles."""
    obs = observable_set(cyber)
    obs_sorted = sorted(obs)
    gen_me = {b: float(grid.gen_p[b]) for b in obs_sorted}
    load_me = {b: float(grid.load_p[b]) for b in obs_sorted}
    freq_me = {b: float(frequencies[b]) for b in obs_sorted}
    breaker_me: dict[int, bool] = {}
    flows_me: dict[int, float] = {}
    for k in range(grid.n_line):
        u, v = int(grid.from_bus[k]), int(grid.to_bus[k])
        if u in obs or v in obs:
            closed = bool(grid.line_closed[k])
            breaker_me[k] = closed
            if closed:
                flows_me[k] = float(flow.flow[k])
    return MeasurementSnapshot(
        tier=tier,
        observable=obs,
        gen_me=gen_me,
        load_me=load_me,
        freq_me=freq_me,
        breaker_me=breaker_me,
        flows_me=flows_me,
    )

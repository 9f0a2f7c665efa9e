"""Independent reference implementations used to cross-check the package.

Everything here is deliberately written against the plainest possible
algorithm (dense elimination, exhaustive enumeration, breadth-first
search) and shares no code with the library, so a bug has to appear in
both routes at once to slip through a comparison.
"""

from __future__ import annotations

import itertools
from collections import deque

import numpy as np


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def gaussian_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense Gaussian elimination with partial pivoting."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    n = a.shape[0]
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if abs(a[piv, col]) < 1e-12:
            raise np.linalg.LinAlgError("singular pivot")
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            b[[col, piv]] = b[[piv, col]]
        factors = a[col + 1:, col] / a[col, col]
        a[col + 1:] -= np.outer(factors, a[col])
        b[col + 1:] -= factors * b[col]
    x = np.zeros_like(b)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1:] @ x[row + 1:]) / a[row, row]
    return x


def dense_flow_oracle(grid) -> tuple[np.ndarray, np.ndarray]:
    """DC power flow by per-island dense elimination.

    Mirrors the documented reference-bus rule (lowest generator bus, else
    lowest bus) so angles are directly comparable, but builds the island
    system and eliminates it with local code only.
    """
    n = grid.n_bus
    active = grid.active_lines()
    comps = bfs_components(
        n, list(zip(grid.from_bus.tolist(), grid.to_bus.tolist())),
        line_on=active, alive=grid.bus_alive,
    )
    theta = np.zeros(n)
    p = grid.gen_p - grid.load_p
    for comp in comps:
        comp = sorted(comp)
        gens = [b for b in comp if grid.gen_p[b] > 0.0]
        ref = min(gens) if gens else min(comp)
        local = {b: i for i, b in enumerate(comp)}
        k = len(comp)
        bmat = np.zeros((k, k))
        for lid in np.nonzero(active)[0]:
            u, v = int(grid.from_bus[lid]), int(grid.to_bus[lid])
            if u in local and v in local:
                d = 1.0 / grid.x[lid]
                iu, iv = local[u], local[v]
                bmat[iu, iu] += d
                bmat[iv, iv] += d
                bmat[iu, iv] -= d
                bmat[iv, iu] -= d
        keep = [i for i, b in enumerate(comp) if b != ref]
        if keep:
            sol = gaussian_solve(
                bmat[np.ix_(keep, keep)], p[[comp[i] for i in keep]]
            )
            for i, ang in zip(keep, sol):
                theta[comp[i]] = ang
    flow = np.zeros(grid.n_line)
    for lid in np.nonzero(active)[0]:
        u, v = int(grid.from_bus[lid]), int(grid.to_bus[lid])
        flow[lid] = (theta[u] - theta[v]) / grid.x[lid]
    return theta, flow


# ---------------------------------------------------------------------------
# graphs
# ---------------------------------------------------------------------------

def bfs_components(
    n: int,
    edges: list[tuple[int, int]],
    line_on=None,
    alive=None,
) -> list[list[int]]:
    """Connected components over alive buses and switched-on edges."""
    on = np.ones(len(edges), dtype=bool) if line_on is None else np.asarray(line_on)
    ok = np.ones(n, dtype=bool) if alive is None else np.asarray(alive)
    adj: list[list[int]] = [[] for _ in range(n)]
    for k, (u, v) in enumerate(edges):
        if on[k] and ok[u] and ok[v]:
            adj[u].append(v)
            adj[v].append(u)
    seen = [False] * n
    comps = []
    for s in range(n):
        if not ok[s] or seen[s]:
            continue
        comp = [s]
        seen[s] = True
        q = deque([s])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    comp.append(v)
                    q.append(v)
        comps.append(sorted(comp))
    return comps


def bfs_connected(adj: np.ndarray, subset) -> bool:
    """Is the induced subgraph on ``subset`` connected?"""
    idx = sorted(int(i) for i in subset)
    if len(idx) <= 1:
        return True
    inset = set(idx)
    seen = {idx[0]}
    q = deque([idx[0]])
    while q:
        u = q.popleft()
        for v in np.nonzero(adj[u])[0]:
            v = int(v)
            if v in inset and v not in seen:
                seen.add(v)
                q.append(v)
    return len(seen) == len(idx)


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------

def enumerate_lp_vertices(c, a_ub=None, b_ub=None, lb=None, ub=None):
    """Brute-force LP: try every potential vertex, keep the feasible best.

    A vertex of the polytope activates n constraints among the inequality
    rows and the box bounds.  Only usable for small n; that is the point.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    rows = []
    rhs = []
    if a_ub is not None:
        for r, bv in zip(np.atleast_2d(a_ub), np.atleast_1d(b_ub)):
            rows.append(np.asarray(r, float))
            rhs.append(float(bv))
    lo = np.full(n, -np.inf) if lb is None else np.asarray(lb, float)
    hi = np.full(n, np.inf) if ub is None else np.asarray(ub, float)
    for i in range(n):
        if np.isfinite(lo[i]):
            e = np.zeros(n)
            e[i] = -1.0
            rows.append(e)
            rhs.append(-lo[i])
        if np.isfinite(hi[i]):
            e = np.zeros(n)
            e[i] = 1.0
            rows.append(e)
            rhs.append(hi[i])
    rows = np.array(rows)
    rhs = np.array(rhs)
    best = None
    for combo in itertools.combinations(range(len(rows)), n):
        sq = rows[list(combo)]
        try:
            x = np.linalg.solve(sq, rhs[list(combo)])
        except np.linalg.LinAlgError:
            continue
        if np.all(rows @ x <= rhs + 1e-9):
            val = float(c @ x)
            if best is None or val < best[0] - 1e-12:
                best = (val, x)
    return best  # None when infeasible (or unbounded with no vertex)


def exhaustive_binary_ilp(c, a_ub=None, b_ub=None, lb=None, ub=None):
    """Minimise over every binary assignment consistent with the bounds."""
    c = np.asarray(c, dtype=float)
    n = c.size
    lo = np.zeros(n) if lb is None else np.asarray(lb, float)
    hi = np.ones(n) if ub is None else np.asarray(ub, float)
    best = None
    for bits in itertools.product((0.0, 1.0), repeat=n):
        x = np.array(bits)
        if np.any(x < lo - 1e-9) or np.any(x > hi + 1e-9):
            continue
        if a_ub is not None and np.any(
            np.atleast_2d(a_ub) @ x > np.atleast_1d(b_ub) + 1e-9
        ):
            continue
        val = float(c @ x)
        if best is None or val < best[0] - 1e-12:
            best = (val, x)
    return best


def best_single_support(a: np.ndarray, y: np.ndarray, allowed=None):
    """Exhaustive single-column fit: which lone outage explains y best?

    Returns the column index minimising the least-squares residual, or
    None when the empty support already fits better.
    """
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    cols = range(a.shape[1]) if allowed is None else allowed
    best_col = None
    best_res = float(y @ y)
    for j in cols:
        col = a[:, j]
        den = float(col @ col)
        if den < 1e-14:
            continue
        s = float(col @ y) / den
        r = y - col * s
        res = float(r @ r)
        if res < best_res - 1e-12:
            best_res = res
            best_col = j
    return best_col

"""Small hand-built grids and random fixture generators for tests."""

from __future__ import annotations

import numpy as np

from gridcascade.gridmodel import Grid


def make_grid(
    n_bus: int,
    lines: list[tuple[int, int, float]],
    gen: dict[int, float] | None = None,
    load: dict[int, float] | None = None,
    rating: float | list[float] = 99.0,
) -> Grid:
    """Grid from (u, v, x) line triples and sparse gen/load maps."""
    gen_p = np.zeros(n_bus)
    load_p = np.zeros(n_bus)
    for b, p in (gen or {}).items():
        gen_p[b] = p
    for b, p in (load or {}).items():
        load_p[b] = p
    from_bus = np.array([u for u, _, _ in lines], dtype=int)
    to_bus = np.array([v for _, v, _ in lines], dtype=int)
    x = np.array([xv for _, _, xv in lines], dtype=float)
    r = np.full(len(lines), float(rating)) if np.isscalar(rating) \
        else np.asarray(rating, dtype=float)
    return Grid(
        bus_ids=np.arange(n_bus),
        gen_p=gen_p,
        load_p=load_p,
        bus_alive=np.ones(n_bus, dtype=bool),
        from_bus=from_bus,
        to_bus=to_bus,
        x=x,
        rating=r,
        line_closed=np.ones(len(lines), dtype=bool),
    )


def two_bus() -> Grid:
    return make_grid(2, [(0, 1, 0.5)], gen={0: 1.0}, load={1: 1.0})


def four_ring() -> Grid:
    lines = [(0, 1, 0.1), (1, 2, 0.1), (2, 3, 0.1), (3, 0, 0.1)]
    return make_grid(4, lines, gen={0: 1.0}, load={2: 1.0})


def random_connected_grid(
    rng: np.random.Generator,
    n_bus: int,
    extra_lines: int = 3,
    x_range: tuple[float, float] = (0.05, 0.5),
) -> Grid:
    """Random spanning tree plus a few chords, with balanced injections."""
    lines: list[tuple[int, int, float]] = []
    seen_pairs = set()
    order = rng.permutation(n_bus)
    for i in range(1, n_bus):
        u = int(order[i])
        v = int(order[rng.integers(0, i)])
        lines.append((u, v, float(rng.uniform(*x_range))))
        seen_pairs.add((min(u, v), max(u, v)))
    added = 0
    while added < extra_lines:
        u, v = rng.integers(0, n_bus, size=2)
        key = (min(int(u), int(v)), max(int(u), int(v)))
        if u == v or key in seen_pairs:
            continue
        seen_pairs.add(key)
        lines.append((int(u), int(v), float(rng.uniform(*x_range))))
        added += 1
    n_gen = max(1, n_bus // 4)
    gen_buses = rng.choice(n_bus, size=n_gen, replace=False)
    gen = {int(b): float(rng.uniform(0.5, 2.0)) for b in gen_buses}
    load_buses = [b for b in range(n_bus) if b not in gen]
    weights = rng.uniform(0.2, 1.0, size=len(load_buses))
    total_gen = sum(gen.values())
    load = {
        int(b): float(w / weights.sum() * total_gen)
        for b, w in zip(load_buses, weights)
    }
    return make_grid(n_bus, lines, gen=gen, load=load)

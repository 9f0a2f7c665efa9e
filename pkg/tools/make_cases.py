#!/usr/bin/env python3
"""Generate the synthetic benchmark cases committed under cases/.

Two standins with the dimensions of the classic test systems: a 118-bus /
186-branch case and a 2383-bus / 2896-branch case, both with explicit
ratings derived from their own base-case flows (the small case with a wider
margin so cascades unfold over several tiers instead of collapsing at once).
Both are deterministic; rerunning this script reproduces the committed files
byte for byte.

Generation is biased to make cascades interesting: generation clusters in
one region and load in another, so a handful of corridors carry most of the
transfer and bus outages near them overload neighbours.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from gridcascade.caseio import parse_case, to_grid  # noqa: E402
from gridcascade.gridmodel import solve_dc_power_flow  # noqa: E402


def build_topology(
    n: int, m_target: int, rng: np.random.Generator, locality: int
) -> list[tuple[int, int]]:
    """Random connected graph with local extra edges and two parallel pairs."""
    edges: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for i in range(1, n):
        j = int(rng.integers(max(0, i - locality), i))
        edges.append((j, i))
        seen.add((j, i))
    while len(edges) < m_target - 2:
        u = int(rng.integers(0, n - 1))
        v = int(rng.integers(u + 1, min(n, u + 1 + 2 * locality)))
        if u == v or (u, v) in seen:
            continue
        edges.append((u, v))
        seen.add((u, v))
    # two deliberate parallel circuits on early tree edges
    edges.append(edges[0])
    edges.append(edges[2])
    return edges


def make_case(
    n_bus: int,
    m_branch: int,
    n_gen_rows: int,
    n_zero_inj: int,
    load_range: tuple[float, float],
    seed: int,
    locality: int,
    skip_ids: tuple[int, ...] = (),
) -> dict:
    rng = np.random.default_rng(seed)
    edges = build_topology(n_bus, m_branch, rng, locality)

    ids = []
    next_id = 1
    for _ in range(n_bus):
        while next_id in skip_ids:
            next_id += 1
        ids.append(next_id)
        next_id += 1
    ids = np.array(ids)

    # generation clusters at low indices, load grows toward high indices
    zero_inj = set(
        rng.choice(np.arange(n_bus // 4, n_bus), size=n_zero_inj, replace=False)
        .tolist()
    )
    gen_pool = [i for i in range(n_bus) if i not in zero_inj]
    weights = np.array([np.exp(-3.0 * i / n_bus) for i in gen_pool])
    weights /= weights.sum()
    gen_rows_at = rng.choice(
        gen_pool, size=n_gen_rows, replace=False, p=weights
    ).tolist()
    # one duplicated generator bus: two units at the same plant
    gen_rows_at.append(gen_rows_at[0])
    gen_rows_at.sort()

    load = np.zeros(n_bus)
    for i in range(n_bus):
        if i in zero_inj:
            continue
        if rng.random() < 0.62:
            lo, hi = load_range
            scale = 0.5 + 1.5 * i / n_bus
            load[i] = float(np.round(rng.uniform(lo, hi) * scale, 1))

    gen_status = np.ones(len(gen_rows_at), dtype=int)
    off = rng.choice(len(gen_rows_at), size=max(1, len(gen_rows_at) // 12),
                     replace=False)
    gen_status[off] = 0
    base_pg = rng.uniform(0.5, 1.5, size=len(gen_rows_at))
    base_pg[rng.choice(len(gen_rows_at), size=2, replace=False)] = 0.0
    on = gen_status == 1
    target = 1.03 * load.sum()
    base_pg[on] *= target / max(base_pg[on].sum(), 1e-9)
    pg = np.round(base_pg, 2)

    x = np.round(np.exp(rng.normal(np.log(0.06), 0.55, size=len(edges))), 5)
    x = np.clip(x, 0.005, 0.5)
    branch_status = np.ones(len(edges), dtype=int)
    branch_status[rng.integers(0, len(edges))] = 0  # one out-of-service circuit

    gen_bus_set = {ids[i] for i in gen_rows_at}
    slack = min(gen_bus_set)
    bus_type = np.ones(n_bus, dtype=int)
    for i in range(n_bus):
        if ids[i] in gen_bus_set:
            bus_type[i] = 2
    bus_type[np.nonzero(ids == slack)[0][0]] = 3

    return {
        "ids": ids,
        "bus_type": bus_type,
        "load": load,
        "gen_rows_at": gen_rows_at,
        "pg": pg,
        "gen_status": gen_status,
        "edges": edges,
        "x": x,
        "branch_status": branch_status,
    }


def render_case(name: str, case: dict, rate_a: np.ndarray | None) -> str:
    ids = case["ids"]
    lines = [
        f"function mpc = {name}",
        f"%% synthetic benchmark case: {ids.size} buses,"
        f" {len(case['edges'])} branches",
        "mpc.version = '2';",
        "mpc.baseMVA = 100;",
        "",
        "%% bus data",
        "%  bus_i  type  Pd  Qd  Gs  Bs  area  Vm  Va  baseKV  zone  Vmax  Vmin",
        "mpc.bus = [",
    ]
    for i, bid in enumerate(ids):
        lines.append(
            f"\t{bid}\t{case['bus_type'][i]}\t{case['load'][i]:.1f}\t0\t0\t0"
            f"\t1\t1\t0\t138\t1\t1.06\t0.94;"
        )
    lines.append("];")
    lines.append("")
    lines.append("%% generator data")
    lines.append("%  bus  Pg  Qg  Qmax  Qmin  Vg  mBase  status  Pmax  Pmin")
    lines.append("mpc.gen = [")
    for j, i in enumerate(case["gen_rows_at"]):
        pg = case["pg"][j]
        lines.append(
            f"\t{ids[i]}\t{pg:.2f}\t0\t300\t-300\t1\t100"
            f"\t{case['gen_status'][j]}\t{max(pg * 1.2, 50):.2f}\t0;"
        )
    lines.append("];")
    lines.append("")
    lines.append("%% branch data")
    lines.append(
        "%  fbus  tbus  r  x  b  rateA  rateB  rateC  ratio  angle  status"
        "  angmin  angmax"
    )
    lines.append("mpc.branch = [")
    for k, (u, v) in enumerate(case["edges"]):
        ra = 0.0 if rate_a is None else rate_a[k]
        lines.append(
            f"\t{ids[u]}\t{ids[v]}\t0\t{case['x'][k]:.5f}\t0\t{ra:.1f}\t0\t0"
            f"\t0\t0\t{case['branch_status'][k]}\t-360\t360;"
        )
    lines.append("];")
    lines.append("")
    return "\n".join(lines)


def derive_ratings(
    text: str,
    rng: np.random.Generator,
    mult_range: tuple[float, float] = (1.15, 1.6),
    floor_pct: float = 20.0,
) -> np.ndarray:
    """Ratings from the case's own balanced base flows, with jitter.

    The multiplier spread leaves some corridors tight so bus outages can
    start multi-tier cascades without collapsing every seed.
    """
    case = parse_case_text(text)
    grid = to_grid(case)
    total_g, total_l = grid.gen_p.sum(), grid.load_p.sum()
    if total_g > total_l:
        grid.gen_p *= total_l / total_g
    else:
        grid.load_p *= total_g / total_l
    flow = solve_dc_power_flow(grid)
    mw = np.abs(flow.flow) * grid.base_mva
    floor = max(np.percentile(mw[mw > 0], floor_pct), 5.0)
    mult = rng.uniform(*mult_range, size=mw.size)
    return np.round(np.maximum(mw * mult, floor), 1)


def parse_case_text(text: str):
    import tempfile

    with tempfile.NamedTemporaryFile("w", suffix=".m", delete=False) as fh:
        fh.write(text)
        name = fh.name
    try:
        return parse_case(name)
    finally:
        Path(name).unlink()


def main() -> None:
    out = ROOT / "cases"
    out.mkdir(exist_ok=True)

    small = make_case(
        n_bus=118, m_branch=186, n_gen_rows=53, n_zero_inj=10,
        load_range=(15.0, 120.0), seed=20260815, locality=9,
        skip_ids=(13,),
    )
    text = render_case("case118", small, None)
    ratings = derive_ratings(
        text, np.random.default_rng(20260818), mult_range=(1.35, 2.3),
        floor_pct=30.0,
    )
    (out / "case118.m").write_text(render_case("case118", small, ratings))

    big = make_case(
        n_bus=2383, m_branch=2896, n_gen_rows=326, n_zero_inj=150,
        load_range=(4.0, 40.0), seed=20260816, locality=14,
    )
    text = render_case("case2383", big, None)
    ratings = derive_ratings(text, np.random.default_rng(20260817))
    (out / "case2383.m").write_text(render_case("case2383", big, ratings))
    print("wrote", out / "case118.m", "and", out / "case2383.m")


if __name__ == "__main__":
    main()

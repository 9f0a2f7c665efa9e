"""Case-file parsing, per-unit conversion and result serialisation.

The input format is the MATPOWER-style text layout: ``mpc.<table> = [...]``
matrices with ``%`` comments.  Only the columns this package consumes are
interpreted (bus id/type/Pd, gen bus/Pg/status, branch from/to/x/rateA/
status); everything else is carried through the parser untouched and
ignored.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .gridmodel import Grid

log = logging.getLogger(__name__)

CONTROL_MODES = (
    "none",
    "perfect",
    "proposed",
    "breaker-only-closed",
    "breaker-only-open",
)

METRIC_COLUMNS = (
    "trial",
    "tier",
    "islands_true",
    "islands_detected",
    "island_accuracy",
    "false_alarm_pct",
    "miss_pct",
    "load_served_pu",
)


class CaseFormatError(ValueError):
    """Malformed or inconsistent case text."""


# ---------------------------------------------------------------------------
# case file
# ---------------------------------------------------------------------------

@dataclass
class CaseFile:
    base_mva: float
    bus_id: np.ndarray
    bus_type: np.ndarray
    load_p: np.ndarray      # MW
    gen_bus: np.ndarray
    gen_p: np.ndarray       # MW
    gen_status: np.ndarray
    branch_from: np.ndarray
    branch_to: np.ndarray
    branch_x: np.ndarray
    branch_rate_a: np.ndarray  # MVA, 0 means "not given"
    branch_status: np.ndarray

    @property
    def n_bus(self) -> int:
        return self.bus_id.size

    @property
    def n_branch(self) -> int:
        return self.branch_from.size

    @property
    def n_gen(self) -> int:
        return self.gen_bus.size


_MATRIX_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[", re.MULTILINE)
_SCALAR_RE = re.compile(r"mpc\.baseMVA\s*=\s*([0-9eE+.\-]+)\s*;")


def _strip_comments(text: str) -> str:
    out = []
    for line in text.splitlines():
        cut = line.find("%")
        out.append(line if cut < 0 else line[:cut])
    return "\n".join(out)


def _parse_matrix(name: str, body: str) -> np.ndarray:
    rows = []
    width = None
    for chunk in body.replace("\n", ";").split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            row = [float(v) for v in chunk.split()]
        except ValueError as exc:
            raise CaseFormatError(f"table {name!r}: bad value in row {chunk!r}") from exc
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise CaseFormatError(
                f"table {name!r}: row has {len(row)} columns, expected {width}"
            )
        rows.append(row)
    if not rows:
        raise CaseFormatError(f"table {name!r} is empty")
    return np.array(rows)


def parse_case(path: str | Path) -> CaseFile:
    """Parse a case file; raises CaseFormatError on structural problems."""
    text = _strip_comments(Path(path).read_text())
    m = _SCALAR_RE.search(text)
    if m is None:
        raise CaseFormatError("missing mpc.baseMVA")
    base_mva = float(m.group(1))
    if base_mva <= 0:
        raise CaseFormatError(f"baseMVA must be positive, got {base_mva}")

    tables: dict[str, np.ndarray] = {}
    for match in _MATRIX_RE.finditer(text):
        name = match.group(1)
        end = text.find("];", match.end())
        if end < 0:
            raise CaseFormatError(f"table {name!r} not terminated with '];'")
        tables[name] = _parse_matrix(name, text[match.end():end])

    for required in ("bus", "gen", "branch"):
        if required not in tables:
            raise CaseFormatError(f"missing table mpc.{required}")
    bus, gen, branch = tables["bus"], tables["gen"], tables["branch"]
    if bus.shape[1] < 3:
        raise CaseFormatError("bus table needs at least (id, type, Pd) columns")
    if gen.shape[1] < 8:
        raise CaseFormatError("gen table needs at least 8 columns (through status)")
    if branch.shape[1] < 11:
        raise CaseFormatError("branch table needs at least 11 columns (through status)")

    bus_id = bus[:, 0].astype(int)
    if np.unique(bus_id).size != bus_id.size:
        raise CaseFormatError("duplicate bus ids")
    known = set(bus_id.tolist())
    for b in gen[:, 0].astype(int):
        if b not in known:
            raise CaseFormatError(f"generator references unknown bus {b}")
    for u, v in branch[:, :2].astype(int):
        if u not in known or v not in known:
            raise CaseFormatError(f"branch references unknown bus ({u}, {v})")
    status = branch[:, 10]
    in_service = status != 0
    if np.any(branch[in_service, 3] <= 0):
        bad = branch[in_service][branch[in_service, 3] <= 0][0]
        raise CaseFormatError(
            f"in-service branch ({int(bad[0])}, {int(bad[1])}) has x <= 0"
        )

    return CaseFile(
        base_mva=base_mva,
        bus_id=bus_id,
        bus_type=bus[:, 1].astype(int),
        load_p=bus[:, 2].astype(float),
        gen_bus=gen[:, 0].astype(int),
        gen_p=gen[:, 1].astype(float),
        gen_status=gen[:, 7].astype(int),
        branch_from=branch[:, 0].astype(int),
        branch_to=branch[:, 1].astype(int),
        branch_x=branch[:, 3].astype(float),
        branch_rate_a=branch[:, 5].astype(float),
        branch_status=status.astype(int),
    )


def to_grid(case: CaseFile) -> Grid:
    """Per-unit Grid with positional bus indices.

    Total generation and total load are carried over exactly as given; any
    rebalancing is the engine's concern, not the parser's.
    """
    order = np.argsort(case.bus_id, kind="stable")
    bus_ids = case.bus_id[order]
    index_of = {int(b): i for i, b in enumerate(bus_ids)}

    load = case.load_p[order] / case.base_mva
    gen = np.zeros(case.n_bus)
    for b, p, st in zip(case.gen_bus, case.gen_p, case.gen_status):
        if st != 0:
            gen[index_of[int(b)]] += p / case.base_mva

    f = np.array([index_of[int(b)] for b in case.branch_from], dtype=int)
    t = np.array([index_of[int(b)] for b in case.branch_to], dtype=int)
    return Grid(
        bus_ids=bus_ids,
        gen_p=gen,
        load_p=load,
        bus_alive=np.ones(case.n_bus, dtype=bool),
        from_bus=f,
        to_bus=t,
        x=case.branch_x.astype(float),
        rating=case.branch_rate_a / case.base_mva,
        line_closed=case.branch_status != 0,
        base_mva=case.base_mva,
    )


def apply_rating_fallback(grid: Grid, base_flow: np.ndarray, factor: float) -> np.ndarray:
    """Fill in missing line ratings from base-case loadings.

    Lines with a positive ``rate_a`` keep it.  The rest get ``factor`` times
    their base-case absolute flow, floored at the 10th percentile of the
    nonzero ratings so lightly loaded lines do not end up with a near-zero
    limit.
    When the case carries no ratings at all, the floor falls back to the same
    percentile of the synthesised values.
    """
    rating = grid.rating.copy()
    missing = rating <= 0.0
    if not missing.any():
        return rating
    synth = factor * np.abs(base_flow[missing])
    given = rating[~missing]
    if given.size:
        floor = float(np.percentile(given, 10))
    else:
        positive = synth[synth > 0]
        floor = float(np.percentile(positive, 10)) if positive.size else 0.0
    rating[missing] = np.maximum(synth, floor)
    return rating


# ---------------------------------------------------------------------------
# experiment configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    case_path: str
    initial_outage_fraction: float = 0.01
    n_trials: int = 1
    rng_seed: int = 0
    type1_link_count: int = 10
    control_mode: str = "none"
    lasso_lambda: float | None = None
    lasso_tol: float | None = None
    rating_fallback_factor: float = 1.3

    def __post_init__(self) -> None:
        if self.control_mode not in CONTROL_MODES:
            raise ValueError(
                f"control_mode must be one of {CONTROL_MODES}, got {self.control_mode!r}"
            )
        if not (0.0 < self.initial_outage_fraction <= 1.0):
            raise ValueError("initial_outage_fraction must be in (0, 1]")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if path.suffix == ".toml":
        import tomllib

        data = tomllib.loads(path.read_text())
    else:
        data = json.loads(path.read_text())
    allowed = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "case_path" not in data:
        raise ValueError("config must set case_path")
    if not Path(data["case_path"]).is_absolute():
        data["case_path"] = str((path.parent / data["case_path"]).resolve())
    return ExperimentConfig(**data)


# ---------------------------------------------------------------------------
# metrics output
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return format(value, ".10g")
    return str(value)


def write_metrics(records: list[dict], path: str | Path) -> None:
    """Write per-(trial, tier) metric rows as CSV; header is always emitted."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for rec in records:
            writer.writerow([_fmt(rec.get(col)) for col in METRIC_COLUMNS])

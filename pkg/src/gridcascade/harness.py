"""Monte-Carlo experiment harness.

Runs batches of cascades from spawned child seeds, pools the raw per-tier
records into the reported statistics, and shapes them for the CSV and JSON
outputs.  Percentages are pooled from counts across trials rather than
averaging per-trial percentages, so tiers with little data do not get equal
weight with tiers that have plenty.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .caseio import ExperimentConfig, parse_case, to_grid
from .engine import CascadeMetrics, EngineParams, IslandReport, run_cascade

log = logging.getLogger(__name__)

QUARTILE_POINTS = (0, 25, 50, 75, 100)


@dataclass
class TrialResult:
    trial: int
    mode: str
    metrics: CascadeMetrics | None = None
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.metrics is not None


@dataclass
class AccuracyStats:
    """Pooled exact-match island accuracy, split by observability."""

    high_correct: int = 0
    high_attempts: int = 0
    low_correct: int = 0
    low_attempts: int = 0
    excluded: int = 0
    nonzero_correct: int = 0

    def add(self, report: IslandReport) -> None:
        if report.stratum == "high":
            self.high_attempts += 1
            self.high_correct += report.matched
        elif report.stratum == "low":
            self.low_attempts += 1
            self.low_correct += report.matched
        else:
            self.excluded += 1
            return
        self.nonzero_correct += report.matched_nonzero

    @property
    def attempts(self) -> int:
        return self.high_attempts + self.low_attempts

    @property
    def correct(self) -> int:
        return self.high_correct + self.low_correct

    def pct(self, correct: int, attempts: int) -> float | None:
        return 100.0 * correct / attempts if attempts else None

    def as_dict(self) -> dict:
        return {
            "high_pct": self.pct(self.high_correct, self.high_attempts),
            "low_pct": self.pct(self.low_correct, self.low_attempts),
            "total_pct": self.pct(self.correct, self.attempts),
            "nonzero_match_pct": self.pct(self.nonzero_correct, self.attempts),
            "high_attempts": self.high_attempts,
            "low_attempts": self.low_attempts,
            "excluded": self.excluded,
        }


def run_trials(
    config: ExperimentConfig,
    params: EngineParams | None = None,
    grid=None,
) -> list[TrialResult]:
    """Run the configured number of independent cascades.

    Each trial draws its generator from a spawned child of the root seed, so
    results are reproducible per trial and modes can be compared pair-wise
    by reusing the same root seed.  A trial that raises is recorded as
    failed and the batch keeps going.
    """
    if grid is None:
        grid = to_grid(parse_case(config.case_path))
    children = np.random.SeedSequence(config.rng_seed).spawn(config.n_trials)
    results: list[TrialResult] = []
    for t in range(config.n_trials):
        rng = np.random.default_rng(children[t])
        try:
            metrics = run_cascade(config, grid=grid, rng=rng, params=params)
            results.append(TrialResult(trial=t, mode=config.control_mode,
                                       metrics=metrics))
        except Exception as exc:  # noqa: BLE001 - trial isolation is the point
            log.exception("trial %d failed", t)
            results.append(TrialResult(trial=t, mode=config.control_mode,
                                       error=f"{type(exc).__name__}: {exc}"))
    return results


# ---------------------------------------------------------------------------
# pooled statistics
# ---------------------------------------------------------------------------

def compute_island_accuracy(reports: list[IslandReport]) -> AccuracyStats:
    stats = AccuracyStats()
    for rep in reports:
        stats.add(rep)
    return stats


def compute_line_stats(
    true_out: frozenset[int] | set[int],
    detected_out: frozenset[int] | set[int],
    unobserved_healthy: frozenset[int] | set[int],
) -> tuple[float, float]:
    """(false_alarm_pct, miss_pct) for one detection attempt.

    Misses are true outages not detected, over all true outages; false
    alarms are detections on healthy lines, over all unobserved healthy
    lines.  Empty denominators score zero.
    """
    true_out, detected_out = set(true_out), set(detected_out)
    miss = (
        100.0 * len(true_out - detected_out) / len(true_out) if true_out else 0.0
    )
    fa = (
        100.0 * len(detected_out - true_out) / len(unobserved_healthy)
        if unobserved_healthy else 0.0
    )
    return fa, miss


@dataclass
class _LinePool:
    missed: int = 0
    true: int = 0
    false: int = 0
    healthy: int = 0

    def add(self, rep) -> None:
        self.missed += len(rep.true_out - rep.detected)
        self.true += len(rep.true_out)
        self.false += len(rep.detected - rep.true_out)
        self.healthy += len(rep.unobserved_closed)

    @property
    def miss_pct(self) -> float:
        return 100.0 * self.missed / self.true if self.true else 0.0

    @property
    def false_alarm_pct(self) -> float:
        return 100.0 * self.false / self.healthy if self.healthy else 0.0

    def as_dict(self) -> dict:
        return {
            "miss_pct": self.miss_pct,
            "false_alarm_pct": self.false_alarm_pct,
            "true_outages": self.true,
            "unobserved_healthy": self.healthy,
        }


def pooled_line_stats(results: list[TrialResult]) -> dict[int, _LinePool]:
    """Pool localisation counts per line-outage estimation step.

    Step k aggregates, across trials, the k-th estimation record taken after
    lines started tripping.  The record produced right after the initial bus
    outage is skipped: no overload trips exist yet, so the only "outages" in
    scope are dead-end stubs of failed buses that carry no flow in either
    the believed or the true model and are undetectable in principle.  Only
    tiers where estimation ran are counted.
    """
    pools: dict[int, _LinePool] = {}
    for res in results:
        if not res.ok:
            continue
        est_tiers = [t for t in res.metrics.tiers if t.estimation_ran]
        for step, rec in enumerate(est_tiers[1:], start=1):
            pool = pools.setdefault(step, _LinePool())
            for rep in rec.line_reports:
                pool.add(rep)
    return pools


def line_trend(pools: dict[int, _LinePool]) -> list[tuple[int, float, float]]:
    """(step, miss%, false-alarm%) rows up to the last step with outages.

    Steps whose pool holds no true outages have an undefined miss rate and
    would read as spurious zeros, so the trend stops before them.
    """
    last = 0
    for step in sorted(pools):
        if pools[step].true > 0:
            last = step
    return [
        (step, pools[step].miss_pct, pools[step].false_alarm_pct)
        for step in sorted(pools)
        if step <= last
    ]


def metrics_rows(results: list[TrialResult]) -> list[dict]:
    """Flatten trial histories into per-(trial, tier) CSV rows."""
    rows: list[dict] = []
    for res in results:
        if not res.ok:
            continue
        for rec in res.metrics.tiers:
            acc = compute_island_accuracy(rec.island_reports)
            pool = _LinePool()
            for rep in rec.line_reports:
                pool.add(rep)
            if rec.estimation_ran:
                accuracy = acc.pct(acc.correct, acc.attempts)
                fa, miss = pool.false_alarm_pct, pool.miss_pct
                detected = rec.islands_detected
            else:
                accuracy, fa, miss, detected = None, None, None, None
            rows.append(
                {
                    "trial": res.trial,
                    "tier": rec.tier,
                    "islands_true": rec.islands_true,
                    "islands_detected": detected,
                    "island_accuracy": accuracy,
                    "false_alarm_pct": fa,
                    "miss_pct": miss,
                    "load_served_pu": rec.load_served,
                }
            )
    return rows


def _quartiles(values: list[float]) -> dict[str, float] | None:
    if not values:
        return None
    pts = np.percentile(np.asarray(values, dtype=float), QUARTILE_POINTS)
    return {
        "min": float(pts[0]),
        "q1": float(pts[1]),
        "median": float(pts[2]),
        "q3": float(pts[3]),
        "max": float(pts[4]),
    }


def summarize(results: list[TrialResult]) -> dict:
    """Quartile table plus pooled accuracy and localisation statistics."""
    by_mode: dict[str, list[TrialResult]] = {}
    for res in results:
        by_mode.setdefault(res.mode, []).append(res)

    modes = {}
    for mode, group in sorted(by_mode.items()):
        served = [r.metrics.final_load_served for r in group if r.ok]
        modes[mode] = {
            "trials": len(group),
            "failed": sum(1 for r in group if not r.ok),
            "load_served": _quartiles(served),
            "mean_tiers": (
                float(np.mean([r.metrics.n_tiers for r in group if r.ok]))
                if served else None
            ),
        }

    accuracy = AccuracyStats()
    acc_by_group: dict[str, AccuracyStats] = {
        "tier1": AccuracyStats(), "tier2": AccuracyStats(), "final": AccuracyStats()
    }
    for res in results:
        if not res.ok:
            continue
        est_tiers = [t for t in res.metrics.tiers if t.estimation_ran]
        for rec in est_tiers:
            for rep in rec.island_reports:
                accuracy.add(rep)
        if est_tiers:
            for rep in est_tiers[0].island_reports:
                acc_by_group["tier1"].add(rep)
            if len(est_tiers) > 1:
                for rep in est_tiers[1].island_reports:
                    acc_by_group["tier2"].add(rep)
            for rep in est_tiers[-1].island_reports:
                acc_by_group["final"].add(rep)

    return {
        "modes": modes,
        "island_accuracy": accuracy.as_dict(),
        "island_accuracy_by_tier": {
            k: v.as_dict() for k, v in acc_by_group.items()
        },
        "line_stats_by_step": {
            str(k): v.as_dict() for k, v in pooled_line_stats(results).items()
        },
    }

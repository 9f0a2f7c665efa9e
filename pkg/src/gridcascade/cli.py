"""Command line entry points.

``cascade run`` executes a batch of trials from a config file and writes the
per-tier metrics CSV (plus an optional JSON summary); ``cascade report``
condenses an existing metrics CSV.  A separate ``solver selftest`` entry
point exercises the optimisation stack against hand-checkable problems,
which is handy when triaging a bad environment.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .caseio import CONTROL_MODES, load_config, write_metrics
from .engine import EngineParams
from .harness import metrics_rows, run_trials, summarize

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_TRIAL_FAILED = 2


def _build_run_parser(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("run", help="run cascade trials from a config file")
    p.add_argument("--config", required=True, help="JSON or TOML config path")
    p.add_argument("--mode", choices=CONTROL_MODES, help="override control mode")
    p.add_argument("--trials", type=int, help="override trial count")
    p.add_argument("--seed", type=int, help="override root RNG seed")
    p.add_argument("--out", default="metrics.csv", help="metrics CSV path")
    p.add_argument("--summary", help="also write a JSON summary here")
    p.add_argument(
        "--dump-snapshots", action="store_true",
        help="write per-tier island/trip traces next to the CSV",
    )
    p.add_argument(
        "--dump-estimation", action="store_true",
        help="write per-tier estimation scoring next to the CSV",
    )


def _build_report_parser(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("report", help="summarise an existing metrics CSV")
    p.add_argument("--in", dest="infile", required=True, help="metrics CSV path")
    p.add_argument("--out", required=True, help="summary JSON path")


def _dump_snapshots(results, path: Path) -> None:
    with open(path, "w") as fh:
        for res in results:
            if not res.ok:
                continue
            for rec in res.metrics.tiers:
                fh.write(json.dumps({
                    "trial": res.trial,
                    "tier": rec.tier,
                    "islands": [sorted(s) for s in rec.island_sets],
                    "frequencies": rec.island_frequencies,
                    "tripped": list(rec.tripped),
                    "load_served_pu": rec.load_served,
                    "blackouts": rec.blackouts,
                }) + "\n")


def _dump_estimation(results, path: Path) -> None:
    with open(path, "w") as fh:
        for res in results:
            if not res.ok:
                continue
            for rec in res.metrics.tiers:
                if not rec.estimation_ran:
                    continue
                fh.write(json.dumps({
                    "trial": res.trial,
                    "tier": rec.tier,
                    "islands_detected": rec.islands_detected,
                    "islands": [
                        {
                            "size": len(rep.buses),
                            "stratum": rep.stratum,
                            "matched": rep.matched,
                            "matched_nonzero": rep.matched_nonzero,
                        }
                        for rep in rec.island_reports
                    ],
                    "lines": [
                        {
                            "true_out": sorted(rep.true_out),
                            "detected": sorted(rep.detected),
                            "unobserved_healthy": len(rep.unobserved_closed),
                        }
                        for rep in rec.line_reports
                    ],
                }) + "\n")


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    overrides = {}
    if args.mode is not None:
        overrides["control_mode"] = args.mode
    if args.trials is not None:
        overrides["n_trials"] = args.trials
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    if overrides:
        from dataclasses import replace

        config = replace(config, **overrides)

    params = EngineParams(
        lasso_lambda=config.lasso_lambda, lasso_tol=config.lasso_tol
    )
    results = run_trials(config, params=params)
    out = Path(args.out)
    write_metrics(metrics_rows(results), out)
    print(f"wrote {out}")

    if args.dump_snapshots:
        _dump_snapshots(results, out.with_suffix(".snapshots.jsonl"))
    if args.dump_estimation:
        _dump_estimation(results, out.with_suffix(".estimation.jsonl"))
    if args.summary:
        with open(args.summary, "w") as fh:
            json.dump(summarize(results), fh, indent=2)
        print(f"wrote {args.summary}")

    failed = [r for r in results if not r.ok]
    ok = [r for r in results if r.ok]
    if ok:
        served = sorted(r.metrics.final_load_served for r in ok)
        median = served[len(served) // 2]
        print(
            f"mode={config.control_mode} trials={len(results)} "
            f"failed={len(failed)} median_load_served={median:.4f}"
        )
    for r in failed:
        print(f"trial {r.trial} failed: {r.error}", file=sys.stderr)
    return EXIT_TRIAL_FAILED if failed else EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    rows = []
    with open(args.infile, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(row)
    by_trial: dict[str, list[dict]] = {}
    for row in rows:
        by_trial.setdefault(row["trial"], []).append(row)

    def fvals(key: str) -> list[float]:
        return [float(r[key]) for r in rows if r.get(key)]

    final_load = []
    for trial_rows in by_trial.values():
        trial_rows.sort(key=lambda r: int(r["tier"]))
        final_load.append(float(trial_rows[-1]["load_served_pu"]))
    pct = (
        dict(zip(("min", "q1", "median", "q3", "max"),
                 np.percentile(final_load, (0, 25, 50, 75, 100)).tolist()))
        if final_load else None
    )
    summary = {
        "trials": len(by_trial),
        "rows": len(rows),
        "final_load_served": pct,
        # row-level means: the CSV carries percentages, not raw counts
        "mean_island_accuracy": float(np.mean(fvals("island_accuracy")))
        if fvals("island_accuracy") else None,
        "mean_miss_pct": float(np.mean(fvals("miss_pct")))
        if fvals("miss_pct") else None,
        "mean_false_alarm_pct": float(np.mean(fvals("false_alarm_pct")))
        if fvals("false_alarm_pct") else None,
    }
    with open(args.out, "w") as fh:
        json.dump(summary, fh, indent=2)
    print(f"wrote {args.out}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = argparse.ArgumentParser(
        prog="cascade",
        description="cascading-failure simulation with partial observability",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _build_run_parser(sub)
    _build_report_parser(sub)
    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "report":
        return _cmd_report(args)
    parser.error(f"unknown command {args.command!r}")
    return 1


# ---------------------------------------------------------------------------
# solver selftest
# ---------------------------------------------------------------------------

def _selftest() -> int:
    from .solvers import (
        IlpProblem, LassoProblem, LpProblem,
        solve_constrained_lasso, solve_ilp, solve_linear_system, solve_lp,
    )

    failures = 0

    def check(name: str, cond: bool) -> None:
        nonlocal failures
        print(f"{'PASS' if cond else 'FAIL'}  {name}")
        failures += 0 if cond else 1

    lp = solve_lp(LpProblem(
        c=np.array([-1.0, -2.0]),
        a_ub=np.array([[1.0, 1.0], [1.0, 0.0]]),
        b_ub=np.array([4.0, 3.0]),
    ))
    check("lp corner optimum", lp.optimal and abs(lp.objective + 8.0) < 1e-9)

    ilp = solve_ilp(IlpProblem(
        c=np.array([-5.0, -4.0]),
        a_ub=np.array([[6.0, 4.0], [1.0, 2.0]]),
        b_ub=np.array([24.0, 6.0]),
        lb=np.zeros(2), ub=np.full(2, 10.0),
    ))
    check("ilp rounding gap", ilp.status == "optimal"
          and abs(ilp.objective + 20.0) < 1e-9)

    rng = np.random.default_rng(7)
    a = rng.normal(size=(30, 8))
    s_true = np.zeros(8)
    s_true[3] = 2.0
    res = solve_constrained_lasso(LassoProblem(a=a, y=a @ s_true, lam=1e-4))
    check("lasso support recovery",
          res.converged and int(np.argmax(np.abs(res.s))) == 3)

    lap = np.array([[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
    x = solve_linear_system(lap, np.array([1.0, -0.5, -0.5]), pinned=[0])
    check("pinned laplacian solve", abs(x[0]) < 1e-12)

    print("selftest:", "ok" if failures == 0 else f"{failures} failures")
    return 0 if failures == 0 else 1


def solver_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="solver")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("selftest", help="run built-in optimisation checks")
    args = parser.parse_args(argv)
    if args.command == "selftest":
        return _selftest()
    return 1


if __name__ == "__main__":
    raise SystemExit(main())

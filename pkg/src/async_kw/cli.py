"""Command line entry point: ``async-kw run | validate-schedule | regress``.

Exit codes: 0 success, 1 malformed input, 2 invariant breach or regression
mismatch, 3 iterate escaped the declared ball.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import diagnostics as diag
from . import records
from .engine import (
    EngineError,
    EscapedBall,
    SimConfig,
    UnvalidatedSchedule,
    ownership_breaches,
    run,
    run_batch,
)
from .objectives import NoiseModel, NonStrictConcavity, beta_lower_bound, pseudo_huber
from .reference import kiefer_wolfowitz, simultaneous_perturbation
from .schedules import PowerLawSchedule

log = logging.getLogger("async_kw")

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT, EXIT_ESCAPED = 0, 1, 2, 3
REGRESS_CYCLES = 1000


def _run_chunk(config_text, seeds, record_events):
    cfg = cfgmod.loads(config_text)
    return run_batch(
        cfg.sim,
        seeds,
        allow_unvalidated=True,
        record_events=record_events,
        check_ownership=True,
    )


def _simulate(cfg, jobs):
    seeds = cfg.seeds()
    jobs = max(1, min(jobs, len(seeds)))
    if jobs == 1:
        return _run_chunk(cfgmod.dumps(cfg), seeds, cfg.emit_event_log)
    text = cfgmod.dumps(cfg)
    chunks = [seeds[i::jobs] for i in range(jobs)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_run_chunk, [text] * jobs, chunks, [cfg.emit_event_log] * jobs))
    by_seed = {t.seed: t for part in parts for t in part}
    return [by_seed[s] for s in seeds]


def _verdicts(traj, obj, cfg):
    thr = cfg.thresholds
    try:
        m = diag.martingale_sums(diag.bias_report(traj, obj), thr.martingale_oscillation_frac)
        mart = {
            "verdict": m.verdict,
            "oscillation": m.oscillation,
            "total_range": m.total_range,
            "kappa_tail": m.kappa_tail,
        }
    except diag.InsufficientData:
        mart = {"verdict": "insufficient data"}
    try:
        sb = diag.small_ball_report(traj, cfg.delta, thr.c_decay_quantile)
        ball = {
            "verdict": sb.verdict,
            "first_quarter_quantile": sb.first_quantile,
            "last_quarter_quantile": sb.last_quantile,
            "last_quarter_max": sb.last_max,
            "n_cycles_inside": int(sb.cycles.size),
        }
    except diag.InsufficientData:
        ball = {"verdict": "insufficient data"}
    return mart, ball


def _finite(v):
    return None if v is None or not math.isfinite(v) else float(v)


def summarize(cfg, trajectories, beta, wall_time):
    obj, noise = cfg.sim.objective, cfg.sim.noise
    N = cfg.sim.n_cycles
    reps = []
    for r, traj in enumerate(trajectories):
        u = traj.u
        mart, ball = _verdicts(traj, obj, cfg)
        drift = traj.drift_ratio
        reps.append(
            {
                "replication": r,
                "seed": traj.seed,
                "final_u": float(u[-1]),
                "u_at_100": float(u[100]) if N >= 100 else None,
                "min_u": float(u.min()),
                "max_drift_ratio": float(drift.max()) if drift.size else None,
                "drift_ratio_spread": diag.drift_ratio_spread(traj) if N > 10 else None,
                "gradient_bound_violations": diag.gradient_bound_violations(traj, obj, noise),
                "martingale": mart,
                "c_decay": ball,
            }
        )
    R = len(reps)
    need = math.ceil(cfg.thresholds.pass_fraction * R)
    mart_pass = sum(r["martingale"]["verdict"] == "consistent" for r in reps)
    ball_pass = sum(r["c_decay"]["verdict"] == "decaying" for r in reps)
    descended = sum(r["u_at_100"] is not None and r["final_u"] < r["u_at_100"] for r in reps)
    return {
        "schema_version": records.SCHEMA_VERSION,
        "config": cfgmod.to_dict(cfg),
        "beta": beta,
        "replications": reps,
        "aggregate": {
            "median_final_u": float(np.median([r["final_u"] for r in reps])),
            "descended_count": descended,
            "martingale_consistent_count": mart_pass,
            "c_decay_count": ball_pass,
            "required_pass_count": need,
            "martingale_pass": mart_pass >= need,
            "c_decay_pass": ball_pass >= need,
            "gradient_bound_violations": sum(r["gradient_bound_violations"] for r in reps),
            "wall_time_s": wall_time,
        },
    }


def cmd_run(config_path, jobs=1, allow_unvalidated=False) -> int:
    try:
        cfg = cfgmod.load(config_path)
    except cfgmod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not allow_unvalidated and not cfg.sim.schedule.validate().valid:
        report = cfg.sim.schedule.validate().as_dict()
        print(f"error: schedule violates the step-size conditions: {report}", file=sys.stderr)
        print("pass --allow-unvalidated to run it anyway", file=sys.stderr)
        return EXIT_INPUT

    out = Path(os.environ.get("ASYNC_KW_OUT") or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    obj = cfg.sim.objective
    try:
        beta = beta_lower_bound(obj, cfg.delta)
    except NonStrictConcavity as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT

    start = time.perf_counter()
    try:
        trajectories = _simulate(cfg, jobs)
    except EscapedBall as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ESCAPED
    except (EngineError, UnvalidatedSchedule) as exc:
        print(f"error: invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    wall = time.perf_counter() - start

    breaches = 0
    for r, traj in enumerate(trajectories):
        records.write_trajectory_csv(traj, out / f"trajectory_{r}.csv")
        report = diag.descent_report(traj, obj, cfg.delta, beta)
        records.write_descent_csv(report, traj, out / f"descent_{r}.csv")
        if traj.events is not None:
            records.write_events_csv(traj, out / f"events_{r}.csv")
            breaches += len(ownership_breaches(traj, cfg.sim))

    summary = summarize(cfg, trajectories, beta, wall)
    records.write_summary(summary, out / "summary.json")
    agg = summary["aggregate"]
    log.info("median final u %.6g over %d replications", agg["median_final_u"], cfg.replications)
    if breaches:
        print(f"error: invariant breach: {breaches} events off their agent's schedule", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_validate_schedule(gamma_exp, eps_exp) -> int:
    try:
        schedule = PowerLawSchedule(float(gamma_exp), float(eps_exp))
    except (TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = schedule.validate().as_dict()
    report = {"gamma_exponent": schedule.gamma_exponent, "epsilon_exponent": schedule.epsilon_exponent, **report}
    print(json.dumps(report, indent=2))
    return EXIT_OK


def regression_config(mode: str, seed: int, n_cycles: int = REGRESS_CYCLES) -> SimConfig:
    schedule = PowerLawSchedule(0.75, 0.2)
    noise = NoiseModel(0.1, "uniform")
    if mode == "kw1":
        return SimConfig(pseudo_huber(1, [1.5]), schedule, tau=2, phases=(0,), noise=noise, n_cycles=n_cycles, seed=seed)
    if mode == "spsa":
        obj = pseudo_huber(3, [1.0, -2.0, 0.5])
        return SimConfig(obj, schedule, tau=2, phases=(0, 0, 0), noise=noise, n_cycles=n_cycles, seed=seed)
    raise ValueError(f"unknown regression mode {mode!r}")


def regress(mode: str, seed: int, n_cycles: int = REGRESS_CYCLES, inject_fault: bool = False):
    """Engine iterates vs the reference recursion. Returns the first cycle
    boundary n at which z(n*tau) differs bit-wise, or None on a full match."""
    config = regression_config(mode, seed, n_cycles)
    traj = run(config)
    ref_fn = kiefer_wolfowitz if mode == "kw1" else simultaneous_perturbation
    x0 = config.x0[0] if mode == "kw1" else config.x0
    ref = ref_fn(config.objective, config.schedule, config.noise, x0, n_cycles, seed, fault=inject_fault)
    ref = ref.reshape(traj.z.shape)
    same = np.all(traj.z == ref, axis=1)
    if same.all():
        return None
    return int(np.argmin(same))


def cmd_regress(mode, seed=42, inject_fault=False) -> int:
    first = regress(mode, seed, inject_fault=inject_fault)
    print(
        json.dumps(
            {
                "mode": mode,
                "seed": seed,
                "cycles": REGRESS_CYCLES,
                "match": first is None,
                "first_divergence_cycle": first,
            }
        )
    )
    return EXIT_OK if first is None else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="async-kw", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run seeded replications of a config file")
    p.add_argument("config")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--allow-unvalidated", action="store_true")

    p = sub.add_parser("validate-schedule", help="check the step-size conditions for a power-law pair")
    p.add_argument("--gamma-exp", required=True)
    p.add_argument("--eps-exp", required=True)

    p = sub.add_parser("regress", help="compare degenerate configurations with reference iterations")
    p.add_argument("--mode", choices=("kw1", "spsa"), required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "run":
        return cmd_run(args.config, jobs=args.jobs, allow_unvalidated=args.allow_unvalidated)
    if args.command == "validate-schedule":
        return cmd_validate_schedule(args.gamma_exp, args.eps_exp)
    return cmd_regress(args.mode, args.seed, inject_fault=args.inject_fault)


if __name__ == "__main__":
    sys.exit(main())

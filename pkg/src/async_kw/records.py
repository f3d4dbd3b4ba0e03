"""CSV and JSON writers for trajectories and run summaries."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .diagnostics import DescentReport
from .engine import Trajectory

SCHEMA_VERSION = 1


def fmt(v) -> str:
    """17 significant digits: enough to reproduce every float64 exactly."""
    return "%.17g" % v


def trajectory_columns(K: int) -> list:
    return (
        ["cycle", "tick", "u", "f_z"]
        + [f"z_{k}" for k in range(1, K + 1)]
        + [f"g_{k}" for k in range(1, K + 1)]
        + ["drift_ratio"]
    )


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """One row per cycle boundary n*tau, n = 0..N.

    The last row has no completed cycle after it, so its g and drift_ratio
    fields are ``nan``.
    """
    N, K = traj.n_cycles, traj.K
    u, f_z, z = traj.u, traj.f_z, traj.z
    g = np.vstack([traj.g, np.full((1, K), np.nan)])
    drift = np.append(traj.drift_ratio, np.nan)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_columns(K))
        for n in range(N + 1):
            w.writerow(
                [n, n * traj.tau, fmt(u[n]), fmt(f_z[n])]
                + [fmt(v) for v in z[n]]
                + [fmt(v) for v in g[n]]
                + [fmt(drift[n])]
            )


def read_trajectory_csv(path) -> dict:
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
    data = np.atleast_1d(data)
    return {name: data[name] for name in data.dtype.names}


def write_descent_csv(report: DescentReport, traj: Trajectory, path) -> None:
    N = traj.n_cycles
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cycle", "u", "above_delta", "alpha_hat", "descent_slack", "c_hat"])
        for n in range(N):
            w.writerow(
                [
                    n,
                    fmt(report.u[n]),
                    int(report.above[n]),
                    fmt(report.alpha_hat[n]),
                    fmt(report.slack[n]),
                    fmt(report.c_hat[n]),
                ]
            )


def write_events_csv(traj: Trajectory, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tick", "agent", "action", "cycle", "value"])
        for t, k, action, n, v in traj.events:
            w.writerow([t, k + 1, action, n, fmt(v)])


def write_summary(summary: dict, path) -> None:
    Path(path).write_text(
        json.dumps(summary, indent=2, sort_keys=False, allow_nan=True) + "\n", encoding="utf-8"
    )

"""Experiment configuration files.

The format is INI (``configparser``) with one section per component::

    [engine]      K, tau, phases, x0, n_cycles, seed
    [schedule]    gamma_exponent, epsilon_exponent, index_shift
    [objective]   kind (pseudo_huber | quadratic), maximizer, matrix, ball_radius
    [noise]       distribution (uniform | rademacher | zero), bound
    [experiment]  replications, delta, output_dir, emit_event_log
    [thresholds]  martingale_oscillation_frac, pass_fraction, c_decay_quantile

Vectors are comma separated; matrix rows are separated by ``;``.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import SimConfig, replication_seed
from .objectives import NoiseModel, pseudo_huber, quadratic
from .schedules import PowerLawSchedule


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Thresholds:
    martingale_oscillation_frac: float = 0.1
    pass_fraction: float = 0.9
    c_decay_quantile: float = 0.9

    def __post_init__(self):
        for name in ("martingale_oscillation_frac", "pass_fraction", "c_decay_quantile"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"thresholds.{name} must lie in (0, 1), got {v}")


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    sim: SimConfig
    replications: int = 1
    delta: float = 0.5
    output_dir: str = "out"
    emit_event_log: bool = False
    thresholds: Thresholds = field(default_factory=Thresholds)

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")

    def seeds(self) -> list:
        return [replication_seed(self.sim.seed, r) for r in range(self.replications)]


def _vec(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return ", ".join(_fmt(float(x)) if not isinstance(x, (int, np.integer)) else str(x) for x in v)
    return str(v)


def _parser():
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    return cp


def loads(text: str) -> ExperimentConfig:
    cp = _parser()
    try:
        cp.read_string(text)
        return _build(cp)
    except ConfigError:
        raise
    except (configparser.Error, KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return loads(text)


def _build(cp):
    for section in ("engine", "schedule", "objective"):
        if not cp.has_section(section):
            raise ConfigError(f"missing section [{section}]")
    eng, sch, obj = cp["engine"], cp["schedule"], cp["objective"]

    schedule = PowerLawSchedule(
        float(sch["gamma_exponent"]),
        float(sch["epsilon_exponent"]),
        int(sch.get("index_shift", "1")),
    )

    kind = obj.get("kind", "pseudo_huber")
    x_star = _vec(obj["maximizer"])
    K = int(eng.get("K", str(len(x_star))))
    if len(x_star) != K:
        raise ConfigError(f"maximizer has {len(x_star)} entries but K = {K}")
    if kind == "pseudo_huber":
        objective = pseudo_huber(K, x_star)
    elif kind == "quadratic":
        A = None
        if "matrix" in obj:
            A = [_vec(row) for row in obj["matrix"].split(";") if row.strip()]
        objective = quadratic(K, x_star, A, ball_radius=float(obj.get("ball_radius", "10.0")))
    else:
        raise ConfigError(f"unknown objective kind {kind!r}")

    noise = NoiseModel(bound=0.1, distribution="uniform")
    if cp.has_section("noise"):
        nz = cp["noise"]
        noise = NoiseModel(
            bound=float(nz.get("bound", "0.1")),
            distribution=nz.get("distribution", "uniform"),
        )

    sim = SimConfig(
        objective=objective,
        schedule=schedule,
        tau=int(eng.get("tau", "2")),
        phases=_ints(eng["phases"]) if "phases" in eng else None,
        noise=noise,
        x0=_vec(eng["x0"]) if "x0" in eng else None,
        n_cycles=int(eng.get("n_cycles", "1000")),
        seed=int(eng.get("seed", "0")),
    )

    exp = cp["experiment"] if cp.has_section("experiment") else {}
    thr = cp["thresholds"] if cp.has_section("thresholds") else {}
    thresholds = Thresholds(
        **{k: float(thr[k]) for k in ("martingale_oscillation_frac", "pass_fraction", "c_decay_quantile") if k in thr}
    )
    emit = str(exp.get("emit_event_log", "false")).strip().lower()
    if emit not in ("true", "false", "yes", "no", "1", "0"):
        raise ConfigError(f"emit_event_log must be a boolean, got {emit!r}")
    return ExperimentConfig(
        sim=sim,
        replications=int(exp.get("replications", "1")),
        delta=float(exp.get("delta", "0.5")),
        output_dir=str(exp.get("output_dir", "out")),
        emit_event_log=emit in ("true", "yes", "1"),
        thresholds=thresholds,
    )


def to_dict(cfg: ExperimentConfig) -> dict:
    sim = cfg.sim
    obj = sim.objective
    objective = {"kind": obj.name, "maximizer": [float(v) for v in obj.maximizer]}
    if obj.name == "quadratic":
        objective["matrix"] = [[float(v) for v in row] for row in obj.params["A"]]
        objective["ball_radius"] = obj.ball_radius
    return {
        "engine": {
            "K": sim.K,
            "tau": sim.tau,
            "phases": list(sim.phases),
            "x0": list(sim.x0),
            "n_cycles": sim.n_cycles,
            "seed": sim.seed,
        },
        "schedule": {
            "gamma_exponent": float(sim.schedule.gamma_exponent),
            "epsilon_exponent": float(sim.schedule.epsilon_exponent),
            "index_shift": int(sim.schedule.index_shift),
        },
        "objective": objective,
        "noise": {"distribution": sim.noise.distribution, "bound": float(sim.noise.bound)},
        "experiment": {
            "replications": cfg.replications,
            "delta": float(cfg.delta),
            "output_dir": cfg.output_dir,
            "emit_event_log": cfg.emit_event_log,
        },
        "thresholds": {
            "martingale_oscillation_frac": cfg.thresholds.martingale_oscillation_frac,
            "pass_fraction": cfg.thresholds.pass_fraction,
            "c_decay_quantile": cfg.thresholds.c_decay_quantile,
        },
    }


def dumps(cfg: ExperimentConfig) -> str:
    cp = _parser()
    for section, values in to_dict(cfg).items():
        cp.add_section(section)
        for key, v in values.items():
            if key == "matrix":
                cp[section][key] = "; ".join(_fmt(row) for row in v)
            else:
                cp[section][key] = _fmt(v)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()

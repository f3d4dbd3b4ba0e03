"""Tick-level simulation of asynchronous per-coordinate Kiefer-Wolfowitz agents.

Each agent k owns coordinate k. In cycle n it experiments at tick
T_k(n)+1, moving x_k to x_k + a*eps(n) with a random sign a, and updates at
T_k(n)+2, setting x_k to its pre-experiment value plus gamma(n) times

    g_k(n) = (f(x(T+1)) - f(x(T)) + eta) / (a * eps(n)).

The state carries a leading replication axis so that independent seeds can
be advanced together; every replication owns its own random streams and the
results do not depend on which other seeds share the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .objectives import NoiseModel, Objective
from .schedules import AgentTiming, PowerLawSchedule, event_time

DRAW_BLOCK = 4096


class EngineError(RuntimeError):
    pass


class StalePending(EngineError):
    """An agent reached its update tick without an experiment in flight."""


class GradientBoundViolation(EngineError):
    """|g_k(n)| exceeded (L * |x(T+1) - x(T)| + G) / eps(n).

    This is the Lipschitz bound for the actual displacement between the two
    observations; it reduces to L + G/eps(n) when only coordinate k moved.
    """


class OwnershipViolation(EngineError):
    """A coordinate changed at a tick where its owner had no event."""


class EscapedBall(EngineError):
    """The iterate left the ball on which the objective is Lipschitz."""


class UnvalidatedSchedule(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SimConfig:
    objective: Objective
    schedule: PowerLawSchedule
    tau: int = 2
    phases: Optional[Sequence[int]] = None
    noise: NoiseModel = NoiseModel()
    x0: Optional[Sequence[float]] = None
    n_cycles: int = 1000
    seed: int = 0

    def __post_init__(self):
        K = self.objective.dimension
        phases = (0,) * K if self.phases is None else tuple(int(p) for p in self.phases)
        x0 = (0.0,) * K if self.x0 is None else tuple(float(v) for v in self.x0)
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "x0", x0)
        if self.tau < 2:
            raise ValueError("tau must be at least 2")
        if len(phases) != K or len(x0) != K:
            raise ValueError(
                f"phases ({len(phases)}) and x0 ({len(x0)}) must match the "
                f"objective dimension ({K})"
            )
        if any(not 0 <= p < self.tau for p in phases):
            raise ValueError(f"phases must lie in [0, {self.tau - 1}]")
        if self.n_cycles < 0:
            raise ValueError("n_cycles must be non-negative")

    @property
    def K(self) -> int:
        return self.objective.dimension

    def timing(self, k: int) -> AgentTiming:
        return AgentTiming(self.tau, self.phases[k])

    def with_seed(self, seed: int) -> "SimConfig":
        return replace(self, seed=int(seed))


def agent_stream(seed: int, agent: int) -> np.random.Generator:
    """The random stream of one agent: a sign and a noise draw per cycle."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(agent)])))


def replication_seed(seed: int, replication: int) -> int:
    ss = np.random.SeedSequence([int(seed), 0x5EED, int(replication)])
    return int(ss.generate_state(1, np.uint64)[0])


def signs_from_uniform(u):
    return np.where(u < 0.5, -1.0, 1.0)


class _Draws:
    """Per-cycle (sign, noise) pairs for a batch of replications.

    Row n of every agent's stream belongs to cycle n whether or not the agent
    is active in that cycle, so streams stay aligned across phase choices.
    """

    def __init__(self, seeds, K, noise: NoiseModel, block=DRAW_BLOCK):
        self.streams = [[agent_stream(s, k) for k in range(K)] for s in seeds]
        self.noise = noise
        self.block = block
        self._start = -block
        self._signs = self._eta = None

    def cycle(self, n):
        if n < self._start:
            raise EngineError("random draws requested out of order")
        while n >= self._start + self.block:
            self._advance()
        i = n - self._start
        return self._signs[i], self._eta[i]

    def _advance(self):
        # shape (block, R, K, 2)
        u = np.stack(
            [np.stack([g.random((self.block, 2)) for g in row], axis=1) for row in self.streams],
            axis=1,
        )
        self._signs = signs_from_uniform(u[..., 0])
        self._eta = self.noise.from_uniform(u[..., 1])
        self._start += self.block


@dataclass
class EngineState:
    """Mutable simulation state for a batch of R replications.

    ``pending[k]`` is true exactly between agent k's experiment tick and its
    update tick; ``base`` holds the pre-experiment value that the update
    builds on, and ``f_before`` the observation f(x(T_k(n))).
    """

    tick: int
    x: np.ndarray  # (R, K)
    pending: np.ndarray  # (K,) bool
    pending_cycle: np.ndarray  # (K,) int
    sign: np.ndarray  # (R, K)
    eta: np.ndarray  # (R, K)
    base: np.ndarray  # (R, K)
    f_before: np.ndarray  # (R, K)
    snapshot: np.ndarray  # (R, K) x(T) of the agents currently experimenting
    draws: _Draws = field(repr=False)
    last_g: dict = field(default_factory=dict, repr=False)
    violations: np.ndarray = None  # (R,) count of gradient-bound breaches
    events: Optional[list] = field(default=None, repr=False)


def initial_state(config: SimConfig, seeds=None, record_events=False) -> EngineState:
    seeds = [config.seed] if seeds is None else list(seeds)
    R, K = len(seeds), config.K
    x = np.tile(np.asarray(config.x0, dtype=float), (R, 1))
    return EngineState(
        tick=0,
        x=x,
        pending=np.zeros(K, dtype=bool),
        pending_cycle=np.full(K, -1),
        sign=np.zeros((R, K)),
        eta=np.zeros((R, K)),
        base=x.copy(),
        f_before=np.zeros((R, K)),
        snapshot=x.copy(),
        draws=_Draws(seeds, K, config.noise),
        violations=np.zeros(R, dtype=int),
        events=[] if record_events else None,
    )


class _Program:
    """Which agents experiment and update at each offset within a cycle."""

    def __init__(self, config: SimConfig):
        tau = config.tau
        phases = np.asarray(config.phases)
        self.experiments = [np.flatnonzero((phases + 1) % tau == j) for j in range(tau)]
        self.updates = [np.flatnonzero((phases + 2) % tau == j) for j in range(tau)]
        self.experiments = [a if a.size else None for a in self.experiments]
        self.updates = [a if a.size else None for a in self.updates]


_PROGRAMS: dict = {}


def _program(config):
    key = (config.tau, config.phases)
    if key not in _PROGRAMS:
        _PROGRAMS[key] = _Program(config)
    return _PROGRAMS[key]


def derive_z(state: EngineState) -> np.ndarray:
    """Latest updated values: x with in-flight perturbations stripped."""
    z = state.x.copy()
    if state.pending.any():
        z[:, state.pending] = state.base[:, state.pending]
    return z


def step(state: EngineState, config: SimConfig, strict: bool = True) -> EngineState:
    """Advance the state from tick m to m+1 in place and return it.

    All observations use the snapshot x(m); writes go to distinct
    coordinates and are applied after every read.
    """
    t = state.tick + 1
    tau = config.tau
    n, j = divmod(t, tau)
    prog = _program(config)
    exp_idx, upd_idx = prog.experiments[j], prog.updates[j]
    if t == 1:
        # nothing experiments at tick 0, so nothing can update at tick 1
        upd_idx = None
    if exp_idx is None and upd_idx is None:
        state.tick = t
        return state

    x = state.x
    fx = config.objective.value(x)
    sched = config.schedule
    state.last_g = {}
    # x(T) for agents experimenting now, read back at their update tick
    pre = x.copy() if exp_idx is not None else None

    if upd_idx is not None:
        if not state.pending[upd_idx].all():
            k = int(upd_idx[~state.pending[upd_idx]][0])
            raise StalePending(f"agent {k} reached its update tick {t} with nothing pending")
        cyc = int(state.pending_cycle[upd_idx[0]])
        eps, gam = sched.epsilon(cyc), sched.gamma(cyc)
        g = (fx[:, None] - state.f_before[:, upd_idx] + state.eta[:, upd_idx]) / (
            state.sign[:, upd_idx] * eps
        )
        moved = np.linalg.norm(x - state.snapshot, axis=1)
        bound = (config.objective.lipschitz * moved + config.noise.effective_bound) / eps
        bad = np.abs(g) > bound[:, None] * (1.0 + 1e-12) + 1e-9
        if bad.any():
            state.violations += bad.sum(axis=1)
            if strict:
                r, i = np.argwhere(bad)[0]
                raise GradientBoundViolation(
                    f"|g_{int(upd_idx[i])}({cyc})| = {abs(g[r, i]):.6g} exceeds {bound[r]:.6g}"
                )
        x[:, upd_idx] = state.base[:, upd_idx] + g * gam
        state.pending[upd_idx] = False
        state.last_g = {"cycle": cyc, "agents": upd_idx, "g": g}
        if state.events is not None:
            for i, k in enumerate(upd_idx):
                state.events.append((t, int(k), "update", cyc, x[:, k].copy()))

    if exp_idx is not None:
        sign, eta = state.draws.cycle(n)
        eps = sched.epsilon(n)
        state.base[:, exp_idx] = x[:, exp_idx]
        state.f_before[:, exp_idx] = fx[:, None]
        state.sign[:, exp_idx] = sign[:, exp_idx]
        state.eta[:, exp_idx] = eta[:, exp_idx]
        x[:, exp_idx] = state.base[:, exp_idx] + sign[:, exp_idx] * eps
        state.pending[exp_idx] = True
        state.snapshot = pre
        state.pending_cycle[exp_idx] = n
        if state.events is not None:
            for k in exp_idx:
                state.events.append((t, int(k), "experiment", n, x[:, k].copy()))

    state.tick = t
    return state


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Per-cycle record of one replication.

    Row n of ``z``/``u``/``f_z`` is taken at tick n*tau (n = 0..N); row n of
    ``g``/``w``/``drift_ratio`` describes cycle n (n = 0..N-1). Agents that
    skip a cycle have g = 0 for it.
    """

    seed: int
    tau: int
    maximizer: np.ndarray
    z: np.ndarray  # (N+1, K)
    x: np.ndarray  # (N+1, K)
    g: np.ndarray  # (N, K)
    gamma: np.ndarray  # (N+1,)
    epsilon: np.ndarray  # (N+1,)
    f_z: np.ndarray  # (N+1,)
    gradient_violations: int = 0
    events: Optional[list] = None

    @property
    def n_cycles(self) -> int:
        return self.g.shape[0]

    @property
    def K(self) -> int:
        return self.z.shape[1]

    @property
    def u(self) -> np.ndarray:
        return np.linalg.norm(self.z - self.maximizer, axis=1)

    @property
    def w(self) -> np.ndarray:
        return np.diff(self.z, axis=0)

    @property
    def drift_ratio(self) -> np.ndarray:
        N = self.n_cycles
        return np.linalg.norm(self.w, axis=1) * self.epsilon[:N] / self.gamma[:N]


def _check_schedule(config, allow_unvalidated):
    sched = config.schedule
    if allow_unvalidated:
        return
    if not getattr(sched, "validated", False):
        raise UnvalidatedSchedule("schedule is not validated; pass allow_unvalidated=True")
    report = sched.validate()
    if not report.valid:
        raise UnvalidatedSchedule(f"schedule violates the step-size conditions: {report.as_dict()}")


def run_batch(
    config: SimConfig,
    seeds: Sequence[int],
    allow_unvalidated: bool = False,
    record_events: bool = False,
    strict: bool = True,
    check_ownership: bool = False,
) -> list:
    """Run one replication per seed, advancing all of them together."""
    _check_schedule(config, allow_unvalidated)
    seeds = [int(s) for s in seeds]
    N, K, tau = config.n_cycles, config.K, config.tau
    R = len(seeds)
    state = initial_state(config, seeds, record_events=record_events)
    obj = config.objective

    Z = np.empty((N + 1, R, K))
    X = np.empty((N + 1, R, K))
    G = np.zeros((N, R, K))
    Z[0] = X[0] = state.x
    _check_ball(obj, state.x, 0)

    masks = _owner_masks(config) if check_ownership else None
    prog = _program(config)
    idle = {j for j in range(tau) if prog.experiments[j] is None and prog.updates[j] is None}
    for t in range(1, N * tau + 1):
        if t % tau in idle:
            state.tick = t
        else:
            before = state.x.copy() if check_ownership else None
            step(state, config, strict=strict)
            last = state.last_g
            if last:
                G[last["cycle"], :, last["agents"]] = last["g"].T
            if before is not None:
                _check_ownership(before, state.x, masks, t, tau)
        if t % tau == 0:
            n = t // tau
            Z[n] = derive_z(state)
            X[n] = state.x
            _check_ball(obj, X[n], n)
            _check_ball(obj, Z[n], n)

    gam = np.asarray(config.schedule.gamma(np.arange(N + 1)), dtype=float)
    eps = np.asarray(config.schedule.epsilon(np.arange(N + 1)), dtype=float)
    out = []
    for r, s in enumerate(seeds):
        z = Z[:, r, :].copy()
        events = None
        if state.events is not None:
            events = [(t, k, a, n, float(v[r])) for (t, k, a, n, v) in state.events]
        out.append(
            Trajectory(
                seed=s,
                tau=tau,
                maximizer=obj.maximizer,
                z=z,
                x=X[:, r, :].copy(),
                g=G[:, r, :].copy(),
                gamma=gam,
                epsilon=eps,
                f_z=obj.value(z),
                gradient_violations=int(state.violations[r]),
                events=events,
            )
        )
    return out


def run(config: SimConfig, allow_unvalidated: bool = False, **kwargs) -> Trajectory:
    return run_batch(config, [config.seed], allow_unvalidated=allow_unvalidated, **kwargs)[0]


def _check_ball(obj, x, n):
    if obj.ball_radius is None:
        return
    dist = np.linalg.norm(x - obj.maximizer, axis=-1)
    if np.any(dist > obj.ball_radius):
        raise EscapedBall(
            f"iterate at distance {dist.max():.6g} from the maximizer in cycle {n} "
            f"(ball radius {obj.ball_radius})"
        )


def _owner_masks(config):
    """Per offset within a cycle, the agents allowed to write at such a tick,
    derived from T_k(n) directly rather than from the step program."""
    masks = []
    for j in range(config.tau):
        t = 2 * config.tau + j
        mask = np.zeros(config.K, dtype=bool)
        for k in range(config.K):
            for n in (1, 2, 3):
                T = event_time(config.timing(k), n)
                mask[k] |= t in (T + 1, T + 2)
        masks.append(mask)
    return masks


def _check_ownership(before, after, masks, t, tau):
    changed = np.any(before != after, axis=0)
    stray = changed & ~masks[t % tau]
    if stray.any():
        raise OwnershipViolation(
            f"coordinates {np.flatnonzero(stray).tolist()} changed at tick {t} without an owner event"
        )


def ownership_breaches(traj: Trajectory, config: SimConfig) -> list:
    """Audit a recorded event log: every event must sit at one of its agent's
    scheduled experiment/update ticks. Returns offending events."""
    if traj.events is None:
        raise ValueError("trajectory was recorded without an event log")
    bad = []
    for t, k, action, n, _ in traj.events:
        T = event_time(config.timing(k), n)
        expected = T + 1 if action == "experiment" else T + 2
        if t != expected:
            bad.append((t, k, action, n))
    return bad

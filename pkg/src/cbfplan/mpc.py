"""Receding-horizon reference tracking with barrier constraints, and the
prioritized fleet pipeline built on top of it.

Each tracking step solves a horizon-N quadratic program over the N scalar
speed commands along one fixed heading (redrawn every outer step around the
bearing to the current window target). The program carries state-deviation
and control-deviation costs, barrier rows at every predicted step, the
workspace box, and speed bounds; only the first command is applied before
re-solving. Higher-priority robots enter as moving discs that follow their
already-committed trajectories and freeze at their final state afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .barriers import FirstOrderGains, barrier_value
from .core import (
    ControlBounds,
    PlanarState,
    RandomSource,
    Trajectory,
    Workspace,
    normal_sample,
    wrap_angle,
)
from .qp import QpProblem, solve, solve_stacked
from .rrt import ObstacleBatch, PlanResult, SteerConfig, Tree, UnsafeStartError, goal_check, plan


@dataclass
class MpcConfig:
    """Tracker parameters: horizon length, diagonal weights, step size.

    ``dt`` must match the reference trajectory's sample spacing so that the
    window index advances one sample per step. ``sigma2`` is the variance of
    the per-step heading draw.
    """

    horizon: int = 3
    q_weight: tuple[float, float] = (10.0, 10.0)
    r_weight: float = 1.0
    terminal_weight: tuple[float, float] = (10.0, 10.0)
    dt: float = 0.01
    sigma2: float = 0.2
    max_steps: int = 20000

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not (self.dt > 0.0):
            raise ValueError("dt must be positive")
        self.q_weight = tuple(float(w) for w in self.q_weight)
        self.terminal_weight = tuple(float(w) for w in self.terminal_weight)
        self.r_weight = float(self.r_weight)
        if any(w < 0 for w in self.q_weight + self.terminal_weight) or self.r_weight < 0:
            raise ValueError("weights must be nonnegative")


@dataclass
class RobotSpec:
    """One fleet member. Priority rank 1 plans first and yields to nobody."""

    id: str
    radius: float
    start: PlanarState
    goal: np.ndarray
    priority: int

    def __post_init__(self):
        self.goal = np.asarray(self.goal, dtype=float).reshape(-1)
        if not (self.radius > 0.0):
            raise ValueError("robot radius must be positive")


class PathDisc:
    """Disc that follows a committed trajectory; frozen at its final state
    once the trajectory ends (zero velocity afterwards)."""

    def __init__(self, trajectory: Trajectory, radius: float):
        self.trajectory = trajectory
        self.radius = float(radius)
        self._times = trajectory.times
        self._pos = trajectory.positions()
        # Uniform sample grids (the planners emit them) get O(1) lookups.
        if self._times.size > 1:
            steps = np.diff(self._times)
            self._dt = float(steps[0]) if np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12) else None
        else:
            self._dt = None

    def _interval(self, t: float) -> int:
        if self._dt is not None:
            return int((t - self._times[0]) // self._dt)
        return int(np.searchsorted(self._times, t, side="right")) - 1

    def position_at(self, t: float) -> np.ndarray:
        t = float(t)
        if t <= self._times[0]:
            return self._pos[0].copy()
        if t >= self._times[-1]:
            return self._pos[-1].copy()
        i = min(self._interval(t), self._times.size - 2)
        t0, t1 = self._times[i], self._times[i + 1]
        w = (t - t0) / (t1 - t0)
        return (1.0 - w) * self._pos[i] + w * self._pos[i + 1]

    def velocity_at(self, t: float) -> np.ndarray:
        t = float(t)
        if t >= self._times[-1] or t < self._times[0] or self._times.size < 2:
            return np.zeros(2)
        i = min(self._interval(t), self._times.size - 2)
        return (self._pos[i + 1] - self._pos[i]) / (self._times[i + 1] - self._times[i])


def _nominal_positions(x0: np.ndarray, direction: np.ndarray, u_refs: np.ndarray, dt: float) -> np.ndarray:
    """Predicted positions at steps 0..N-1 when the reference speeds are applied."""
    n = u_refs.size
    out = np.empty((n, 2))
    cum = 0.0
    for k in range(n):
        out[k] = x0 + direction * (dt * cum)
        cum += u_refs[k]
    return out


class ActiveSetHint:
    """Carries the previous solve's active set between receding-horizon
    steps. Hints only shortcut the enumeration; the minimizer is unique, so
    results are identical with or without one."""

    def __init__(self):
        self.active: tuple[int, ...] = ()


def mpc_step(x0, ref_states, u_refs, theta: float, obstacles: Sequence, gains: FirstOrderGains,
             cfg: MpcConfig, bounds: ControlBounds, ws: Workspace | None = None,
             t0: float = 0.0, inflation: float = 0.0,
             hint: ActiveSetHint | None = None) -> float | None:
    """Solve one horizon-N program and return the first speed command.

    ref_states must hold N+1 positions (current window), u_refs the N
    reference speeds. Dynamics inside the horizon are x(k+1) = x(k) +
    u(k)*(cos theta, sin theta)*dt. Barrier rows are imposed at every
    predicted step with predicted obstacle centers; the step-0 row is exact
    and rows further out are linearized around the reference-speed rollout.
    Returns None when the program is infeasible.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    ref_states = np.atleast_2d(np.asarray(ref_states, dtype=float))
    u_refs = np.asarray(u_refs, dtype=float).reshape(-1)
    n = cfg.horizon
    if ref_states.shape[0] != n + 1 or u_refs.size != n:
        raise ValueError("reference window must hold horizon+1 states and horizon controls")
    direction = np.array([math.cos(theta), math.sin(theta)])
    dt = cfg.dt

    # Quadratic cost u'Pu - 2q'u (+const); cumulative-sum rows map speeds to
    # positions: x(k) = x0 + dt * direction * sum_{j<k} u_j.
    cum = np.tril(np.ones((n, n)))
    P = cfg.r_weight * np.eye(n)
    q = cfg.r_weight * u_refs.copy()
    for k in range(1, n + 1):
        w = np.asarray(cfg.terminal_weight if k == n else cfg.q_weight)
        if k < n and not np.any(w):
            continue
        wd = float(direction @ (w * direction))
        r_k = ref_states[k] - x0
        s = cum[k - 1]
        P += (dt * dt * wd) * np.outer(s, s)
        q += dt * float(direction @ (w * r_k)) * s
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise ValueError("tracker cost is degenerate: set a positive control or state weight") from exc
    u_hat = np.linalg.solve(P, q)

    blocks_G: list[np.ndarray] = []
    blocks_d: list[np.ndarray] = []
    m_obs = len(obstacles)
    if m_obs:
        nominal = _nominal_positions(x0, direction, u_refs, dt)
        batch = obstacles if isinstance(obstacles, ObstacleBatch) else ObstacleBatch(obstacles, inflation)
        for k in range(n):
            tk = t0 + k * dt
            A_k, b_k = batch.velocity_rows(nominal[k], tk, gains.k)
            a_scalar = A_k @ direction
            block = np.zeros((m_obs, n))
            block[:, k] = a_scalar
            blocks_G.append(block)
            blocks_d.append(b_k)
    if ws is not None:
        for axis in range(2):
            step = dt * direction[axis] * cum
            blocks_G.append(step)
            blocks_d.append(np.full(n, float(ws.state_lower[axis] - x0[axis])))
            blocks_G.append(-step)
            blocks_d.append(np.full(n, float(x0[axis] - ws.state_upper[axis])))
    lo, hi = float(bounds.lower[0]), float(bounds.upper[0])
    eye = np.eye(n)
    if math.isfinite(lo):
        blocks_G.append(eye)
        blocks_d.append(np.full(n, lo))
    if math.isfinite(hi):
        blocks_G.append(-eye)
        blocks_d.append(np.full(n, -hi))

    # Whiten: z = L'u turns the general quadratic into a plain projection.
    z_ref = L.T @ u_hat
    try_subsets = (hint.active,) if hint is not None and hint.active else ()
    if blocks_G:
        G_u = np.vstack(blocks_G)
        d_vec = np.concatenate(blocks_d)
        G_z = np.linalg.solve(L, G_u.T).T
        sol = solve_stacked(z_ref, G_z, d_vec, try_subsets=try_subsets)
    else:
        sol = solve_stacked(z_ref, np.zeros((0, n)), np.zeros(0))
    if not sol.feasible:
        if hint is not None:
            hint.active = ()
        return None
    if hint is not None:
        hint.active = sol.active_set
    u = np.linalg.solve(L.T, sol.u_opt)
    return float(u[0])


@dataclass(eq=False)
class TrackResult:
    trajectory: Trajectory
    reached: bool
    steps: int
    fallback_steps: int = 0


def _initial_safety_check(position, obstacles, inflation: float) -> None:
    for obs in obstacles:
        if barrier_value(position, obs, 0.0, inflation) < 0.0:
            raise UnsafeStartError("tracking start violates a barrier")


def track(reference: Trajectory, obstacles: Sequence, higher_priority: Sequence[PathDisc],
          spec: RobotSpec, cfg: MpcConfig, gains: FirstOrderGains, bounds: ControlBounds,
          ws: Workspace, rng: RandomSource) -> TrackResult:
    """Follow a reference path to the goal region under barrier constraints.

    The obstacle set at each step is the circle obstacles plus one disc per
    higher-priority robot, inflated by this robot's radius. On an infeasible
    horizon program the tracker falls back to the one-step safety filter,
    and to a zero command if even that fails.
    """
    all_obstacles = list(obstacles) + list(higher_priority)
    x = spec.start.position()
    _initial_safety_check(x, all_obstacles, spec.radius)
    batch = ObstacleBatch(all_obstacles, spec.radius)
    goal_ws = ws.with_goal(spec.goal)
    n = cfg.horizon
    dt = cfg.dt
    ref_pos = reference.positions()
    last = ref_pos.shape[0] - 1

    times = [0.0]
    states = [x.copy()]
    controls = [np.zeros(2)]
    t = 0.0
    theta_prev = 0.0
    reached = goal_check(x, goal_ws)
    fallback = 0
    step = 0
    hint = ActiveSetHint()
    while not reached and step < cfg.max_steps:
        idx = min(step, last)
        window = ref_pos[[min(idx + j, last) for j in range(n + 1)]]
        target = window[-1]
        offset = target - x
        if float(np.hypot(offset[0], offset[1])) > 1e-9:
            theta_d = math.atan2(offset[1], offset[0])
        else:
            theta_d = theta_prev
        theta = wrap_angle(normal_sample(rng, theta_d, cfg.sigma2))
        direction = np.array([math.cos(theta), math.sin(theta)])
        u_refs = np.array([
            float(reference.controls[min(idx + j, last)][:2] @ direction) for j in range(n)
        ])
        u0 = mpc_step(x, window, u_refs, theta, batch, gains, cfg, bounds,
                      ws=ws, t0=t, inflation=spec.radius, hint=hint)
        if u0 is not None:
            u_vec = u0 * direction
        else:
            fallback += 1
            u0 = _one_step_filter(x, u_refs[0], direction, batch, gains, bounds, t)
            if u0 is not None:
                u_vec = u0 * direction
            else:
                # Full-velocity safety filter: matching an obstacle's
                # velocity always satisfies its row, so this never fails
                # against obstacles moving within the speed bounds. It
                # abandons the fixed heading for this one step.
                u_vec = _velocity_fallback(x, batch, gains, bounds, t)
        x = x + u_vec * dt
        t += dt
        theta_prev = theta
        controls[-1] = u_vec
        times.append(t)
        states.append(x.copy())
        controls.append(np.zeros(2))
        step += 1
        reached = goal_check(x, goal_ws)
    traj = Trajectory(np.array(times), np.array(states), np.array(controls), "planar")
    return TrackResult(traj, reached, step, fallback)


def _velocity_fallback(x, batch: ObstacleBatch, gains: FirstOrderGains, bounds,
                       t) -> np.ndarray:
    """Minimum-norm velocity satisfying every barrier row, heading free."""
    A, b = batch.velocity_rows(np.asarray(x, dtype=float), t, gains.k)
    lo, hi = float(bounds.lower[0]), float(bounds.upper[0])
    box = ControlBounds(np.array([lo, lo]), np.array([hi, hi]))
    sol = solve(QpProblem(np.zeros(2), list(zip(A, b)), box))
    if not sol.feasible:
        return np.zeros(2)
    return sol.u_opt


def _one_step_filter(x, u_ref: float, direction, batch: ObstacleBatch, gains: FirstOrderGains,
                     bounds, t) -> float | None:
    """Single-step safety filter along the fixed heading; None if infeasible.

    Dropping the horizon rows keeps the exact current-state barrier
    condition, which is what the closed loop's safety actually rests on.
    """
    A_xy, b = batch.velocity_rows(np.asarray(x, dtype=float), t, gains.k)
    a = A_xy @ direction
    rows = [(np.array([ai]), bi) for ai, bi in zip(a, b)]
    sol = solve(QpProblem(np.array([u_ref]), rows, ControlBounds(bounds.lower[:1], bounds.upper[:1])))
    if not sol.feasible:
        return None
    return float(sol.u_opt[0])


@dataclass(eq=False)
class RobotOutcome:
    spec: RobotSpec
    status: str  # "reached" | "exhausted" | "infeasible-start" | "skipped"
    plan_result: PlanResult | None = None
    reference: Trajectory | None = None
    tracked: Trajectory | None = None
    track_steps: int = 0

    @property
    def reached(self) -> bool:
        return self.status == "reached"


@dataclass(eq=False)
class FleetResult:
    outcomes: list[RobotOutcome]

    @property
    def all_reached(self) -> bool:
        return all(o.reached for o in self.outcomes)


def plan_fleet(fleet: Sequence[RobotSpec], ws: Workspace, obstacles: Sequence,
               steer_cfg: SteerConfig, mpc_cfg: MpcConfig, gains: FirstOrderGains,
               v_limits: tuple[float, float], rng: RandomSource,
               max_iters: int = 5000) -> FleetResult:
    """Plan then track every robot in priority order.

    Robot i plans against the circle obstacles plus the reference paths of
    robots 1..i-1, and tracks against the circles plus their tracked
    trajectories. Random streams are derived per robot and per phase from
    ``rng``'s seed, so removing lower-priority robots leaves the survivors'
    output bit-identical. The pipeline stops at the first failure; untried
    robots are reported as skipped.
    """
    order = sorted(fleet, key=lambda s: s.priority)
    if len({s.priority for s in order}) != len(order):
        raise ValueError("fleet priorities must be unique")
    _check_mutual_start_safety(order, obstacles)
    lo, hi = float(v_limits[0]), float(v_limits[1])
    plan_bounds = ControlBounds(np.array([lo, lo]), np.array([hi, hi]))
    track_bounds = ControlBounds(np.array([lo]), np.array([hi]))

    outcomes: list[RobotOutcome] = []
    references: list[tuple[RobotSpec, Trajectory]] = []
    tracked: list[tuple[RobotSpec, Trajectory]] = []
    failed = False
    for rank, spec in enumerate(order):
        if failed:
            outcomes.append(RobotOutcome(spec, "skipped"))
            continue
        ws_i = ws.with_goal(spec.goal)
        # Discs carry the other robot's radius; plan() adds this robot's own
        # radius as inflation, so robot-robot clearance is the radius sum.
        plan_obs = list(obstacles) + [PathDisc(ref, other.radius) for other, ref in references]
        plan_rng = RandomSource(rng.seed, rng.key + (rank, 0))
        try:
            pres = plan(spec.start, ws_i, plan_obs, steer_cfg, gains,
                        plan_bounds, plan_rng, max_iters=max_iters, inflation=spec.radius)
        except UnsafeStartError:
            outcomes.append(RobotOutcome(spec, "infeasible-start"))
            failed = True
            continue
        if not pres.reached:
            outcomes.append(RobotOutcome(spec, "exhausted", plan_result=pres))
            failed = True
            continue
        references.append((spec, pres.reference))

        track_obs = [PathDisc(tr, other.radius) for other, tr in tracked]
        track_rng = RandomSource(rng.seed, rng.key + (rank, 1))
        try:
            tres = track(pres.reference, list(obstacles), track_obs, spec, mpc_cfg, gains,
                         track_bounds, ws, track_rng)
        except UnsafeStartError:
            outcomes.append(RobotOutcome(spec, "infeasible-start", plan_result=pres,
                                         reference=pres.reference))
            failed = True
            continue
        if not tres.reached:
            outcomes.append(RobotOutcome(spec, "exhausted", plan_result=pres,
                                         reference=pres.reference, tracked=tres.trajectory,
                                         track_steps=tres.steps))
            failed = True
            continue
        tracked.append((spec, tres.trajectory))
        outcomes.append(RobotOutcome(spec, "reached", plan_result=pres, reference=pres.reference,
                                     tracked=tres.trajectory, track_steps=tres.steps))
    return FleetResult(outcomes)


def _check_mutual_start_safety(order: Sequence[RobotSpec], obstacles: Sequence) -> None:
    for i, a in enumerate(order):
        pa = a.start.position()
        for obs in obstacles:
            if barrier_value(pa, obs, 0.0, a.radius) < 0.0:
                raise UnsafeStartError(f"robot {a.id} starts inside an obstacle")
        for b in order[i + 1:]:
            gap = float(np.linalg.norm(pa - b.start.position()))
            if gap < a.radius + b.radius:
                raise UnsafeStartError(f"robots {a.id} and {b.id} start in collision")

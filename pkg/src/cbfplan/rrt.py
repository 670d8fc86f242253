"""Steering tree planner: grow a tree by picking a vertex, sampling a
heading, and integrating the dynamics under a per-substep QP safety filter.

There is no nearest-neighbor query and no explicit segment-obstacle
intersection test; edges bend away from obstacles because every substep
control passes through the barrier-constrained QP. An edge whose QP turns
infeasible, leaves the workspace box, or lets any barrier dip negative is
aborted; by default the attempt is discarded and the planner resamples
(``SteerConfig.partial_commit_fraction`` switches on committing sufficiently
long partial edges instead, which the arm planner uses).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .barriers import FirstOrderGains, SecondOrderGains, barrier_value
from .core import (
    ControlBounds,
    JointState,
    PlanarState,
    RandomSource,
    Trajectory,
    UnicycleState,
    Workspace,
    normal_sample,
    wrap_angle,
)
from .qp import FEASIBILITY_TOL, QpProblem, solve, solve_stacked

# Committed substep states may undershoot zero by at most this much before
# the edge is aborted (Euler discretization slack, well inside the 1e-4
# tolerance the safety properties are checked at).
BARRIER_DIP_TOL = 1e-6


class UnsafeStartError(RuntimeError):
    """Raised when a planning or tracking phase begins inside an obstacle."""


@dataclass
class SteerConfig:
    """Edge-expansion parameters.

    v_ref is the reference speed (m/s for point robots, rad/s in joint
    space); each edge integrates for t_h seconds in ``substeps`` Euler
    steps. sigma2 is the heading-sampling variance; eta_vs and eta_ss set
    the random:biased selection ratio for vertex and direction sampling
    (probability of the random mode is eta/(eta+1), so 0 means always
    biased and math.inf means always random/uniform).
    """

    v_ref: float = 0.5
    substeps: int = 100
    t_h: float = 1.0
    sigma2: float = 0.2
    eta_ss: float = 0.0
    eta_vs: float = math.inf
    partial_commit_fraction: float | None = None
    # Margin subtracted from h inside the steering rows. Explicit Euler
    # undershoots the continuous-time guarantee by O(dt^2) while sliding
    # along a constraint surface; a margin of that size keeps committed
    # states nonnegative. The first-order point model integrates exactly,
    # so its default is zero.
    barrier_margin: float = 0.0

    def __post_init__(self):
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if not (self.t_h > 0.0):
            raise ValueError("t_h must be positive")
        if not (self.sigma2 > 0.0):
            raise ValueError("sigma2 must be positive")
        if self.eta_ss < 0.0 or self.eta_vs < 0.0:
            raise ValueError("selection ratios must be >= 0")
        if self.partial_commit_fraction is not None and not (0.0 < self.partial_commit_fraction <= 1.0):
            raise ValueError("partial_commit_fraction must lie in (0, 1]")
        if self.barrier_margin < 0.0:
            raise ValueError("barrier_margin must be >= 0")

    @property
    def dt(self) -> float:
        return self.t_h / self.substeps


@dataclass
class Vertex:
    state: object
    time: float
    parent: int | None
    children_count: int = 0


@dataclass(eq=False)
class Edge:
    parent: int
    child: int
    path: Trajectory


class Tree:
    """Vertex/edge store; edge paths hold the dense substep trajectories."""

    def __init__(self, root_state, t_init: float = 0.0):
        self.vertices: list[Vertex] = [Vertex(root_state, float(t_init), None)]
        self.edges: list[Edge] = []

    def __len__(self) -> int:
        return len(self.vertices)

    def add_child(self, parent_index: int, state, path: Trajectory) -> int:
        parent = self.vertices[parent_index]
        child_time = float(path.times[-1])
        if child_time <= parent.time:
            raise ValueError("child time must exceed parent time")
        index = len(self.vertices)
        self.vertices.append(Vertex(state, child_time, parent_index))
        self.edges.append(Edge(parent_index, index, path))
        parent.children_count += 1
        return index

    def chain_to_root(self, index: int) -> list[int]:
        chain = [index]
        while self.vertices[chain[-1]].parent is not None:
            chain.append(self.vertices[chain[-1]].parent)
        chain.reverse()
        return chain

    def path_to(self, index: int) -> Trajectory:
        """Dense root-to-vertex trajectory: all edge substeps concatenated."""
        chain = self.chain_to_root(index)
        edge_by_child = {e.child: e for e in self.edges}
        if len(chain) == 1:
            root = self.vertices[chain[0]]
            return _single_sample_trajectory(root.state, root.time)
        pieces = [edge_by_child[c].path for c in chain[1:]]
        times = [pieces[0].times]
        states = [pieces[0].states]
        controls = [pieces[0].controls.copy()]
        for piece in pieces[1:]:
            # Drop the duplicated junction sample at each vertex; the
            # junction row's control is the incoming edge's first command,
            # not the zero marker that ends each piece.
            controls[-1][-1] = piece.controls[0]
            times.append(piece.times[1:])
            states.append(piece.states[1:])
            controls.append(piece.controls[1:].copy())
        return Trajectory(
            np.concatenate(times), np.vstack(states), np.vstack(controls), pieces[0].model
        )


def _model_of(state) -> str:
    if isinstance(state, PlanarState):
        return "planar"
    if isinstance(state, UnicycleState):
        return "unicycle"
    if isinstance(state, JointState):
        return "joints"
    raise TypeError(f"unsupported state type {type(state)!r}")


def _single_sample_trajectory(state, t: float) -> Trajectory:
    model = _model_of(state)
    if model == "planar":
        row, ctrl = [state.x1, state.x2], [0.0, 0.0]
    elif model == "unicycle":
        row, ctrl = [state.x1, state.x2, state.theta], [0.0]
    else:
        row, ctrl = list(state.theta), [0.0] * state.dof
    return Trajectory(np.array([t]), np.array([row]), np.array([ctrl]), model)


def sample_vertex(tree: Tree, eta_vs: float, rng: RandomSource) -> int:
    """Pick an expansion vertex.

    With probability eta_vs/(eta_vs+1) the pick is uniform over all
    vertices; otherwise it is uniform over the vertices with the fewest
    children, which keeps pushing the tree's frontier outward.
    """
    n = len(tree)
    p_uniform = 1.0 if math.isinf(eta_vs) else eta_vs / (eta_vs + 1.0)
    if rng.random() < p_uniform:
        return rng.integer(n)
    counts = [v.children_count for v in tree.vertices]
    least = min(counts)
    candidates = [i for i, c in enumerate(counts) if c == least]
    if len(candidates) == 1:
        return candidates[0]
    return candidates[rng.integer(len(candidates))]


def sample_heading(position, goal, sigma2: float, eta_ss: float, rng: RandomSource) -> float:
    """Expansion heading: Gaussian around the bearing to the goal, or uniform.

    The biased mode fires with probability 1/(eta_ss+1); eta_ss = 0 makes
    every draw goal-biased. Raises if the position coincides with the goal
    (the bearing is undefined there).
    """
    position = np.asarray(position, dtype=float)
    goal = np.asarray(goal, dtype=float)
    dx, dy = goal[0] - position[0], goal[1] - position[1]
    if math.hypot(dx, dy) < 1e-12:
        raise ValueError("heading undefined: position coincides with the goal")
    if eta_ss > 0.0:
        p_random = 1.0 if math.isinf(eta_ss) else eta_ss / (eta_ss + 1.0)
        if rng.random() < p_random:
            return rng.angle()
    theta_d = math.atan2(dy, dx)
    return wrap_angle(normal_sample(rng, theta_d, sigma2))


def goal_check(position, ws: Workspace) -> bool:
    """True iff the position lies in the closed goal ball."""
    position = np.asarray(position, dtype=float)
    return float(np.linalg.norm(position - ws.goal_center)) <= ws.goal_radius


@dataclass(eq=False)
class SteerResult:
    """Executed portion of one edge; ``feasible`` means the full horizon ran."""

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    model: str
    feasible: bool

    @property
    def steps_done(self) -> int:
        return self.times.size - 1

    def as_trajectory(self) -> Trajectory:
        return Trajectory(self.times.copy(), self.states.copy(), self.controls.copy(), self.model)

    def end_state(self):
        row = self.states[-1]
        if self.model == "planar":
            return PlanarState(row[0], row[1])
        if self.model == "unicycle":
            return UnicycleState(row[0], row[1], row[2])
        return JointState(row)


class ObstacleBatch:
    """Vectorized position/velocity/barrier queries over a mixed obstacle set.

    Constant-velocity circles are batched into arrays; trajectory-following
    discs (anything with position_at/velocity_at/radius) are looped, since
    their motion has no closed form.
    """

    def __init__(self, obstacles: Sequence, inflation: float = 0.0):
        self.obstacles = list(obstacles)
        self.inflation = float(inflation)
        from .core import CircleObstacle  # local to avoid cycle at import time

        circles = [o for o in self.obstacles if isinstance(o, CircleObstacle)]
        self.others = [o for o in self.obstacles if not isinstance(o, CircleObstacle)]
        if circles:
            self._c0 = np.array([o.center0[:2] for o in circles])
            self._cv = np.array([o.velocity[:2] for o in circles])
            self._cr = np.array([o.radius + self.inflation for o in circles])
        else:
            self._c0 = np.zeros((0, 2))
            self._cv = np.zeros((0, 2))
            self._cr = np.zeros(0)
        self._memo = None

    def __len__(self) -> int:
        return len(self.obstacles)

    def centers_velocities_radii(self, t: float):
        # Steering asks for the same instant twice (rows, then the dip
        # guard of the following substep); memoize the last lookup.
        if self._memo is not None and self._memo[0] == t:
            return self._memo[1]
        centers = self._c0 + self._cv * t
        velocities = self._cv
        radii = self._cr
        if self.others:
            oc = np.array([o.position_at(t) for o in self.others])
            ov = np.array([o.velocity_at(t) for o in self.others])
            orr = np.array([o.radius + self.inflation for o in self.others])
            centers = np.vstack([centers, oc]) if centers.size else oc
            velocities = np.vstack([velocities, ov]) if velocities.size else ov
            radii = np.concatenate([radii, orr]) if radii.size else orr
        self._memo = (t, (centers, velocities, radii))
        return centers, velocities, radii

    def min_barrier(self, pos: np.ndarray, t: float) -> float:
        if not self.obstacles:
            return math.inf
        centers, _, radii = self.centers_velocities_radii(t)
        delta = pos - centers
        h = np.einsum("ij,ij->i", delta, delta) - radii * radii
        return float(h.min())

    def velocity_rows(self, pos: np.ndarray, t: float, k: float):
        """First-order rows over the velocity vector: (A (m,2), b (m,))."""
        centers, velocities, radii = self.centers_velocities_radii(t)
        delta = pos - centers
        h = np.einsum("ij,ij->i", delta, delta) - radii * radii
        a = 2.0 * delta
        m_term = -2.0 * np.einsum("ij,ij->i", delta, velocities)
        return a, -k * h - m_term


def bound_rows(bounds: ControlBounds) -> tuple[np.ndarray, np.ndarray]:
    """Finite box bounds as stacked inequality rows G u >= d."""
    n = bounds.dimension
    rows = []
    rhs = []
    eye = np.eye(n)
    for j in range(n):
        if np.isfinite(bounds.lower[j]):
            rows.append(eye[j])
            rhs.append(bounds.lower[j])
        if np.isfinite(bounds.upper[j]):
            rows.append(-eye[j])
            rhs.append(-bounds.upper[j])
    if not rows:
        return np.zeros((0, n)), np.zeros(0)
    return np.array(rows), np.array(rhs)


def safe_steer(state, heading: float, cfg: SteerConfig, obstacles: Sequence,
               gains, bounds: ControlBounds, ws: Workspace, t0: float = 0.0,
               inflation: float = 0.0) -> SteerResult:
    """Integrate one edge of duration t_h under the QP safety filter.

    Point model: the decision variable is the velocity vector, with
    reference v_ref*(cos heading, sin heading). Unicycle: the heading is
    set to the sampled angle at the edge start, speed is held at v_ref, and
    the decision variable is the turn rate with zero reference. The edge
    stops early (feasible=False) on QP infeasibility, on leaving the
    workspace box, or if a committed substep state dips below the barrier
    slack; the executed prefix is still returned.
    """
    if isinstance(state, PlanarState):
        return _steer_planar(state, heading, cfg, obstacles, gains, bounds, ws, t0, inflation)
    if isinstance(state, UnicycleState):
        return _steer_unicycle(state, heading, cfg, obstacles, gains, bounds, ws, t0, inflation)
    raise TypeError("safe_steer supports planar and unicycle states; see the arm module for chains")


def _steer_planar(state: PlanarState, heading, cfg, obstacles, gains: FirstOrderGains,
                  bounds, ws, t0, inflation) -> SteerResult:
    pos = state.position()
    batch = obstacles if isinstance(obstacles, ObstacleBatch) else ObstacleBatch(obstacles, inflation)
    if batch.min_barrier(pos, t0) < 0.0:
        raise UnsafeStartError("steer start lies inside an inflated obstacle")
    dt = cfg.dt
    u_ref = cfg.v_ref * np.array([math.cos(heading), math.sin(heading)])
    u_ref_in_bounds = bounds.contains(u_ref)
    G_box, d_box = bound_rows(bounds)
    box_lo = (float(ws.state_lower[0]), float(ws.state_lower[1]))
    box_hi = (float(ws.state_upper[0]), float(ws.state_upper[1]))
    times = [t0]
    states = [pos.copy()]
    controls = [np.zeros(2)]
    t = t0
    feasible = True
    margin_shift = gains.k * cfg.barrier_margin
    for _ in range(cfg.substeps):
        if len(batch):
            A, b = batch.velocity_rows(pos, t, gains.k)
            if margin_shift:
                b = b + margin_shift
            if u_ref_in_bounds and np.all(A @ u_ref >= b - FEASIBILITY_TOL):
                u = u_ref
            else:
                sol = solve_stacked(u_ref, np.vstack([A, G_box]), np.concatenate([b, d_box]))
                if not sol.feasible:
                    feasible = False
                    break
                u = sol.u_opt
        elif u_ref_in_bounds:
            u = u_ref
        else:
            u = np.clip(u_ref, bounds.lower, bounds.upper)
        new_pos = pos + u * dt
        new_t = t + dt
        if not (box_lo[0] <= new_pos[0] <= box_hi[0] and box_lo[1] <= new_pos[1] <= box_hi[1]):
            feasible = False
            break
        if batch.min_barrier(new_pos, new_t) < -BARRIER_DIP_TOL:
            feasible = False
            break
        controls[-1] = u.copy()
        times.append(new_t)
        states.append(new_pos.copy())
        controls.append(np.zeros(2))
        pos, t = new_pos, new_t
    return SteerResult(np.array(times), np.array(states), np.array(controls), "planar", feasible)


def _steer_unicycle(state: UnicycleState, heading, cfg, obstacles, gains: SecondOrderGains,
                    bounds, ws, t0, inflation) -> SteerResult:
    pos = state.position()
    batch = obstacles if isinstance(obstacles, ObstacleBatch) else ObstacleBatch(obstacles, inflation)
    if batch.min_barrier(pos, t0) < 0.0:
        raise UnsafeStartError("steer start lies inside an inflated obstacle")
    dt = cfg.dt
    v = cfg.v_ref
    # The sampled angle becomes the edge's starting heading.
    x1, x2, theta = float(pos[0]), float(pos[1]), wrap_angle(heading)
    lo, hi = float(bounds.lower[0]), float(bounds.upper[0])
    G_box, d_box = bound_rows(bounds)
    times = [t0]
    states = [np.array([x1, x2, theta])]
    controls = [np.zeros(1)]
    t = t0
    feasible = True
    for _ in range(cfg.substeps):
        ct, st = math.cos(theta), math.sin(theta)
        omega = 0.0
        if len(batch):
            centers, velocities, radii = batch.centers_velocities_radii(t)
            delta = np.array([x1, x2]) - centers
            d_rel = np.array([v * ct, v * st]) - velocities
            h = np.einsum("ij,ij->i", delta, delta) - radii * radii
            h_dot = 2.0 * np.einsum("ij,ij->i", delta, d_rel)
            a = 2.0 * v * (delta[:, 1] * ct - delta[:, 0] * st)
            b = -(2.0 * np.einsum("ij,ij->i", d_rel, d_rel) + gains.k2 * h_dot
                  + gains.k1 * (h - cfg.barrier_margin))
            if np.any(b > -FEASIBILITY_TOL):
                sol = solve_stacked(np.zeros(1), np.vstack([a[:, None], G_box]),
                                    np.concatenate([b, d_box]))
                if not sol.feasible:
                    feasible = False
                    break
                omega = float(sol.u_opt[0])
        if not (lo <= omega <= hi):
            omega = min(max(omega, lo), hi)
        new_x1 = x1 + v * ct * dt
        new_x2 = x2 + v * st * dt
        new_theta = wrap_angle(theta + omega * dt)
        new_t = t + dt
        if not ws.contains((new_x1, new_x2)):
            feasible = False
            break
        if batch.min_barrier(np.array([new_x1, new_x2]), new_t) < -BARRIER_DIP_TOL:
            feasible = False
            break
        controls[-1] = np.array([omega])
        times.append(new_t)
        states.append(np.array([new_x1, new_x2, new_theta]))
        controls.append(np.zeros(1))
        x1, x2, theta, t = new_x1, new_x2, new_theta, new_t
    return SteerResult(np.array(times), np.array(states), np.array(controls), "unicycle", feasible)


@dataclass(eq=False)
class PlanResult:
    status: str  # "reached" | "exhausted"
    tree: Tree
    reference: Trajectory | None
    iterations: int

    @property
    def reached(self) -> bool:
        return self.status == "reached"


def _commit_allowed(res: SteerResult, cfg: SteerConfig) -> bool:
    if res.feasible:
        return res.steps_done >= 1
    if cfg.partial_commit_fraction is None:
        return False
    needed = max(1, math.ceil(cfg.partial_commit_fraction * cfg.substeps))
    return res.steps_done >= needed


def plan(start_state, ws: Workspace, obstacles: Sequence, cfg: SteerConfig, gains,
         bounds: ControlBounds, rng: RandomSource, max_iters: int = 5000,
         inflation: float = 0.0) -> PlanResult:
    """Grow the steering tree until a vertex lands in the goal region.

    Returns the tree plus the dense root-to-goal reference trajectory, or an
    exhausted result after max_iters attempts. Raises UnsafeStartError when
    the start violates a barrier.
    """
    start_pos = start_state.position()
    batch = ObstacleBatch(obstacles, inflation)
    if batch.min_barrier(start_pos, 0.0) < 0.0:
        raise UnsafeStartError("planning start lies inside an inflated obstacle")
    tree = Tree(start_state, t_init=0.0)
    if goal_check(start_pos, ws):
        return PlanResult("reached", tree, _single_sample_trajectory(start_state, 0.0), 0)
    for iteration in range(1, max_iters + 1):
        vi = sample_vertex(tree, cfg.eta_vs, rng)
        vertex = tree.vertices[vi]
        heading = sample_heading(vertex.state.position(), ws.goal_center, cfg.sigma2, cfg.eta_ss, rng)
        res = safe_steer(vertex.state, heading, cfg, batch, gains, bounds, ws,
                         t0=vertex.time, inflation=inflation)
        if not _commit_allowed(res, cfg):
            continue
        child_state = res.end_state()
        child = tree.add_child(vi, child_state, res.as_trajectory())
        if goal_check(child_state.position(), ws):
            return PlanResult("reached", tree, tree.path_to(child), iteration)
    return PlanResult("exhausted", tree, None, max_iters)

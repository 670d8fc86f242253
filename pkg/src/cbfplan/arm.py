"""Joint-space steering planner for serial kinematic chains.

Each link is over-approximated by a cylinder whose axis is the local x-axis
of the link frame. A spherical obstacle's center is mapped into that frame;
the barrier is the squared distance to the axis (the y/z components) minus
the squared radius sum, and its time derivative is assembled analytically
from the frame gradients with respect to the joint angles plus the
obstacle's world velocity. Constraints enter the steering QP only while the
obstacle is close to the finite link (two activation thresholds, split by
whether the obstacle's axial projection falls inside the link extent).

Frame convention: each transform maps world coordinates into the link
frame, built from elementary coordinate rotations and translations. The
rotation matrices are the coordinate-change form, i.e. rotating a frame by
+a about z maps the world point (1,0,0) to (cos a, -sin a, 0) in that
frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .barriers import FirstOrderGains
from .core import (
    CircleObstacle,
    ControlBounds,
    JointState,
    RandomSource,
    Trajectory,
    Workspace,
)
from .qp import QpProblem, solve, solve_stacked
from .rrt import (
    BARRIER_DIP_TOL,
    PlanResult,
    SteerConfig,
    SteerResult,
    Tree,
    UnsafeStartError,
    _commit_allowed,
    _single_sample_trajectory,
    bound_rows,
    goal_check,
    sample_vertex,
)

# Spherical obstacles are circle obstacles with 3D centers.
SphereObstacle = CircleObstacle


def rotation(axis: str, angle: float) -> np.ndarray:
    """4x4 coordinate-change rotation about a principal axis."""
    c, s = math.cos(angle), math.sin(angle)
    if axis == "z":
        return np.array([[c, s, 0.0, 0.0], [-s, c, 0.0, 0.0],
                         [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
    if axis == "x":
        return np.array([[1.0, 0.0, 0.0, 0.0], [0.0, c, s, 0.0],
                         [0.0, -s, c, 0.0], [0.0, 0.0, 0.0, 1.0]])
    if axis == "y":
        return np.array([[c, 0.0, -s, 0.0], [0.0, 1.0, 0.0, 0.0],
                         [s, 0.0, c, 0.0], [0.0, 0.0, 0.0, 1.0]])
    raise ValueError(f"unknown axis {axis!r}")


def rotation_rate(axis: str, angle: float) -> np.ndarray:
    """Derivative of rotation(axis, angle) with respect to the angle."""
    c, s = math.cos(angle), math.sin(angle)
    if axis == "z":
        return np.array([[-s, c, 0.0, 0.0], [-c, -s, 0.0, 0.0],
                         [0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]])
    if axis == "x":
        return np.array([[0.0, 0.0, 0.0, 0.0], [0.0, -s, c, 0.0],
                         [0.0, -c, -s, 0.0], [0.0, 0.0, 0.0, 0.0]])
    if axis == "y":
        return np.array([[-s, 0.0, -c, 0.0], [0.0, 0.0, 0.0, 0.0],
                         [c, 0.0, -s, 0.0], [0.0, 0.0, 0.0, 0.0]])
    raise ValueError(f"unknown axis {axis!r}")


def translation(axis: str, dist: float) -> np.ndarray:
    """4x4 coordinate shift: adds ``dist`` to the given coordinate."""
    m = np.eye(4)
    m[{"x": 0, "y": 1, "z": 2}[axis], 3] = dist
    return m


@dataclass(frozen=True, eq=False)
class ChainStage:
    """One link's transform increment: frame_j = pre @ R(offset + sign*theta_j) @ post @ frame_{j-1}."""

    pre: np.ndarray
    axis: str
    angle_offset: float
    angle_sign: float
    post: np.ndarray


@dataclass(eq=False)
class KinematicChain:
    """Stage sequence plus per-link cylinder radii and axial extents.

    ``link_extents[j]`` is the (min, max) span of link j+1's cylinder along
    its frame's local x-axis.
    """

    name: str
    stages: list[ChainStage]
    link_radii: np.ndarray
    link_extents: list[tuple[float, float]]

    def __post_init__(self):
        self.link_radii = np.asarray(self.link_radii, dtype=float).reshape(-1)
        if not (len(self.stages) == self.link_radii.size == len(self.link_extents)):
            raise ValueError("stages, radii and extents must have equal length")
        if np.any(self.link_radii <= 0):
            raise ValueError("link radii must be positive")
        for lo, hi in self.link_extents:
            if not (lo <= hi):
                raise ValueError("extent min must not exceed max")

    @property
    def dof(self) -> int:
        return len(self.stages)

    def check_joint_state(self, theta: JointState) -> np.ndarray:
        if theta.dof != self.dof:
            raise ValueError(f"chain {self.name!r} has {self.dof} joints, state has {theta.dof}")
        return theta.theta


def two_link_chain(l1: float = 3.0, l2: float = 3.0, link_radius: float = 0.3) -> KinematicChain:
    """Planar two-link arm; both links lie along their frame's +x axis."""
    eye = np.eye(4)
    stages = [
        ChainStage(eye, "z", 0.0, 1.0, eye),
        ChainStage(eye, "z", 0.0, 1.0, translation("x", -l1)),
    ]
    return KinematicChain("two-link", stages, [link_radius, link_radius],
                          [(0.0, l1), (0.0, l2)])


# Left-arm mount and segment lengths (meters).
BAXTER_LENGTHS = {
    "L": 0.278, "h": 0.064, "H": 1.104,
    "L1": 0.069, "L2": 0.36435, "L3": 0.069,
}


def baxter_left_arm_chain(link_radius: float = 0.5) -> KinematicChain:
    """Four position joints of the Baxter left arm.

    Only the four position degrees of freedom are modeled; wrist links
    beyond the last controlled frame and the torso mount below the first
    are not collision-checked.
    """
    d = BAXTER_LENGTHS
    eye = np.eye(4)
    base = (rotation("z", math.pi / 4.0) @ translation("y", d["h"])
            @ translation("x", -d["L"]) @ translation("z", -d["H"]))
    stages = [
        ChainStage(eye, "z", 0.0, 1.0, base),
        ChainStage(eye, "z", -math.pi / 2.0, -1.0, translation("x", -d["L1"]) @ rotation("x", math.pi / 2.0)),
        ChainStage(translation("z", -d["L2"]), "z", 0.0, -1.0, rotation("x", -math.pi / 2.0)),
        ChainStage(rotation("x", math.pi / 2.0) @ translation("x", -d["L3"]), "z", 0.0, -1.0, eye),
    ]
    extents = [(0.0, d["L1"]), (0.0, d["L2"]), (-d["L2"], 0.0), (-d["L3"], 0.0)]
    radii = [link_radius] * 4
    return KinematicChain("baxter-left", stages, radii, extents)


def frames_with_gradients(chain: KinematicChain, theta: np.ndarray):
    """World-to-frame transforms and their joint-angle gradients, all links.

    Returns (frames, grads) with frames[j] the 4x4 transform of link j+1 and
    grads[j][m] = d frames[j] / d theta_{m+1} for m <= j (later joints do
    not affect earlier frames).
    """
    frames: list[np.ndarray] = []
    grads: list[list[np.ndarray]] = []
    P = np.eye(4)
    dP: list[np.ndarray] = []
    for j, st in enumerate(chain.stages):
        ang = st.angle_offset + st.angle_sign * float(theta[j])
        Nj = st.pre @ rotation(st.axis, ang) @ st.post
        dNj = st.angle_sign * (st.pre @ rotation_rate(st.axis, ang) @ st.post)
        dP = [Nj @ g for g in dP]
        dP.append(dNj @ P)
        P = Nj @ P
        frames.append(P)
        grads.append(list(dP))
    return frames, grads


def link_frame(chain: KinematicChain, j: int, theta: JointState) -> np.ndarray:
    """World-to-link transform of link j (1-based), as a 4x4 matrix."""
    angles = chain.check_joint_state(theta)
    if not (1 <= j <= chain.dof):
        raise IndexError(f"link index {j} out of range 1..{chain.dof}")
    frames, _ = frames_with_gradients(chain, angles)
    return frames[j - 1]


def _homogeneous_point(p: np.ndarray) -> np.ndarray:
    out = np.ones(4)
    out[:3] = p
    return out


def _homogeneous_vector(v: np.ndarray) -> np.ndarray:
    out = np.zeros(4)
    out[:3] = v
    return out


def _world_center(obs: CircleObstacle, t: float) -> np.ndarray:
    c = obs.position_at(t)
    if c.size == 2:
        c = np.array([c[0], c[1], 0.0])
    return c


def _world_velocity(obs: CircleObstacle, t: float) -> np.ndarray:
    v = obs.velocity_at(t)
    if v.size == 2:
        v = np.array([v[0], v[1], 0.0])
    return v


def obstacle_in_link_frame(chain: KinematicChain, j: int, theta: JointState,
                           obs: CircleObstacle, t: float = 0.0) -> np.ndarray:
    """Obstacle center at time t expressed in link j's frame."""
    P = link_frame(chain, j, theta)
    return (P @ _homogeneous_point(_world_center(obs, t)))[:3]


def link_barrier(chain: KinematicChain, j: int, theta: JointState,
                 obs: CircleObstacle, t: float = 0.0) -> float:
    """Squared distance from the obstacle center to the cylinder axis,
    minus the squared radius sum."""
    p = obstacle_in_link_frame(chain, j, theta, obs, t)
    r = obs.radius + chain.link_radii[j - 1]
    return float(p[1] * p[1] + p[2] * p[2] - r * r)


def link_barrier_rate_row(chain: KinematicChain, j: int, theta: JointState,
                          obs: CircleObstacle, t: float, gains: FirstOrderGains) -> tuple[np.ndarray, float]:
    """Constraint row a.w >= b over joint rates encoding dh/dt + k h >= 0.

    dh/dt collects the joint-motion terms through the frame gradients and
    the obstacle-motion term through the frame applied to the obstacle's
    world velocity (a direction, so its homogeneous coordinate is zero).
    """
    angles = chain.check_joint_state(theta)
    if not (1 <= j <= chain.dof):
        raise IndexError(f"link index {j} out of range 1..{chain.dof}")
    frames, grads = frames_with_gradients(chain, angles)
    P = frames[j - 1]
    xc = _homogeneous_point(_world_center(obs, t))
    p = P @ xc
    y, z = p[1], p[2]
    r = obs.radius + chain.link_radii[j - 1]
    h = float(y * y + z * z - r * r)
    a = np.zeros(chain.dof)
    for m, g in enumerate(grads[j - 1]):
        dp = g @ xc
        a[m] = 2.0 * (y * dp[1] + z * dp[2])
    pv = P @ _homogeneous_vector(_world_velocity(obs, t))
    m_obs = 2.0 * (y * pv[1] + z * pv[2])
    b = -gains.k * h - float(m_obs)
    return a, b


@dataclass(frozen=True)
class ActivationThresholds:
    """Distance gates for constraint activation, projection-inside case first."""

    delta1: float = 5.0
    delta2: float = 0.5

    def __post_init__(self):
        if not (self.delta1 > self.delta2 > 0.0):
            raise ValueError("thresholds must satisfy delta1 > delta2 > 0")


def cylinder_clearance(chain: KinematicChain, j: int, theta: JointState,
                       obs: CircleObstacle, t: float = 0.0) -> tuple[float, bool]:
    """Surface clearance between the finite link cylinder and the sphere.

    Returns (gap, projection_inside): gap is the axis-segment distance minus
    the radius sum, clamped at zero; projection_inside says whether the
    obstacle's axial projection falls within the link extent.
    """
    p = obstacle_in_link_frame(chain, j, theta, obs, t)
    lo, hi = chain.link_extents[j - 1]
    rho = math.hypot(p[1], p[2])
    overshoot = max(lo - p[0], p[0] - hi, 0.0)
    gap = max(math.hypot(rho, overshoot) - (obs.radius + chain.link_radii[j - 1]), 0.0)
    return gap, overshoot == 0.0


def _activation_from_geometry(gap: float, overshoot: float,
                              thresholds: ActivationThresholds) -> bool:
    # Projection inside the extent: gate on the surface clearance. Otherwise
    # gate on the axial overshoot past the link end: a shell proportional to
    # the obstacle size would wall off space the link can never touch, which
    # is exactly what the second threshold exists to avoid. Contact always
    # activates regardless of the projection.
    if gap <= 0.0:
        return True
    if overshoot == 0.0:
        return gap < thresholds.delta1
    return overshoot < thresholds.delta2


def activation(chain: KinematicChain, j: int, theta: JointState, obs: CircleObstacle,
               t: float, thresholds: ActivationThresholds) -> bool:
    """Whether link j's barrier against this obstacle enters the QP."""
    p = obstacle_in_link_frame(chain, j, theta, obs, t)
    lo, hi = chain.link_extents[j - 1]
    rho = math.hypot(p[1], p[2])
    overshoot = max(lo - p[0], p[0] - hi, 0.0)
    gap = max(math.hypot(rho, overshoot) - (obs.radius + chain.link_radii[j - 1]), 0.0)
    return _activation_from_geometry(gap, overshoot, thresholds)


def active_barrier_rows(chain: KinematicChain, theta: JointState, obstacles: Sequence[CircleObstacle],
                        t: float, thresholds: ActivationThresholds, gains: FirstOrderGains):
    """Rows plus (obstacle, link) index pairs for every active barrier."""
    rows = []
    pairs = []
    for i, obs in enumerate(obstacles):
        for j in range(1, chain.dof + 1):
            if activation(chain, j, theta, obs, t, thresholds):
                rows.append(link_barrier_rate_row(chain, j, theta, obs, t, gains))
                pairs.append((i, j))
    return rows, pairs


def _pair_geometry(chain: KinematicChain, frames, j: int, xc_h: np.ndarray, r_obs: float):
    """(h, gap, overshoot, link-frame point) for one obstacle/link pair."""
    p = frames[j - 1] @ xc_h
    lo, hi = chain.link_extents[j - 1]
    rho = math.hypot(p[1], p[2])
    overshoot = max(lo - p[0], p[0] - hi, 0.0)
    r = r_obs + chain.link_radii[j - 1]
    gap = max(math.hypot(rho, overshoot) - r, 0.0)
    h = p[1] * p[1] + p[2] * p[2] - r * r
    return h, gap, overshoot, p


def _active_rows_from_frames(chain: KinematicChain, frames, grads, obstacles, t: float,
                             thresholds: ActivationThresholds, k: float):
    """Active constraint rows plus the smallest active barrier value."""
    rows_a, rows_b, pairs = [], [], []
    min_h = math.inf
    for i, obs in enumerate(obstacles):
        xc_h = _homogeneous_point(_world_center(obs, t))
        vel_h = _homogeneous_vector(_world_velocity(obs, t))
        for j in range(1, chain.dof + 1):
            h, gap, overshoot, p = _pair_geometry(chain, frames, j, xc_h, obs.radius)
            if not _activation_from_geometry(gap, overshoot, thresholds):
                continue
            min_h = min(min_h, h)
            a = np.zeros(chain.dof)
            for m, g in enumerate(grads[j - 1]):
                dp = g @ xc_h
                a[m] = 2.0 * (p[1] * dp[1] + p[2] * dp[2])
            pv = frames[j - 1] @ vel_h
            rows_a.append(a)
            rows_b.append(-k * h - 2.0 * (p[1] * pv[1] + p[2] * pv[2]))
            pairs.append((i, j))
    return rows_a, rows_b, pairs, min_h


def _min_active_barrier(chain: KinematicChain, frames, obstacles, t: float,
                        thresholds: ActivationThresholds) -> float:
    worst = math.inf
    for obs in obstacles:
        xc_h = _homogeneous_point(_world_center(obs, t))
        for j in range(1, chain.dof + 1):
            h, gap, overshoot, _ = _pair_geometry(chain, frames, j, xc_h, obs.radius)
            if _activation_from_geometry(gap, overshoot, thresholds):
                worst = min(worst, h)
    return worst


def arm_safe_steer(theta: JointState, u_ref: np.ndarray, cfg: SteerConfig,
                   chain: KinematicChain, obstacles: Sequence[CircleObstacle],
                   thresholds: ActivationThresholds, gains: FirstOrderGains,
                   bounds: ControlBounds, ws: Workspace, t0: float = 0.0) -> SteerResult:
    """Integrate joint rates over t_h under the active-barrier QP filter.

    Activation is re-evaluated every substep. The edge aborts on QP
    infeasibility, on leaving the joint box, or if an active barrier dips
    negative; the executed prefix is returned either way.
    """
    angles = chain.check_joint_state(theta).copy()
    u_ref = np.asarray(u_ref, dtype=float).reshape(-1)
    if u_ref.size != chain.dof:
        raise ValueError("reference rate dimension must match the chain dof")
    frames, grads = frames_with_gradients(chain, angles)
    if _min_active_barrier(chain, frames, obstacles, t0, thresholds) < 0.0:
        raise UnsafeStartError("an active barrier is negative at the steer start")
    dt = cfg.dt
    u_ref_in_bounds = bounds.contains(u_ref)
    G_box, d_box = bound_rows(bounds)
    times = [t0]
    states = [angles.copy()]
    controls = [np.zeros(chain.dof)]
    t = t0
    feasible = True
    margin_shift = gains.k * cfg.barrier_margin
    for _ in range(cfg.substeps):
        rows_a, rows_b, _, _ = _active_rows_from_frames(chain, frames, grads, obstacles, t,
                                                        thresholds, gains.k)
        if rows_a:
            A = np.array(rows_a)
            b = np.array(rows_b) + margin_shift
            if u_ref_in_bounds and np.all(A @ u_ref >= b - 1e-9):
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
        new_angles = angles + u * dt
        new_t = t + dt
        if not ws.contains(new_angles):
            feasible = False
            break
        new_frames, new_grads = frames_with_gradients(chain, new_angles)
        if _min_active_barrier(chain, new_frames, obstacles, new_t, thresholds) < -BARRIER_DIP_TOL:
            feasible = False
            break
        controls[-1] = np.asarray(u, dtype=float).copy()
        times.append(new_t)
        states.append(new_angles.copy())
        controls.append(np.zeros(chain.dof))
        angles, t = new_angles, new_t
        frames, grads = new_frames, new_grads
    return SteerResult(np.array(times), np.array(states), np.array(controls), "joints", feasible)


def sample_direction(theta_current: np.ndarray, theta_goal: np.ndarray, sigma2: float,
                     eta_ss: float, rng: RandomSource) -> np.ndarray:
    """Unit expansion direction in joint space.

    Biased mode (probability 1/(eta_ss+1)): the unit vector toward the goal
    plus an isotropic zero-mean Gaussian with variance sigma2 per axis,
    renormalized. Random mode: a uniformly random unit vector. The output
    always has unit norm.
    """
    theta_current = np.asarray(theta_current, dtype=float).reshape(-1)
    theta_goal = np.asarray(theta_goal, dtype=float).reshape(-1)
    diff = theta_goal - theta_current
    dist = float(np.linalg.norm(diff))
    if dist < 1e-12:
        raise ValueError("direction undefined: configuration coincides with the goal")
    dof = theta_current.size
    if eta_ss > 0.0:
        p_random = 1.0 if math.isinf(eta_ss) else eta_ss / (eta_ss + 1.0)
        if rng.random() < p_random:
            return rng.unit_vector(dof)
    v = diff / dist + rng.normal_vector(dof, math.sqrt(sigma2))
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        return rng.unit_vector(dof)
    return v / n


def arm_plan(chain: KinematicChain, theta_init: JointState, theta_goal: JointState,
             goal_radius: float, obstacles: Sequence[CircleObstacle], cfg: SteerConfig,
             thresholds: ActivationThresholds, gains: FirstOrderGains, bounds: ControlBounds,
             rng: RandomSource, max_iters: int = 5000,
             joint_limits: Workspace | None = None) -> PlanResult:
    """Steering-tree search in joint space toward a goal configuration ball."""
    chain.check_joint_state(theta_init)
    chain.check_joint_state(theta_goal)
    if joint_limits is None:
        lim = math.pi * np.ones(chain.dof)
        joint_limits = Workspace(-lim, lim, theta_goal.theta, goal_radius)
    else:
        joint_limits = joint_limits.with_goal(theta_goal.theta, goal_radius)
    for i, obs in enumerate(obstacles):
        for j in range(1, chain.dof + 1):
            if activation(chain, j, theta_init, obs, 0.0, thresholds) and \
                    link_barrier(chain, j, theta_init, obs, 0.0) < 0.0:
                raise UnsafeStartError(f"active barrier for obstacle {i}, link {j} is negative at start")
    tree = Tree(theta_init, t_init=0.0)
    if goal_check(theta_init.theta, joint_limits):
        return PlanResult("reached", tree, _single_sample_trajectory(theta_init, 0.0), 0)
    for iteration in range(1, max_iters + 1):
        vi = sample_vertex(tree, cfg.eta_vs, rng)
        vertex = tree.vertices[vi]
        angles = vertex.state.theta
        if float(np.linalg.norm(theta_goal.theta - angles)) < 1e-12:
            continue
        direction = sample_direction(angles, theta_goal.theta, cfg.sigma2, cfg.eta_ss, rng)
        u_ref = cfg.v_ref * direction
        res = arm_safe_steer(vertex.state, u_ref, cfg, chain, obstacles, thresholds,
                             gains, bounds, joint_limits, t0=vertex.time)
        if not _commit_allowed(res, cfg):
            continue
        child_state = res.end_state()
        child = tree.add_child(vi, child_state, res.as_trajectory())
        if goal_check(child_state.theta, joint_limits):
            return PlanResult("reached", tree, tree.path_to(child), iteration)
    return PlanResult("exhausted", tree, None, max_iters)

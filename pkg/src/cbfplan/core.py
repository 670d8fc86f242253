"""Shared domain types: robot states, obstacles, workspaces, trajectories,
and the seeded random source every sampler draws from.

All quantities are SI (meters, seconds, radians). Time is continuous and
integrators elsewhere in the package use explicit fixed-step Euler updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

_SEED_MASK = (1 << 64) - 1


def wrap_angle(angle: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    r = math.remainder(angle, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


def _as_float_vector(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1).copy()
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    return arr


@dataclass
class PlanarState:
    """Position-only robot state for the velocity-controlled point model."""

    x1: float
    x2: float

    def __post_init__(self):
        self.x1 = float(self.x1)
        self.x2 = float(self.x2)
        if not (math.isfinite(self.x1) and math.isfinite(self.x2)):
            raise ValueError("planar state coordinates must be finite")

    def position(self) -> np.ndarray:
        return np.array([self.x1, self.x2])


@dataclass
class UnicycleState:
    """Pose of a constant-speed unicycle: location plus heading.

    The heading is normalized to (-pi, pi] on construction.
    """

    x1: float
    x2: float
    theta: float

    def __post_init__(self):
        self.x1 = float(self.x1)
        self.x2 = float(self.x2)
        if not (math.isfinite(self.x1) and math.isfinite(self.x2) and math.isfinite(self.theta)):
            raise ValueError("unicycle state must be finite")
        self.theta = wrap_angle(float(self.theta))

    def position(self) -> np.ndarray:
        return np.array([self.x1, self.x2])


@dataclass(eq=False)
class JointState:
    """Joint-angle vector of a serial chain (radians)."""

    theta: np.ndarray

    def __post_init__(self):
        self.theta = _as_float_vector(self.theta, "theta")
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("joint angles must be finite")

    @property
    def dof(self) -> int:
        return self.theta.size

    def position(self) -> np.ndarray:
        return self.theta.copy()


@dataclass
class ControlBounds:
    """Elementwise box on a control vector; entries may be infinite."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float).reshape(-1).copy()
        self.upper = np.asarray(self.upper, dtype=float).reshape(-1).copy()
        if self.lower.shape != self.upper.shape:
            raise ValueError("bound vectors must have equal length")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def dimension(self) -> int:
        return self.lower.size

    def contains(self, u: np.ndarray, tol: float = 0.0) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))

    @staticmethod
    def symmetric(limit: float, dim: int) -> "ControlBounds":
        limit = float(limit)
        return ControlBounds(-limit * np.ones(dim), limit * np.ones(dim))

    @staticmethod
    def unbounded(dim: int) -> "ControlBounds":
        return ControlBounds(np.full(dim, -np.inf), np.full(dim, np.inf))


@dataclass(eq=False)
class CircleObstacle:
    """Disc (2D) or sphere (3D) moving with a known constant velocity."""

    center0: np.ndarray
    radius: float
    velocity: np.ndarray | None = None

    def __post_init__(self):
        self.center0 = _as_float_vector(self.center0, "center0")
        if self.center0.size not in (2, 3):
            raise ValueError("obstacle center must be 2D or 3D")
        self.radius = float(self.radius)
        if not (self.radius > 0.0 and math.isfinite(self.radius)):
            raise ValueError("obstacle radius must be positive and finite")
        if self.velocity is None:
            self.velocity = np.zeros_like(self.center0)
        else:
            self.velocity = _as_float_vector(self.velocity, "velocity")
        if self.velocity.shape != self.center0.shape:
            raise ValueError("velocity dimension must match center")
        if not np.all(np.isfinite(self.velocity)):
            raise ValueError("obstacle velocity must be finite")

    def position_at(self, t: float) -> np.ndarray:
        return self.center0 + self.velocity * float(t)

    def velocity_at(self, t: float) -> np.ndarray:
        return self.velocity


def obstacle_position_at(obs: CircleObstacle, t: float) -> np.ndarray:
    """Center of a constant-velocity obstacle at time t >= 0."""
    return obs.position_at(t)


@dataclass(eq=False)
class Workspace:
    """Axis-aligned state box plus a circular goal region."""

    state_lower: np.ndarray
    state_upper: np.ndarray
    goal_center: np.ndarray
    goal_radius: float

    def __post_init__(self):
        self.state_lower = _as_float_vector(self.state_lower, "state_lower")
        self.state_upper = _as_float_vector(self.state_upper, "state_upper")
        self.goal_center = _as_float_vector(self.goal_center, "goal_center")
        self.goal_radius = float(self.goal_radius)
        if self.state_lower.shape != self.state_upper.shape:
            raise ValueError("state box bounds must have equal length")
        if np.any(self.state_lower >= self.state_upper):
            raise ValueError("state box must have positive extent")
        if self.goal_center.shape != self.state_lower.shape:
            raise ValueError("goal center dimension must match the state box")
        if not (self.goal_radius > 0.0):
            raise ValueError("goal radius must be positive")
        clamped = np.clip(self.goal_center, self.state_lower, self.state_upper)
        if float(np.linalg.norm(clamped - self.goal_center)) > self.goal_radius:
            raise ValueError("goal region does not intersect the state box")

    @property
    def dimension(self) -> int:
        return self.state_lower.size

    def contains(self, pos: np.ndarray) -> bool:
        pos = np.asarray(pos, dtype=float)
        return bool(np.all(pos >= self.state_lower) and np.all(pos <= self.state_upper))

    def with_goal(self, goal_center, goal_radius: float | None = None) -> "Workspace":
        return Workspace(
            self.state_lower.copy(),
            self.state_upper.copy(),
            np.asarray(goal_center, dtype=float),
            self.goal_radius if goal_radius is None else goal_radius,
        )


# Column layouts of the numeric trajectory rows, per dynamics family.
TRAJECTORY_MODELS = {
    "planar": (("x1", "x2"), ("u1", "u2")),
    "unicycle": (("x1", "x2", "theta"), ("omega",)),
    "joints": (None, None),  # dof-dependent, see column_names()
}


@dataclass(eq=False)
class Trajectory:
    """Time-stamped state/control samples from one dynamics family.

    ``controls[i]`` is the control held from ``times[i]`` to ``times[i+1]``;
    the final row is zero by convention.
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    model: str

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.controls = np.atleast_2d(np.asarray(self.controls, dtype=float))
        if self.model not in TRAJECTORY_MODELS:
            raise ValueError(f"unknown trajectory model {self.model!r}")
        n = self.times.size
        if self.states.shape[0] != n or self.controls.shape[0] != n:
            raise ValueError("times, states and controls must have equal length")
        if n > 1 and not np.all(np.diff(self.times) > 0.0):
            raise ValueError("sample times must be strictly increasing")

    def __len__(self) -> int:
        return self.times.size

    @property
    def position_columns(self) -> slice:
        # Planar and unicycle rows carry workspace position first; joint rows
        # are positions in configuration space.
        if self.model in ("planar", "unicycle"):
            return slice(0, 2)
        return slice(0, self.states.shape[1])

    def positions(self) -> np.ndarray:
        return self.states[:, self.position_columns]

    def position_at(self, t: float) -> np.ndarray:
        """Linear interpolation of position, held constant outside the span."""
        t = float(t)
        pos = self.positions()
        if t <= self.times[0]:
            return pos[0].copy()
        if t >= self.times[-1]:
            return pos[-1].copy()
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        t0, t1 = self.times[i], self.times[i + 1]
        w = (t - t0) / (t1 - t0)
        return (1.0 - w) * pos[i] + w * pos[i + 1]

    def samples(self) -> Iterator[tuple[float, np.ndarray, np.ndarray]]:
        for i in range(len(self)):
            yield float(self.times[i]), self.states[i], self.controls[i]

    def column_names(self) -> tuple[tuple[str, ...], tuple[str, ...]]:
        if self.model == "joints":
            d = self.states.shape[1]
            return (
                tuple(f"theta{i + 1}" for i in range(d)),
                tuple(f"u{i + 1}" for i in range(d)),
            )
        state_cols, control_cols = TRAJECTORY_MODELS[self.model]
        return state_cols, control_cols


class RandomSource:
    """Deterministic random stream: identical seed and key give identical draws.

    Every sampler in the package takes one of these explicitly; there is no
    process-global generator, so multi-robot runs replay exactly.
    """

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        self.seed = int(seed) & _SEED_MASK
        self.key = tuple(int(k) for k in key)
        entropy = (self.seed,) + self.key
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def derive(self, *key: int) -> "RandomSource":
        """Independent child stream; children with distinct keys never overlap."""
        return RandomSource(self.seed, self.key + tuple(key))

    def random(self) -> float:
        return float(self._gen.random())

    def uniform(self, low: float, high: float) -> float:
        return float(self._gen.uniform(low, high))

    def integer(self, n: int) -> int:
        return int(self._gen.integers(n))

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        return float(self._gen.normal(mean, std))

    def normal_vector(self, dim: int, std: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, std, size=dim)

    def angle(self) -> float:
        return wrap_angle(self.uniform(-math.pi, math.pi))

    def unit_vector(self, dim: int) -> np.ndarray:
        while True:
            v = self._gen.normal(size=dim)
            n = float(np.linalg.norm(v))
            if n > 1e-12:
                return v / n


def normal_sample(rng: RandomSource, mean: float, variance: float) -> float:
    """One Gaussian draw with the given mean and variance (> 0)."""
    variance = float(variance)
    if not (variance > 0.0):
        raise ValueError("variance must be positive")
    return rng.normal(float(mean), math.sqrt(variance))

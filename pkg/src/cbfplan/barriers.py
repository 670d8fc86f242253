"""Barrier values and linear-in-control constraint rows for circular
obstacles.

The barrier for an obstacle of radius r (inflated by the robot's own radius)
is the squared clearance

    h(x, t) = ||x - c(t)||^2 - (r + inflation)^2,

positive outside the inflated disc, zero on it, negative inside. Two
constraint families are provided:

* first order, for velocity-controlled point robots: a.u >= b encodes
  dh/dt + k h >= 0, linear in the commanded velocity;
* second order, for a constant-speed unicycle whose only input is the turn
  rate: a.w >= b encodes d2h/dt2 + k2 dh/dt + k1 h >= 0. The control enters
  h only through two differentiations, hence the second-order condition.

The second-order coefficients are derived by the chain rule along the
unicycle and obstacle dynamics (velocities constant within a step) and are
validated against finite differences in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CircleObstacle, UnicycleState


@dataclass(frozen=True)
class FirstOrderGains:
    """Gain k > 0 of the first-order condition dh/dt + k h >= 0."""

    k: float = 1.0

    def __post_init__(self):
        if not (self.k > 0.0 and math.isfinite(self.k)):
            raise ValueError("gain k must be positive and finite")


@dataclass(frozen=True)
class SecondOrderGains:
    """Gains of d2h/dt2 + k2 dh/dt + k1 h >= 0.

    Both must be positive and s^2 + k2 s + k1 must have negative real roots
    (k2^2 >= 4 k1), which is what makes the condition render the safe set
    forward invariant when it holds from a safe start.
    """

    k1: float = 2.0
    k2: float = 4.0

    def __post_init__(self):
        if not (self.k1 > 0.0 and self.k2 > 0.0):
            raise ValueError("gains must be positive")
        if self.k2 * self.k2 < 4.0 * self.k1:
            raise ValueError("characteristic polynomial must have real negative roots (k2^2 >= 4 k1)")


def barrier_value(pos, obs: CircleObstacle, t: float = 0.0, inflation: float = 0.0) -> float:
    """Squared clearance from the inflated obstacle at time t."""
    delta = np.asarray(pos, dtype=float) - obs.position_at(t)
    r = obs.radius + inflation
    return float(delta @ delta - r * r)


def velocity_row_xy(pos, obs: CircleObstacle, t: float, gains: FirstOrderGains,
                    inflation: float = 0.0) -> tuple[np.ndarray, float]:
    """First-order row over the velocity vector u: a.u >= b.

    With delta = pos - c(t), dh/dt = 2 delta . (u - v_obs), so
    a = 2 delta and b = -k h - m where m = -2 delta . v_obs is the
    obstacle-motion share of dh/dt (zero for static obstacles).
    """
    pos = np.asarray(pos, dtype=float)
    delta = pos - obs.position_at(t)
    r = obs.radius + inflation
    h = float(delta @ delta - r * r)
    a = 2.0 * delta
    m = float(-2.0 * delta @ obs.velocity_at(t))
    b = -gains.k * h - m
    return a, b


def velocity_row(pos, theta: float, obs: CircleObstacle, t: float, gains: FirstOrderGains,
                 inflation: float = 0.0) -> tuple[float, float]:
    """First-order row over the scalar speed v along a fixed heading theta."""
    a_xy, b = velocity_row_xy(pos, obs, t, gains, inflation)
    a = float(a_xy[0] * math.cos(theta) + a_xy[1] * math.sin(theta))
    return a, b


def turn_rate_row(state: UnicycleState, v_const: float, obs: CircleObstacle, t: float,
                  gains: SecondOrderGains, inflation: float = 0.0) -> tuple[float, float]:
    """Second-order row over the turn rate w for a unicycle at constant speed.

    Let delta = pos - c(t) and d = (v cos theta, v sin theta) - v_obs be the
    relative velocity. Then

        dh/dt   = 2 delta . d
        d2h/dt2 = 2 ||d||^2 + 2 v w (delta_2 cos theta - delta_1 sin theta)

    and a.w >= b with a the w-coefficient above and
    b = -(2 ||d||^2 + k2 dh/dt + k1 h).
    """
    v = float(v_const)
    ct, st = math.cos(state.theta), math.sin(state.theta)
    delta = state.position() - obs.position_at(t)
    v_obs = obs.velocity_at(t)
    d_rel = np.array([v * ct, v * st]) - v_obs
    r = obs.radius + inflation
    h = float(delta @ delta - r * r)
    h_dot = float(2.0 * delta @ d_rel)
    a = 2.0 * v * (delta[1] * ct - delta[0] * st)
    b = -(2.0 * float(d_rel @ d_rel) + gains.k2 * h_dot + gains.k1 * h)
    return float(a), float(b)

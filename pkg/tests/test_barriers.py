import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbfplan.barriers import (
    FirstOrderGains,
    SecondOrderGains,
    barrier_value,
    turn_rate_row,
    velocity_row,
    velocity_row_xy,
)
from cbfplan.core import CircleObstacle, UnicycleState

coord = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_gain_validation():
    with pytest.raises(ValueError):
        FirstOrderGains(0.0)
    with pytest.raises(ValueError):
        SecondOrderGains(k1=2.0, k2=1.0)  # complex roots
    SecondOrderGains(k1=2.0, k2=4.0)  # the default pair is admissible


def test_barrier_value_examples():
    obs = CircleObstacle([0.0, 0.0], 1.0)
    assert barrier_value([3.0, 4.0], obs) == pytest.approx(24.0)
    # on the inflated boundary
    obs2 = CircleObstacle([0.0, 0.0], 1.0)
    boundary = [1.5, 0.0]
    assert barrier_value(boundary, obs2, inflation=0.5) == pytest.approx(0.0)
    assert barrier_value([0.0, 0.0], obs2) == pytest.approx(-1.0)


def test_velocity_row_hand_example():
    obs = CircleObstacle([0.0, 0.0], 1.0)
    a, b = velocity_row([2.0, 0.0], 0.0, obs, 0.0, FirstOrderGains(1.0))
    assert a == pytest.approx(4.0)
    assert b == pytest.approx(-3.0)


def test_velocity_row_boundary_forbids_inward_motion():
    obs = CircleObstacle([0.0, 0.0], 1.0)
    pos = [1.0, 0.0]  # exactly on the boundary, h = 0
    a, b = velocity_row(pos, math.pi, obs, 0.0, FirstOrderGains(1.0))
    # constraint a*v >= 0 with a < 0 for the inward-facing heading
    assert b == pytest.approx(0.0)
    assert a < 0.0


def test_moving_obstacle_shifts_rhs_up():
    static = CircleObstacle([5.0, 0.0], 1.0)
    closing = CircleObstacle([5.0, 0.0], 1.0, [-1.0, 0.0])
    _, b_static = velocity_row_xy([0.0, 0.0], static, 0.0, FirstOrderGains(1.0))
    _, b_moving = velocity_row_xy([0.0, 0.0], closing, 0.0, FirstOrderGains(1.0))
    assert b_moving > b_static


def test_velocity_row_rate_matches_finite_differences():
    # dh/dt from the row's a.u + m against central differences along a
    # straight-line rollout with a moving obstacle.
    rng = np.random.default_rng(7)
    gains = FirstOrderGains(1.0)
    eps = 1e-6
    for _ in range(500):
        pos = rng.uniform(-5, 5, 2)
        u = rng.uniform(-2, 2, 2)
        obs = CircleObstacle(rng.uniform(-5, 5, 2), rng.uniform(0.2, 2.0), rng.uniform(-1, 1, 2))
        t0 = rng.uniform(0.5, 3.0)
        a, b = velocity_row_xy(pos, obs, t0, gains)
        h = barrier_value(pos, obs, t0)
        m = -gains.k * h - b
        analytic = float(a @ u) + m
        h_plus = barrier_value(pos + u * eps, obs, t0 + eps)
        h_minus = barrier_value(pos - u * eps, obs, t0 - eps)
        fd = (h_plus - h_minus) / (2 * eps)
        assert abs(analytic - fd) <= 1e-6


def _unicycle_arc(state, v, omega, tau):
    """Exact constant-control unicycle motion."""
    if abs(omega) < 1e-12:
        return (state.x1 + v * math.cos(state.theta) * tau,
                state.x2 + v * math.sin(state.theta) * tau)
    th = state.theta + omega * tau
    return (state.x1 + v / omega * (math.sin(th) - math.sin(state.theta)),
            state.x2 - v / omega * (math.cos(th) - math.cos(state.theta)))


def test_turn_rate_row_far_obstacle_inactive():
    gains = SecondOrderGains()
    state = UnicycleState(0.0, 0.0, 0.0)
    obs = CircleObstacle([0.0, 100.0], 1.0)
    a, b = turn_rate_row(state, 1.5, obs, 0.0, gains)
    # slack for every turn rate within +-10
    assert max(a * -10.0, a * 10.0) >= b
    assert b < -1000


def test_turn_rate_row_symmetric_head_on_has_zero_coefficient():
    gains = SecondOrderGains()
    state = UnicycleState(5.0, 0.0, math.pi)  # on the +x axis, facing the origin
    obs = CircleObstacle([0.0, 0.0], 1.0)
    a, _ = turn_rate_row(state, 1.5, obs, 0.0, gains)
    assert a == pytest.approx(0.0, abs=1e-12)


def test_turn_rate_row_second_derivative_matches_finite_differences():
    rng = np.random.default_rng(11)
    gains = SecondOrderGains()
    eps = 1e-3
    checked = 0
    while checked < 500:
        state = UnicycleState(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-3, 3))
        v = rng.uniform(0.5, 2.5)
        omega = rng.uniform(0.1, 2.0) * rng.choice([-1.0, 1.0])
        obs = CircleObstacle(rng.uniform(-5, 5, 2), rng.uniform(0.3, 2.0), rng.uniform(-0.5, 0.5, 2))
        t0 = rng.uniform(0.5, 2.0)
        h0 = barrier_value(state.position(), obs, t0)
        if abs(h0) < 0.5:
            continue
        checked += 1
        a, b = turn_rate_row(state, v, obs, t0, gains)
        delta = state.position() - obs.position_at(t0)
        d_rel = np.array([v * math.cos(state.theta), v * math.sin(state.theta)]) - obs.velocity_at(t0)
        h_dot = float(2.0 * delta @ d_rel)
        analytic_hddot = a * omega - b - gains.k2 * h_dot - gains.k1 * h0

        def h_at(tau):
            x1, x2 = _unicycle_arc(state, v, omega, tau)
            return barrier_value((x1, x2), obs, t0 + tau)

        fd = (h_at(eps) - 2 * h_at(0.0) + h_at(-eps)) / (eps * eps)
        scale = max(1.0, abs(fd))
        assert abs(analytic_hddot - fd) / scale <= 1e-4


@given(coord, coord, coord, coord, coord, coord)
@settings(max_examples=60)
def test_translation_equivariance(px, py, ox, oy, sx, sy):
    shift = np.array([sx, sy])
    gains = FirstOrderGains(1.0)
    obs = CircleObstacle([ox, oy], 1.0, [0.3, -0.2])
    obs_shifted = CircleObstacle(np.array([ox, oy]) + shift, 1.0, [0.3, -0.2])
    pos = np.array([px, py])
    assert barrier_value(pos, obs, 1.0) == pytest.approx(
        barrier_value(pos + shift, obs_shifted, 1.0), rel=1e-9, abs=1e-7)
    a1, b1 = velocity_row_xy(pos, obs, 1.0, gains)
    a2, b2 = velocity_row_xy(pos + shift, obs_shifted, 1.0, gains)
    assert np.allclose(a1, a2, atol=1e-7)
    assert b1 == pytest.approx(b2, rel=1e-9, abs=1e-7)


def test_closed_loop_forward_invariance_sample():
    # Smaller cousin of the acceptance rollout study: filtered velocity
    # control keeps h nonnegative from safe starts.
    from cbfplan.core import ControlBounds
    from cbfplan.qp import QpProblem, solve

    rng = np.random.default_rng(5)
    gains = FirstOrderGains(1.0)
    bounds = ControlBounds.symmetric(5.0, 2)
    dt = 1e-3
    for _ in range(20):
        obstacles = [CircleObstacle(rng.uniform(-3, 3, 2), rng.uniform(0.3, 1.0))
                     for _ in range(int(rng.integers(1, 4)))]
        while True:
            pos = rng.uniform(-4, 4, 2)
            if all(barrier_value(pos, o, 0.0) >= 0.01 for o in obstacles):
                break
        goal = rng.uniform(-4, 4, 2)
        min_h = math.inf
        t = 0.0
        for _ in range(2000):
            direction = goal - pos
            n = np.linalg.norm(direction)
            u_ref = 0.5 * direction / n if n > 1e-9 else np.zeros(2)
            rows = [velocity_row_xy(pos, o, t, gains) for o in obstacles]
            sol = solve(QpProblem(u_ref, rows, bounds))
            assert sol.feasible
            pos = pos + sol.u_opt * dt
            t += dt
            min_h = min(min_h, min(barrier_value(pos, o, t) for o in obstacles))
        assert min_h >= -1e-4

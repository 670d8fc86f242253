import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbfplan.core import (
    CircleObstacle,
    ControlBounds,
    JointState,
    PlanarState,
    RandomSource,
    Trajectory,
    UnicycleState,
    Workspace,
    normal_sample,
    obstacle_position_at,
    wrap_angle,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@given(st.floats(-1e4, 1e4, allow_nan=False))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


def test_wrap_angle_negative_pi_maps_to_pi():
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)


def test_states_validate():
    s = UnicycleState(1.0, 2.0, 4.0)
    assert -math.pi < s.theta <= math.pi
    with pytest.raises(ValueError):
        PlanarState(float("nan"), 0.0)
    with pytest.raises(ValueError):
        JointState([1.0, float("inf")])
    assert JointState([0.1, 0.2, 0.3]).dof == 3


def test_obstacle_position_examples():
    static = CircleObstacle([1.0, 1.0], 1.0)
    assert np.allclose(obstacle_position_at(static, 7.0), [1.0, 1.0])
    moving = CircleObstacle([0.0, 0.0], 0.5, [0.1, 0.0])
    assert np.allclose(obstacle_position_at(moving, 2.0), [0.2, 0.0])
    assert np.allclose(obstacle_position_at(moving, 0.0), [0.0, 0.0])


@given(finite, finite, finite, finite, st.floats(0.0, 100.0))
@settings(max_examples=50)
def test_obstacle_position_affine_in_time(cx, cy, vx, vy, t):
    obs = CircleObstacle([cx, cy], 1.0, [vx, vy])
    lhs = obstacle_position_at(obs, 2 * t) - obstacle_position_at(obs, t)
    rhs = obstacle_position_at(obs, t) - obstacle_position_at(obs, 0.0)
    assert np.allclose(lhs, rhs, atol=1e-6)


def test_obstacle_validation():
    with pytest.raises(ValueError):
        CircleObstacle([0.0, 0.0], 0.0)
    with pytest.raises(ValueError):
        CircleObstacle([0.0, 0.0], 1.0, [float("inf"), 0.0])
    with pytest.raises(ValueError):
        CircleObstacle([0.0, 0.0, 0.0, 0.0], 1.0)


def test_normal_sample_rejects_bad_variance():
    rng = RandomSource(1)
    with pytest.raises(ValueError):
        normal_sample(rng, 0.0, 0.0)
    with pytest.raises(ValueError):
        normal_sample(rng, 0.0, -1.0)


def test_normal_sample_degenerate_limit():
    rng = RandomSource(1)
    assert normal_sample(rng, 2.5, 1e-30) == pytest.approx(2.5, abs=1e-12)


def test_normal_sample_law_of_large_numbers():
    rng = RandomSource(42)
    draws = np.array([normal_sample(rng, 0.0, 0.2) for _ in range(100_000)])
    assert abs(draws.mean()) < 0.01
    assert abs(draws.var() - 0.2) < 0.005


def test_random_source_determinism():
    a = RandomSource(42)
    b = RandomSource(42)
    assert [a.normal() for _ in range(50)] == [b.normal() for _ in range(50)]
    # derived streams are independent of sibling consumption
    c = RandomSource(42).derive(3)
    d = RandomSource(42)
    _ = [d.normal() for _ in range(10)]
    e = d.derive(3)
    assert [c.random() for _ in range(5)] == [e.random() for _ in range(5)]


def test_random_source_unit_vector():
    rng = RandomSource(0)
    for dim in (2, 3, 4):
        v = rng.unit_vector(dim)
        assert v.shape == (dim,)
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)


def test_control_bounds():
    b = ControlBounds([-1.0, -2.0], [1.0, 2.0])
    assert b.contains([0.5, -1.5])
    assert not b.contains([1.5, 0.0])
    with pytest.raises(ValueError):
        ControlBounds([1.0], [-1.0])
    assert ControlBounds.unbounded(3).contains([1e12, -1e12, 0.0])


def test_workspace_validation():
    ws = Workspace([-2, -2], [8, 8], [6, 6], 0.3)
    assert ws.contains([0, 0]) and not ws.contains([9, 0])
    with pytest.raises(ValueError):
        Workspace([-2, -2], [8, 8], [20, 20], 0.3)  # goal ball misses the box
    with pytest.raises(ValueError):
        Workspace([0, 0], [0, 1], [0, 0.5], 0.1)  # empty extent


def test_trajectory_invariants():
    with pytest.raises(ValueError):
        Trajectory([0.0, 0.0], [[0, 0], [1, 1]], [[0, 0], [0, 0]], "planar")
    with pytest.raises(ValueError):
        Trajectory([0.0], [[0, 0]], [[0, 0]], "spaceship")
    traj = Trajectory([0.0, 1.0, 2.0], [[0, 0], [1, 0], [2, 0]],
                      [[1, 0], [1, 0], [0, 0]], "planar")
    assert len(traj) == 3
    assert np.allclose(traj.position_at(0.5), [0.5, 0.0])
    assert np.allclose(traj.position_at(99.0), [2.0, 0.0])  # constant hold
    assert np.allclose(traj.position_at(-1.0), [0.0, 0.0])

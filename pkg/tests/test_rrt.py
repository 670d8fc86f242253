import math

import numpy as np
import pytest

from cbfplan.barriers import FirstOrderGains, SecondOrderGains, barrier_value
from cbfplan.core import (
    CircleObstacle,
    ControlBounds,
    PlanarState,
    RandomSource,
    UnicycleState,
    Workspace,
)
from cbfplan.rrt import (
    PlanResult,
    SteerConfig,
    Tree,
    UnsafeStartError,
    goal_check,
    plan,
    safe_steer,
    sample_heading,
    sample_vertex,
)

WS = Workspace([-10, -10], [10, 10], [6, 6], 0.3)
BOUNDS = ControlBounds.symmetric(5.0, 2)
GAINS = FirstOrderGains(1.0)


def make_tree(children_counts):
    tree = Tree(PlanarState(0, 0))
    tree.vertices[0].children_count = children_counts[0]
    for c in children_counts[1:]:
        tree.vertices.append(type(tree.vertices[0])(PlanarState(0, 0), 1.0, 0, c))
    return tree


def test_steer_config_validation():
    with pytest.raises(ValueError):
        SteerConfig(substeps=0)
    with pytest.raises(ValueError):
        SteerConfig(sigma2=0.0)
    with pytest.raises(ValueError):
        SteerConfig(partial_commit_fraction=0.0)
    assert SteerConfig(t_h=2.0, substeps=25).dt == pytest.approx(0.08)


def test_sample_vertex_single():
    tree = Tree(PlanarState(0, 0))
    assert sample_vertex(tree, 3.0, RandomSource(0)) == 0


def test_sample_vertex_zero_ratio_picks_min_children():
    tree = make_tree([2, 1, 0, 0])
    rng = RandomSource(1)
    for _ in range(200):
        assert sample_vertex(tree, 0.0, rng) in (2, 3)


def test_sample_vertex_uniform_mode_frequency():
    # children counts make index 3 the unique biased pick; the uniform-mode
    # frequency is estimated from picks of the other vertices.
    tree = make_tree([2, 1, 1, 0])
    rng = RandomSource(42)
    n = 100_000
    not_biased = sum(1 for _ in range(n) if sample_vertex(tree, 3.0, rng) != 3)
    uniform_freq = (not_biased / n) / 0.75
    assert abs(uniform_freq - 0.75) < 0.01


def test_sample_heading_bearing_examples():
    rng = RandomSource(0)
    draws = [sample_heading([0, 0], [1, 1], 1e-12, 0.0, rng) for _ in range(10)]
    assert all(abs(d - math.pi / 4) < 1e-4 for d in draws)
    draws = [sample_heading([0, 0], [-1, 0], 1e-12, 0.0, rng) for _ in range(10)]
    assert all(abs(abs(d) - math.pi) < 1e-4 for d in draws)


def test_sample_heading_rejects_coincident_goal():
    with pytest.raises(ValueError):
        sample_heading([1, 1], [1, 1], 0.2, 0.0, RandomSource(0))


def test_sample_heading_biased_variance():
    rng = RandomSource(42)
    draws = np.array([sample_heading([0, 0], [1, 1], 0.2, 0.0, rng) for _ in range(100_000)])
    assert abs(draws.var() - 0.2) < 0.01  # within 5 percent of 0.2


def test_sample_heading_switching_ratio():
    # eta_ss = 3: uniform mode three times as likely as the biased mode.
    rng = RandomSource(7)
    goal_dir = math.pi / 4
    draws = np.array([sample_heading([0, 0], [1, 1], 1e-6, 3.0, rng) for _ in range(50_000)])
    biased = np.abs(draws - goal_dir) < 0.01
    assert abs(biased.mean() - 0.25) < 0.01


def test_goal_check_boundary():
    assert goal_check([6, 6], WS)
    assert goal_check([6 + 0.3, 6], WS)  # closed region
    assert not goal_check([6 + 0.3 + 1e-9, 6], WS)


def test_safe_steer_straight_without_obstacles():
    cfg = SteerConfig(v_ref=0.5, substeps=100, t_h=1.0)
    res = safe_steer(PlanarState(0, 0), 0.0, cfg, [], GAINS, BOUNDS, WS)
    assert res.feasible
    assert res.steps_done == 100
    assert np.allclose(res.states[-1], [0.5, 0.0], atol=1e-12)
    assert np.allclose(np.diff(res.times), cfg.dt)


def test_safe_steer_bends_and_stays_safe():
    obs = [CircleObstacle([0.0, 0.0], 1.0)]
    cfg = SteerConfig(v_ref=0.5, substeps=300, t_h=6.0)
    res = safe_steer(PlanarState(1.8, 0.15), math.pi, cfg, obs, GAINS, BOUNDS, WS)
    assert res.feasible
    hs = [barrier_value(p, obs[0], t) for t, p in zip(res.times, res.states)]
    assert min(hs) >= -1e-6
    # the edge curves away instead of running straight through
    assert np.max(np.abs(res.states[:, 1] - 0.15)) > 0.05


def test_safe_steer_infeasible_at_step_zero():
    # an obstacle closing faster than the speed bound can absorb
    obs = [CircleObstacle([4.0, 0.0], 1.0, [-12.0, 0.0])]
    cfg = SteerConfig(v_ref=0.5, substeps=50, t_h=1.0)
    res = safe_steer(PlanarState(2.0, 0.0), 0.0, cfg, obs, GAINS, BOUNDS, WS)
    assert not res.feasible
    assert res.steps_done == 0


def test_safe_steer_rejects_unsafe_start():
    obs = [CircleObstacle([0.0, 0.0], 1.0)]
    with pytest.raises(UnsafeStartError):
        safe_steer(PlanarState(0.5, 0.0), 0.0, SteerConfig(), obs, GAINS, BOUNDS, WS)


def test_safe_steer_workspace_box_abort():
    ws = Workspace([-1, -1], [1, 1], [0.5, 0.5], 0.2)
    cfg = SteerConfig(v_ref=1.0, substeps=50, t_h=2.0)
    res = safe_steer(PlanarState(0, 0), 0.0, cfg, [], GAINS, BOUNDS, ws)
    assert not res.feasible
    assert np.all(res.states[:, 0] <= 1.0)


def test_unicycle_steer_uses_sampled_heading_and_constant_speed():
    cfg = SteerConfig(v_ref=1.5, substeps=100, t_h=1.0)
    res = safe_steer(UnicycleState(0, 0, 0.0), math.pi / 2, cfg, [],
                     SecondOrderGains(), ControlBounds.symmetric(2.0, 1), WS)
    assert res.feasible
    assert np.allclose(res.states[-1][:2], [0.0, 1.5], atol=1e-9)
    assert res.states[0][2] == pytest.approx(math.pi / 2)
    steps = np.linalg.norm(np.diff(res.states[:, :2], axis=0), axis=1)
    assert np.allclose(steps, 1.5 * cfg.dt, atol=1e-12)


def test_plan_empty_obstacles_reaches_and_bounds_path_length():
    cfg = SteerConfig(v_ref=0.5, substeps=25, t_h=2.0)
    res = plan(PlanarState(0, 0), WS, [], cfg, GAINS, BOUNDS, RandomSource(3), max_iters=3000)
    assert res.reached
    steps = np.linalg.norm(np.diff(res.reference.positions(), axis=0), axis=1)
    straight = np.linalg.norm(np.array([6.0, 6.0]))
    assert steps.sum() >= straight - WS.goal_radius - 1e-9


def test_plan_zero_budget_is_exhausted_single_vertex():
    res = plan(PlanarState(0, 0), WS, [], SteerConfig(), GAINS, BOUNDS, RandomSource(0), max_iters=0)
    assert res.status == "exhausted"
    assert len(res.tree) == 1


def test_plan_trivial_when_start_in_goal():
    ws = Workspace([-10, -10], [10, 10], [0, 0], 0.5)
    res = plan(PlanarState(0.1, 0), ws, [], SteerConfig(), GAINS, BOUNDS, RandomSource(0))
    assert res.reached and res.iterations == 0
    assert len(res.reference) == 1


def test_plan_unsafe_start_raises():
    obs = [CircleObstacle([0.0, 0.0], 1.0)]
    with pytest.raises(UnsafeStartError):
        plan(PlanarState(0, 0), WS, obs, SteerConfig(), GAINS, BOUNDS, RandomSource(0))


def _plan_small(seed=5):
    obs = [CircleObstacle([3.0, 3.0], 0.8), CircleObstacle([2.0, 5.0], 0.5)]
    cfg = SteerConfig(v_ref=0.5, substeps=25, t_h=2.0)
    return plan(PlanarState(0, 0), WS, obs, cfg, GAINS, BOUNDS, RandomSource(seed),
                max_iters=4000), obs, cfg


def test_plan_determinism():
    a, _, _ = _plan_small()
    b, _, _ = _plan_small()
    assert a.status == b.status
    assert a.iterations == b.iterations
    assert len(a.tree) == len(b.tree)
    for va, vb in zip(a.tree.vertices, b.tree.vertices):
        assert va.time == vb.time and va.parent == vb.parent
        assert np.array_equal(va.state.position(), vb.state.position())
    assert np.array_equal(a.reference.states, b.reference.states)


def test_tree_wellformed_and_safety_along_edges():
    res, obs, cfg = _plan_small()
    tree = res.tree
    assert len(tree.edges) == len(tree.vertices) - 1
    out_degree = [0] * len(tree.vertices)
    for e in tree.edges:
        out_degree[e.parent] += 1
        assert tree.vertices[e.child].parent == e.parent
        assert np.allclose(e.path.states[0], tree.vertices[e.parent].state.position())
        assert np.allclose(e.path.states[-1], tree.vertices[e.child].state.position())
    for v, deg in zip(tree.vertices, out_degree):
        assert v.children_count == deg
    for e in tree.edges:
        for t, p in zip(e.path.times, e.path.states):
            assert min(barrier_value(p, o, t) for o in obs) >= -1e-4
    # monotone time along root-to-leaf paths
    for i in range(len(tree)):
        chain = tree.chain_to_root(i)
        times = [tree.vertices[c].time for c in chain]
        assert all(b > a for a, b in zip(times, times[1:]))


def test_reference_path_continuity():
    res, obs, cfg = _plan_small()
    assert res.reached
    v_max = np.linalg.norm(BOUNDS.upper)
    steps = np.linalg.norm(np.diff(res.reference.positions(), axis=0), axis=1)
    assert np.all(steps <= v_max * cfg.dt + 1e-9)


def test_partial_commit_keeps_prefix():
    # edge aborts mid-horizon against an overspeed closing obstacle; with
    # partial commits enabled the executed prefix becomes a vertex
    obs = [CircleObstacle([4.0, 0.0], 1.0, [-6.0, 0.0])]
    cfg = SteerConfig(v_ref=0.5, substeps=50, t_h=2.0, partial_commit_fraction=0.1)
    res = safe_steer(PlanarState(0, 0), 0.0, cfg, obs, GAINS, BOUNDS, WS)
    assert not res.feasible
    assert res.steps_done >= 5
    from cbfplan.rrt import _commit_allowed
    assert _commit_allowed(res, cfg)
    cfg_discard = SteerConfig(v_ref=0.5, substeps=50, t_h=2.0)
    assert not _commit_allowed(res, cfg_discard)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbfplan.core import ControlBounds
from cbfplan.qp import (
    FEASIBILITY_TOL,
    QpProblem,
    QpSolution,
    solve,
    solve_stacked,
    stacked_constraints,
    verify,
)


def box(limit, dim):
    return ControlBounds.symmetric(limit, dim)


def random_problem(rng, n, max_rows=6, margin_low=0.2):
    """Problem with a known strictly feasible ball around an interior point."""
    interior = rng.uniform(-3.0, 3.0, size=n)
    rows = []
    for _ in range(rng.integers(0, max_rows + 1)):
        a = rng.normal(size=n)
        a /= np.linalg.norm(a)
        margin = rng.uniform(margin_low, 2.0)
        rows.append((a, float(a @ interior - margin)))
    u_ref = rng.uniform(-6.0, 6.0, size=n)
    return QpProblem(u_ref, rows, box(5.0, n)), interior


def test_unconstrained_projection_is_identity():
    p = QpProblem(np.array([0.5]), [], box(5.0, 1))
    s = solve(p)
    assert s.feasible
    assert np.array_equal(s.u_opt, [0.5])
    assert s.active_set == ()
    assert verify(p, s)


def test_halfspace_projection_analytic():
    p = QpProblem(np.array([1.0, 0.0]), [(np.array([1.0, 0.0]), 2.0)], box(5.0, 2))
    s = solve(p)
    # u_ref + (b - a.u_ref)/||a||^2 * a
    assert np.allclose(s.u_opt, [2.0, 0.0], atol=1e-12)
    assert 0 in s.active_set
    assert verify(p, s)


def test_infeasible_row_beyond_bounds():
    p = QpProblem(np.array([0.0]), [(np.array([1.0]), 6.0)], box(5.0, 1))
    s = solve(p)
    assert not s.feasible
    with pytest.raises(ValueError):
        verify(p, s)


def test_bounds_projection_is_clip():
    p = QpProblem(np.array([7.0, -9.0]), [], box(5.0, 2))
    s = solve(p)
    assert np.allclose(s.u_opt, [5.0, -5.0])
    assert verify(p, s)


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError):
        QpProblem(np.array([0.0, 0.0]), [(np.array([1.0]), 0.0)], box(5.0, 2))
    with pytest.raises(ValueError):
        QpProblem(np.array([0.0, 0.0]), [], box(5.0, 3))


def test_verify_rejects_perturbed_solutions():
    p = QpProblem(np.array([1.0, 0.0]), [(np.array([1.0, 0.0]), 2.0)], box(5.0, 2))
    s = solve(p)
    off_face = QpSolution(s.u_opt + np.array([1e-3, 0.0]), s.active_set)
    assert not verify(p, off_face)  # constraint no longer tight
    along_face = QpSolution(s.u_opt + np.array([0.0, 1e-3]), s.active_set)
    assert not verify(p, along_face)  # stationarity broken
    inward = QpSolution(s.u_opt - np.array([1e-3, 0.0]), s.active_set)
    assert not verify(p, inward)  # primal violation


def test_verify_accepts_all_feasible_solves():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 4))
        p, _ = random_problem(rng, n)
        s = solve(p)
        assert s.feasible
        assert verify(p, s)


def test_idempotence_on_feasible_reference():
    rng = np.random.default_rng(1)
    hits = 0
    for _ in range(200):
        n = int(rng.integers(1, 4))
        p, interior = random_problem(rng, n)
        p2 = QpProblem(interior, p.ineq_rows, p.bounds)
        s = solve(p2)
        assert s.feasible
        assert np.array_equal(s.u_opt, interior)
        hits += 1
    assert hits == 200


def test_projection_property_against_random_feasible_points():
    rng = np.random.default_rng(2)
    for _ in range(40):
        n = int(rng.integers(1, 3))
        p, interior = random_problem(rng, n)
        s = solve(p)
        assert s.feasible
        G, d = stacked_constraints(p)
        best = np.linalg.norm(s.u_opt - p.u_ref)
        found = 0
        while found < 100:
            z = interior + rng.normal(size=n) * 2.0
            if G.size and np.any(G @ z - d < 0):
                continue
            if not p.bounds.contains(z):
                continue
            found += 1
            assert best <= np.linalg.norm(z - p.u_ref) + 1e-9


def test_zero_rows_handled():
    p = QpProblem(np.array([0.0, 0.0]), [(np.zeros(2), 1.0)], box(5.0, 2))
    assert not solve(p).feasible
    p2 = QpProblem(np.array([0.5, 0.5]), [(np.zeros(2), -1.0), (np.array([1.0, 0.0]), 1.0)],
                   box(5.0, 2))
    s = solve(p2)
    assert s.feasible and np.allclose(s.u_opt, [1.0, 0.5])


def test_warm_hint_does_not_change_result():
    rng = np.random.default_rng(3)
    for _ in range(50):
        p, _ = random_problem(rng, 2)
        G, d = stacked_constraints(p)
        cold = solve_stacked(p.u_ref, G, d)
        if not cold.feasible:
            continue
        warm = solve_stacked(p.u_ref, G, d, try_subsets=(cold.active_set, (0,)))
        assert np.allclose(cold.u_opt, warm.u_opt, atol=1e-12)
        assert cold.active_set == warm.active_set


def test_solution_satisfies_constraints_to_tolerance():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n = int(rng.integers(1, 5))
        p, _ = random_problem(rng, n, max_rows=5)
        s = solve(p)
        assert s.feasible
        G, d = stacked_constraints(p)
        assert np.all(G @ s.u_opt - d >= -FEASIBILITY_TOL)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_infeasibility_detection_matches_construction(seed):
    # Rows demanding opposite halfspaces with a gap make the polytope empty.
    rng = np.random.default_rng(seed)
    a = rng.normal(size=2)
    a /= np.linalg.norm(a)
    c = rng.uniform(-1, 1)
    p = QpProblem(rng.uniform(-2, 2, 2),
                  [(a, c + 0.5), (-a, -(c - 0.5) + 0.0)],
                  box(50.0, 2))
    # a.u >= c + 0.5 and a.u <= c - 0.5 cannot both hold
    assert not solve(p).feasible

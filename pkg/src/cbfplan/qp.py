"""Exact solver for the small dense quadratic programs behind every steering
step: minimize squared deviation from a reference control subject to linear
inequality rows ``a.u >= b`` and elementwise bounds.

Because the Hessian is the identity, the minimizer is the Euclidean
projection of the reference onto the feasible polytope. The solver
enumerates candidate active sets of at most ``n`` linearly independent
constraints, solves each equality-constrained projection in closed form and
returns the first candidate carrying a full KKT certificate. Any certified
point is the unique global minimizer, so enumeration order only affects
speed; candidates are tried most-violated-first so the common one- or
two-constraint cases exit almost immediately. If no subset certifies, the
polytope is empty and the infeasible marker is returned.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .core import ControlBounds

FEASIBILITY_TOL = 1e-9
KKT_TOL = 1e-7
# Equality-system consistency filter for (nearly) dependent subsets.
_CONSISTENCY_TOL = 1e-8


@dataclass(eq=False)
class QpProblem:
    """min ||u - u_ref||^2  s.t.  a_i . u >= b_i  and  lower <= u <= upper."""

    u_ref: np.ndarray
    ineq_rows: list[tuple[np.ndarray, float]]
    bounds: ControlBounds

    def __post_init__(self):
        self.u_ref = np.asarray(self.u_ref, dtype=float).reshape(-1)
        n = self.u_ref.size
        if n < 1:
            raise ValueError("decision vector must have dimension >= 1")
        if self.bounds.dimension != n:
            raise ValueError("bounds dimension does not match the decision vector")
        rows = []
        for a, b in self.ineq_rows:
            a = np.asarray(a, dtype=float).reshape(-1)
            if a.size != n:
                raise ValueError("inequality row dimension mismatch")
            rows.append((a, float(b)))
        self.ineq_rows = rows

    @property
    def dimension(self) -> int:
        return self.u_ref.size


@dataclass(eq=False)
class QpSolution:
    """Minimizer plus the indices of tight constraints, or the infeasible marker.

    ``active_set`` indexes the stacked constraint list: problem rows first,
    then finite lower bounds, then finite upper bounds (see stacked_constraints).
    """

    u_opt: np.ndarray | None
    active_set: tuple[int, ...] = ()

    @property
    def feasible(self) -> bool:
        return self.u_opt is not None


def stacked_constraints(p: QpProblem) -> tuple[np.ndarray, np.ndarray]:
    """All constraints as G u >= d: rows, then finite lower/upper bounds."""
    n = p.dimension
    G_rows = [a for a, _ in p.ineq_rows]
    d_rows = [b for _, b in p.ineq_rows]
    for j in range(n):
        lo = p.bounds.lower[j]
        if np.isfinite(lo):
            e = np.zeros(n)
            e[j] = 1.0
            G_rows.append(e)
            d_rows.append(lo)
    for j in range(n):
        hi = p.bounds.upper[j]
        if np.isfinite(hi):
            e = np.zeros(n)
            e[j] = -1.0
            G_rows.append(e)
            d_rows.append(-hi)
    if not G_rows:
        return np.zeros((0, n)), np.zeros(0)
    return np.array(G_rows), np.array(d_rows)


def solve_stacked(u_ref: np.ndarray, G: np.ndarray, d: np.ndarray,
                  try_subsets: tuple = ()) -> QpSolution:
    """Project u_ref onto {u : G u >= d}; see solve() for the contract.

    Separate entry point so callers that already hold the stacked constraint
    arrays (the tracker assembles dozens of rows per step) skip the
    per-row repacking. The enumeration works off the precomputed Gram
    matrix: for an active subset S, the candidate's slack against every
    constraint is slack_ref + Gram[:, S] @ lam / 2, so each trial costs one
    small solve plus one vector update.

    ``try_subsets`` are candidate active sets attempted before the
    enumeration (receding-horizon callers pass the previous step's set);
    a certified subset always yields the same unique minimizer, so hints
    change speed, never the result.
    """
    m = G.shape[0]
    if m == 0:
        return QpSolution(u_ref.copy(), ())
    slack_ref = G @ u_ref - d
    if np.all(slack_ref >= -FEASIBILITY_TOL):
        return QpSolution(u_ref.copy(), _tight_indices(slack_ref))

    # Zero rows cannot be projected onto: 0.u >= d is either vacuous or
    # unsatisfiable on its own.
    norms2 = np.einsum("ij,ij->i", G, G)
    zero_rows = norms2 <= 1e-24
    if np.any(zero_rows):
        if np.any(d[zero_rows] > FEASIBILITY_TOL):
            return QpSolution(None, ())
        keep = np.flatnonzero(~zero_rows)
        sub = solve_stacked(u_ref, G[keep], d[keep])
        if not sub.feasible:
            return sub
        return QpSolution(sub.u_opt, tuple(int(keep[i]) for i in sub.active_set))

    gram = G @ G.T
    n = u_ref.size

    def attempt(subset) -> QpSolution | None:
        lam = _subset_multipliers(gram, slack_ref, subset)
        if lam is None or lam.min() < -KKT_TOL:
            return None
        new_slack = slack_ref + 0.5 * (gram[:, subset] @ lam)
        # Dependent subsets produce inconsistent equality systems; a
        # linearly independent certifying subset always exists, so skip.
        if np.max(np.abs(new_slack[list(subset)])) > _CONSISTENCY_TOL:
            return None
        if new_slack.min() < -FEASIBILITY_TOL:
            return None
        u = u_ref + 0.5 * (G[list(subset)].T @ lam)
        return QpSolution(u, _tight_indices(new_slack))

    for subset in try_subsets:
        subset = tuple(i for i in subset if 0 <= i < m)
        if not (1 <= len(subset) <= n):
            continue
        found = attempt(subset)
        if found is not None:
            return found

    # Most violated constraints first; combinations() then emits subsets of
    # likely-active constraints early, which is where the certificate is.
    order = np.argsort(slack_ref, kind="stable").tolist()
    lp_checked = False
    for size in range(1, n + 1):
        if size >= 3 and not lp_checked:
            # The size >= 3 sweep is combinatorial; prune provably empty
            # polytopes before paying for it.
            lp_checked = True
            if not _feasible_lp(G, d):
                return QpSolution(None, ())
        for subset in combinations(order, size):
            found = attempt(subset)
            if found is not None:
                return found
    return QpSolution(None, ())


def _feasible_lp(G: np.ndarray, d: np.ndarray) -> bool:
    """Linear-program emptiness test, used only to skip the size >= 3
    enumeration when the polytope is provably empty."""
    from scipy.optimize import linprog

    res = linprog(np.zeros(G.shape[1]), A_ub=-G, b_ub=-d,
                  bounds=[(None, None)] * G.shape[1], method="highs")
    return res.status != 2


def _subset_multipliers(gram: np.ndarray, slack_ref: np.ndarray, subset) -> np.ndarray | None:
    """Solve gram[S,S] lam = -2 slack_ref[S]; None when (nearly) singular."""
    if len(subset) == 1:
        i = subset[0]
        g = gram[i, i]
        return np.array([-2.0 * slack_ref[i] / g])
    if len(subset) == 2:
        i, j = subset
        a, b, c = gram[i, i], gram[i, j], gram[j, j]
        det = a * c - b * b
        if abs(det) <= 1e-12 * max(a * c, b * b):
            return None
        r1, r2 = -2.0 * slack_ref[i], -2.0 * slack_ref[j]
        return np.array([(c * r1 - b * r2) / det, (a * r2 - b * r1) / det])
    idx = list(subset)
    try:
        return np.linalg.solve(gram[np.ix_(idx, idx)], -2.0 * slack_ref[idx])
    except np.linalg.LinAlgError:
        return None


def _tight_indices(slack: np.ndarray) -> tuple[int, ...]:
    return tuple(int(i) for i in np.flatnonzero(np.abs(slack) <= KKT_TOL))


def solve(p: QpProblem) -> QpSolution:
    """Project u_ref onto the constraint polytope, or report infeasibility.

    Feasible outputs satisfy every constraint to FEASIBILITY_TOL; if u_ref is
    already feasible it is returned unchanged (exact idempotence).
    """
    G, d = stacked_constraints(p)
    return solve_stacked(p.u_ref, G, d)


def verify(p: QpProblem, s: QpSolution) -> bool:
    """KKT certificate check, independent of the enumeration in solve().

    True iff primal feasibility, tightness of the claimed active set,
    stationarity with multipliers >= 0 supported on it, and complementary
    slackness all hold to KKT_TOL.
    """
    if not s.feasible:
        raise ValueError("verify requires a solution claiming feasibility")
    u = np.asarray(s.u_opt, dtype=float).reshape(-1)
    if u.size != p.dimension:
        raise ValueError("solution dimension mismatch")
    G, d = stacked_constraints(p)
    if G.shape[0] and np.min(G @ u - d) < -KKT_TOL:
        return False
    active = list(s.active_set)
    if any(i < 0 or i >= G.shape[0] for i in active):
        return False
    # Complementary slackness: multipliers live only on constraints that are
    # actually tight at u.
    if active and np.max(np.abs(G[active] @ u - d[active])) > KKT_TOL:
        return False
    grad = 2.0 * (u - p.u_ref)
    scale = max(1.0, float(np.linalg.norm(grad)))
    if not active:
        return float(np.linalg.norm(grad)) <= KKT_TOL * scale
    from scipy.optimize import nnls

    _, residual = nnls(G[active].T, grad)
    return float(residual) <= KKT_TOL * scale

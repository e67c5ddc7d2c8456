"""Centralized solvers over the exact linearized feasible region.

``fw_solve`` implements the Frank-Wolfe variant for monotone DR-submodular
maximization: starting from zero, it repeatedly moves a fraction of the way
toward the feasible point best aligned with the estimated gradient, with
step fractions summing to exactly 1. ``pga_solve`` is projected gradient
ascent (1/2 guarantee instead of 1 - 1/e). ``maxtp_solve`` and
``maxfair_solve`` are the throughput and alpha-fair baselines.

Direction finding is an exact LP (HiGHS) over the auxiliary-variable
linearization; projections are small QPs. Solver outputs pass through
:func:`expnet.instance.snap_into_feasible`, so returned points satisfy the
exact constraints to rounding error.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import cvxpy as cp
import numpy as np
from scipy.optimize import linprog

from .gradient import EstimatorParams, estimate_gradient
from .instance import (Instance, RateAllocation, lp_linearize, residuals,
                       snap_into_feasible)


class SolverError(RuntimeError):
    """Raised when an LP/QP subroutine fails or an iteration diverges."""


@dataclass
class SolverTrace:
    """Per-outer-iteration record of a solver run."""

    algorithm: str
    entries: list = field(default_factory=list)

    def add(self, **kwargs) -> None:
        self.entries.append(dict(kwargs))

    @property
    def step_total(self) -> float:
        """Sum of step fractions (exactly 1.0 for a completed FW run)."""
        return sum(e.get("gamma", 0.0) for e in self.entries)


def _solve_lp(instance: Instance, coeffs: np.ndarray) -> np.ndarray:
    """Maximize ``coeffs . lam`` over the exact region; returns the rates."""
    lp = lp_linearize(instance)
    c = np.zeros(lp.n_vars)
    c[:lp.n_lambda] = -np.asarray(coeffs, dtype=float)
    res = linprog(c, A_ub=lp.A if lp.A.size else None,
                  b_ub=lp.b if lp.A.size else None,
                  bounds=(0, None), method="highs")
    if not res.success:
        raise SolverError(f"direction LP failed: {res.message}")
    return snap_into_feasible(instance, res.x[:lp.n_lambda])


def lp_direction(instance: Instance, gradient: np.ndarray) -> np.ndarray:
    """Feasible point maximizing the inner product with ``gradient``.

    A zero gradient returns the zero vector (any feasible point is optimal).
    """
    gradient = np.asarray(gradient, dtype=float)
    if not np.all(np.isfinite(gradient)):
        raise SolverError("gradient must be finite")
    if not np.any(gradient):
        return instance.zero_rates()
    return _solve_lp(instance, gradient)


class _Projector:
    """Reusable Euclidean projection onto the exact region (parametric QP)."""

    def __init__(self, instance: Instance) -> None:
        self._instance = instance
        lp = lp_linearize(instance)
        self._n_lambda = lp.n_lambda
        self._x = cp.Variable(lp.n_vars, nonneg=True)
        self._target = cp.Parameter(lp.n_lambda)
        constraints = [lp.A @ self._x <= lp.b] if lp.A.size else []
        self._problem = cp.Problem(
            cp.Minimize(cp.sum_squares(self._x[:lp.n_lambda] - self._target)),
            constraints)

    def __call__(self, target: np.ndarray) -> np.ndarray:
        self._target.value = np.asarray(target, dtype=float)
        self._problem.solve(solver=cp.CLARABEL)
        if self._problem.status not in ("optimal", "optimal_inaccurate"):
            raise SolverError(f"projection QP failed: {self._problem.status}")
        return snap_into_feasible(self._instance, self._x.value[:self._n_lambda])


def project_onto_feasible(instance: Instance, target: np.ndarray) -> np.ndarray:
    """Orthogonal projection of ``target`` onto the exact feasible region."""
    return _Projector(instance)(target)


def fw_solve(instance: Instance, params: Optional[EstimatorParams] = None,
             K: int = 50) -> tuple[RateAllocation, SolverTrace]:
    """Frank-Wolfe variant with estimated gradients.

    Runs ``K`` outer iterations with step fractions ``min(1/K, remaining)``
    that sum to exactly 1, so the result is a convex combination of exact
    LP vertices and therefore feasible.
    """
    if K < 1:
        raise SolverError("K must be >= 1")
    params = params or EstimatorParams()
    delta = 1.0 / K
    lam = instance.zero_rates()
    remaining = 1.0
    trace = SolverTrace(algorithm="fw")
    k = 0
    while remaining > 0.0:
        tic = time.perf_counter()
        est = estimate_gradient(instance, lam,
                                replace(params, iteration=params.iteration + k))
        v = lp_direction(instance, est.g)
        gamma = min(delta, remaining)
        lam = lam + gamma * v
        remaining -= gamma
        trace.add(k=k, gamma=gamma, direction=v.copy(),
                  grad_max=float(np.max(est.g, initial=0.0)),
                  grad_mean=float(np.mean(est.g)) if est.g.size else 0.0,
                  n_prime=est.n_prime, elapsed_s=time.perf_counter() - tic)
        k += 1
    return RateAllocation(instance, lam), trace


def pga_solve(instance: Instance, params: Optional[EstimatorParams] = None,
              K: int = 50, gamma: Optional[float] = None
              ) -> tuple[RateAllocation, SolverTrace]:
    """Projected gradient ascent with estimated gradients.

    Default stepsize is ``0.02 * max group rate``; every iterate is the
    exact projection of the ascent point, hence feasible.
    """
    if K < 1:
        raise SolverError("K must be >= 1")
    params = params or EstimatorParams()
    if gamma is None:
        gamma = 0.02 * max(instance.config.rates.values(), default=1.0)
    if gamma <= 0:
        raise SolverError("stepsize gamma must be > 0")
    project = _Projector(instance)
    lam = instance.zero_rates()
    trace = SolverTrace(algorithm="pga")
    for k in range(K):
        tic = time.perf_counter()
        est = estimate_gradient(instance, lam,
                                replace(params, iteration=params.iteration + k))
        lam = project(lam + gamma * est.g)
        trace.add(k=k, gamma=gamma, grad_max=float(np.max(est.g, initial=0.0)),
                  n_prime=est.n_prime, elapsed_s=time.perf_counter() - tic)
    return RateAllocation(instance, lam), trace


def maxtp_solve(instance: Instance) -> RateAllocation:
    """Maximize aggregate delivered rate (exact LP)."""
    return RateAllocation(instance, _solve_lp(instance, np.ones(instance.n_coords)))


def _live_mask(instance: Instance) -> np.ndarray:
    """Coordinates that can be strictly positive in some feasible point."""
    live = np.ones(instance.n_coords, dtype=bool)
    cap_map = instance.graph.capacity_map()
    for e, members in instance.edge_members.items():
        if cap_map[e] == 0.0:
            for js in members.values():
                live[list(js)] = False
    for g, js in instance.groups.items():
        if instance.config.rates[g] == 0.0:
            live[list(js)] = False
    return live


def maxfair_solve(instance: Instance, alpha: int = 2,
                  epsilon: float = 1e-6) -> RateAllocation:
    """Maximize the aggregate alpha-fair utility of learner intake (alpha=2).

    The alpha = 2 program (minimize summed reciprocal intakes over the
    exact region) is convex, so it is solved directly as a cone program.
    Learners whose intake is structurally zero -- every feed crosses a
    zero-capacity edge or belongs to a zero-rate group -- are excluded from
    the objective, and the returned allocation is floored at ``epsilon`` to
    keep downstream reciprocals finite.

    Raises
    ------
    SolverError
        If ``alpha != 2`` or the cone solve fails.
    """
    if alpha != 2:
        raise SolverError("only alpha = 2 is supported")
    live = _live_mask(instance)
    lp = lp_linearize(instance)
    x = cp.Variable(lp.n_vars, nonneg=True)
    intakes = []
    for l in sorted(instance.placement.learners, key=repr):
        feeds = instance.learner_feeds[l]
        if feeds and any(live[j] for _s, j in feeds):
            intakes.append(cp.sum(x[[j for _s, j in feeds]]))
    if not intakes:
        return RateAllocation(instance, np.full(instance.n_coords, epsilon))
    constraints = [lp.A @ x <= lp.b] if lp.A.size else []
    problem = cp.Problem(
        cp.Minimize(cp.sum(cp.hstack([cp.inv_pos(s) for s in intakes]))),
        constraints)
    problem.solve(solver=cp.CLARABEL)
    if problem.status not in ("optimal", "optimal_inaccurate"):
        raise SolverError(f"fair program failed: {problem.status}")
    lam = snap_into_feasible(instance, x.value[:lp.n_lambda])
    return RateAllocation(instance, np.maximum(lam, epsilon))


def assert_feasible(instance: Instance, lam: np.ndarray, tol: float = 1e-9) -> None:
    """Raise unless ``lam`` satisfies the exact constraints within ``tol``."""
    worst = float(np.max(residuals(instance, lam), initial=0.0))
    if worst > tol:
        raise SolverError(f"allocation violates constraints by {worst:.3e}")

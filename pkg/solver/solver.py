"""
Public API for the separating-hypersurface trajectory planner.

Usage:
    from solver import solve, cold_start, PlanProblem

    problem = PlanProblem(N=30, dt=0.1, start=..., goal=..., reference=...,
                          obstacles=clusters, footprint=l_shape_footprint(),
                          u_min=..., u_max=...)
    solution, status = solve(problem, cold_start(problem))
    print(status.code, solution.states[-1])

solve() never raises on numeric trouble: the outcome is in status.code and
the best iterate found is always returned.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .auglag import Duals, SolveCode, SolverConfig, minimize_auglag
from .footprint import swept_points
from .geom_poly import N_COEF, Pose, QuadPoly, Twist, transform_points
from .nlp_core import DecisionVector, NLPModel, kinematics_step
from .separation import check_separation, seed_separator

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolveStatus:
    code: SolveCode
    iterations: int
    max_violation: float
    cost: float

    @property
    def converged(self):
        return self.code is SolveCode.CONVERGED


@dataclass(frozen=True, eq=False)
class PlanSolution:
    """Solver output: full trajectory, separators and solver statistics."""

    states: tuple
    inputs: tuple
    separators: tuple
    obstacle_ids: tuple
    iterations: int
    cost: float
    merit: float
    max_violation: float
    wall_time: float
    z: DecisionVector
    duals: Duals = None
    log: tuple = ()

    @property
    def N(self):
        return len(self.inputs)

    def state_array(self):
        return np.array(self.states)


def _solution_from(problem, dv, result):
    states = (problem.start,) + tuple(Pose.from_array(q) for q in dv.states)
    return PlanSolution(
        states=states,
        inputs=tuple(Twist.from_array(u) for u in dv.inputs),
        separators=tuple(QuadPoly(c) for c in dv.coefs),
        obstacle_ids=problem.obstacle_ids,
        iterations=result.iterations,
        cost=result.cost,
        merit=result.merit,
        max_violation=result.max_violation,
        wall_time=result.wall_time,
        z=dv,
        duals=result.duals,
        log=result.records,
    )


def solve(problem, init, config=None, duals=None):
    """Solve one PlanProblem from an initial decision vector.

    Args:
        problem: PlanProblem.
        init: DecisionVector (or flat array) of length 6N + 6K.
        config: SolverConfig, defaults used when None.
        duals: optional multipliers from a previous solve of the same layout.

    Returns:
        (PlanSolution, SolveStatus).
    """
    config = config or SolverConfig()
    if isinstance(init, DecisionVector):
        z0 = init.z
    else:
        z0 = np.asarray(init, dtype=float)
    model = NLPModel(problem)
    if z0.size != model.n:
        raise ValueError(f"init has {z0.size} entries, problem needs {model.n}")
    result = minimize_auglag(model, z0, config, duals)
    dv = DecisionVector(result.z, problem.N, problem.K)
    solution = _solution_from(problem, dv, result)
    status = SolveStatus(result.code, result.iterations, result.max_violation, result.cost)
    log.debug("[Solver] K=%d vars=%d rows=%d -> %s in %.1f ms",
              problem.K, model.n, model.m, result.code.value, 1e3 * result.wall_time)
    return solution, status


# ===========================================================================
# Initial guesses
# ===========================================================================

def _seed_coefs(problem, trajectory, keep=None):
    """Separator coefficients for every obstacle; `keep` maps id -> coef."""
    keep = keep or {}
    fp = problem.footprint
    swept = swept_points(fp, trajectory).points
    current = transform_points(problem.start, fp.collision_points)
    coefs = []
    for obs in problem.obstacles:
        if obs.id in keep:
            coefs.append(np.asarray(keep[obs.id], dtype=float))
            continue
        poly = seed_separator(swept, current, obs.feature_points,
                              problem.degree, problem.sep_margin, problem.coef_box)
        coefs.append(poly.coef)
    return np.array(coefs, dtype=float).reshape(-1, N_COEF)


def cold_start(problem):
    """Reference states, zero inputs and LP-seeded separators."""
    states = np.array(problem.reference[1:])
    inputs = np.zeros((problem.N, 3))
    trajectory = [problem.start] + list(problem.reference[1:])
    coefs = _seed_coefs(problem, trajectory)
    return DecisionVector.pack(states, inputs, coefs)


def warm_start_shift(prev, steps, problem=None):
    """Shift a previous solution forward by `steps` timesteps.

    The tail is padded by holding the last input through the kinematics.
    Separator coefficients are carried for obstacle ids present in both the
    previous solution and `problem`; new ids are LP-seeded. Without a problem
    the coefficients are carried as they are.
    """
    if steps < 0:
        raise ValueError(f"shift steps must be >= 0, got {steps}")
    N = prev.N
    if problem is not None and problem.N != N:
        raise ValueError(f"horizon mismatch: previous N={N}, problem N={problem.N}")
    steps = min(int(steps), N)
    states = list(prev.states)
    inputs = list(prev.inputs)
    if steps:
        dt = problem.dt if problem is not None else None
        if dt is None:
            raise ValueError("warm_start_shift needs the problem to pad the tail")
        states = states[steps:]
        inputs = inputs[steps:]
        last_u = prev.inputs[-1]
        while len(inputs) < N:
            states.append(kinematics_step(states[-1], last_u, dt))
            inputs.append(last_u)
    states_arr = np.array(states[1:])
    inputs_arr = np.array(inputs)

    if problem is None:
        coefs = np.array([p.coef for p in prev.separators]).reshape(-1, N_COEF)
    else:
        keep = {oid: p.coef for oid, p in zip(prev.obstacle_ids, prev.separators)}
        trajectory = [problem.start] + [Pose.from_array(q) for q in states_arr]
        coefs = _seed_coefs(problem, trajectory, keep)
    return DecisionVector.pack(states_arr, inputs_arr, coefs)


# ===========================================================================
# Safety re-check
# ===========================================================================

def verify_separation(problem, solution, tolerance=0.0):
    """Re-evaluate every separator on the swept points and features.

    Returns:
        (ok, list of (obstacle id, SeparationReport)) at margin
        sep_margin - tolerance.
    """
    swept = swept_points(problem.footprint, solution.states).points
    margin = problem.sep_margin - tolerance
    reports = []
    ok = True
    for obs, poly in zip(problem.obstacles, solution.separators):
        good, report = check_separation(poly, obs.feature_points, swept, margin)
        ok = ok and good
        reports.append((obs.id, report))
    return ok, reports

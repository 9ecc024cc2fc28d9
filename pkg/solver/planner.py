"""
Receding-horizon loop.

Each tick:
    1. project the robot onto the global reference and slide the tracked
       window forward at the nominal speed,
    2. keep the clusters inside the workspace radius,
    3. build a PlanProblem, warm-start it from the previous plan (or cold
       start), solve; a solve that runs out of iterations above the
       acceptance tolerance carries on within the tick's budget,
    4. accept the plan only if its violation is small and every separator
       still certifies the swept footprint; otherwise HOLD (zero input) and
       retry from the last iterate on the next tick.

Only the first input of an accepted plan is executed.
"""

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .auglag import SolveCode, SolverConfig
from .footprint import l_shape_footprint
from .geom_poly import Pose, Twist
from .nlp_core import DEFAULT_SEP_MARGIN, PlanProblem, Weights, angle_diff
from .obstacle_pipeline import associate_clusters
from .solver import SolveStatus, cold_start, solve, verify_separation, warm_start_shift

log = logging.getLogger(__name__)


# ===========================================================================
# Configuration
# ===========================================================================

@dataclass(frozen=True, eq=False)
class PlannerConfig:
    """Receding-horizon settings. Speeds in m/s and rad/s."""

    N: int = 30
    dt: float = 0.1
    u_min: Twist = Twist(-0.6, -0.6, -1.0)
    u_max: Twist = Twist(0.6, 0.6, 1.0)
    nominal_speed: float = 0.45
    weights: Weights = field(default_factory=Weights)
    sep_margin: float = DEFAULT_SEP_MARGIN
    workspace_radius: float = 3.0
    degree: int = 2
    footprint_inflation: float = 0.04
    goal_tol_pos: float = 0.10
    goal_tol_ang: float = 0.15
    accept_factor: float = 10.0
    retry_budget: float = 3.0
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        object.__setattr__(self, "u_min", Twist(*self.u_min))
        object.__setattr__(self, "u_max", Twist(*self.u_max))
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"horizon N must be an integer >= 2, got {self.N}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.nominal_speed > 0:
            raise ValueError(f"nominal_speed must be positive, got {self.nominal_speed}")
        if self.degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2, got {self.degree}")
        if not self.sep_margin > 0:
            raise ValueError(f"sep_margin must be positive, got {self.sep_margin}")
        if self.footprint_inflation < 0:
            raise ValueError(f"footprint_inflation must be >= 0, got {self.footprint_inflation}")
        if not (self.goal_tol_pos > 0 and self.goal_tol_ang > 0):
            raise ValueError("goal tolerances must be positive")
        if not self.accept_factor >= 1:
            raise ValueError(f"accept_factor must be >= 1, got {self.accept_factor}")
        if not self.retry_budget >= 1:
            raise ValueError(f"retry_budget must be >= 1, got {self.retry_budget}")

    def with_mode(self, mode):
        """'quad' or 'hyperplane'."""
        if mode not in ("quad", "hyperplane"):
            raise ValueError(f"mode must be 'quad' or 'hyperplane', got {mode!r}")
        return replace(self, degree=2 if mode == "quad" else 1)

    def retry_solver(self):
        """Solver settings for an unshifted re-solve after a HOLD."""
        s = self.solver
        return replace(s, max_iterations=int(math.ceil(self.retry_budget * s.max_iterations)),
                       max_wall_time=self.retry_budget * s.max_wall_time)

    def continuation_solver(self, spent):
        """Budget for carrying on an unfinished solve within the same tick.

        None when retry_budget leaves no extra iterations or the tick's wall
        time (`spent` seconds used so far) is gone.
        """
        s = self.solver
        extra = int(math.ceil((self.retry_budget - 1.0) * s.max_iterations))
        remaining = s.max_wall_time - spent
        if extra < 1 or not remaining > 0:
            return None
        return replace(s, max_iterations=extra, max_wall_time=remaining)


# ===========================================================================
# References
# ===========================================================================

def _interp_angle(a, b, t):
    return a + t * angle_diff(b, a)


def straight_line_reference(start, goal, N):
    """N+1 poses from start to goal; heading along the shortest arc."""
    if N < 2:
        raise ValueError(f"N must be >= 2, got {N}")
    start, goal = Pose(*start), Pose(*goal)
    out = []
    for k in range(N + 1):
        t = k / N
        out.append(Pose(
            start.x + t * (goal.x - start.x),
            start.y + t * (goal.y - start.y),
            _interp_angle(start.psi, goal.psi, t),
        ))
    return out


class ReferencePath:
    """Global reference polyline with unwrapped headings and arc length."""

    def __init__(self, poses):
        arr = np.array([tuple(p) for p in poses], dtype=float).reshape(-1, 3)
        if len(arr) < 2:
            raise ValueError("a reference path needs at least 2 poses")
        arr[:, 2] = np.unwrap(arr[:, 2])
        self.poses = arr
        seg = np.hypot(*np.diff(arr[:, :2], axis=0).T)
        self.s = np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def length(self):
        return float(self.s[-1])

    @property
    def end(self):
        return Pose.from_array(self.poses[-1])

    @classmethod
    def straight(cls, start, goal):
        return cls([Pose(*start), Pose(*goal)])

    @classmethod
    def from_polyline(cls, points, start_psi, goal_psi):
        """Positions only: heading blends start_psi -> goal_psi along arc length."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        seg = np.hypot(*np.diff(pts, axis=0).T)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        frac = s / s[-1] if s[-1] > 0 else np.zeros_like(s)
        delta = angle_diff(goal_psi, start_psi)
        return cls([Pose(x, y, start_psi + f * delta) for (x, y), f in zip(pts, frac)])

    @classmethod
    def load_csv(cls, path, start_psi=0.0, goal_psi=0.0):
        """CSV rows (x, y[, psi]); a non-numeric first row is a header."""
        rows = []
        with open(path, "r", encoding="utf-8", newline="") as f:
            for i, row in enumerate(csv.reader(f)):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    if i == 0:
                        continue
                    raise ValueError(f"bad reference row {i + 1} in {path}: {row}")
        if not rows:
            raise ValueError(f"reference file {path} has no rows")
        widths = {len(r) for r in rows}
        if widths == {3}:
            return cls(rows)
        if widths == {2}:
            return cls.from_polyline(rows, start_psi, goal_psi)
        raise ValueError(f"reference rows must all have 2 or 3 columns in {path}")

    def pose_at(self, s):
        s = float(np.clip(s, 0.0, self.s[-1]))
        return Pose(*(np.interp(s, self.s, self.poses[:, j]) for j in range(3)))

    def project(self, point, s_min=0.0):
        """Arc length of the closest point on the path at or after s_min."""
        p = np.asarray(point, dtype=float)[:2]
        a = self.poses[:-1, :2]
        b = self.poses[1:, :2]
        ab = b - a
        denom = np.maximum((ab ** 2).sum(axis=1), 1e-18)
        t = np.clip(((p - a) * ab).sum(axis=1) / denom, 0.0, 1.0)
        proj = a + t[:, None] * ab
        d = np.hypot(*(proj - p).T)
        s_proj = self.s[:-1] + t * (self.s[1:] - self.s[:-1])
        d = np.where(self.s[1:] < s_min, np.inf, d)
        if not np.isfinite(d).any():
            return float(self.s[-1])
        k = int(np.argmin(d))
        return max(float(s_min), float(s_proj[k]))

    def window(self, s0, N, dt, speed):
        """N+1 poses starting at arc length s0, spaced speed*dt apart."""
        return [self.pose_at(s0 + k * speed * dt) for k in range(N + 1)]


def goal_reached(current, goal, tol_pos=0.10, tol_ang=0.15):
    if not (tol_pos > 0 and tol_ang > 0):
        raise ValueError("goal tolerances must be positive")
    dist = math.hypot(current[0] - goal[0], current[1] - goal[1])
    return dist <= tol_pos and abs(angle_diff(current[2], goal[2])) <= tol_ang


# ===========================================================================
# One planning step
# ===========================================================================

class StepAction(Enum):
    MOVE = "MOVE"
    HOLD = "HOLD"


@dataclass(frozen=True)
class StepStatus:
    action: StepAction
    solve: SolveStatus
    reason: str = ""

    @property
    def hold(self):
        return self.action is StepAction.HOLD


def _in_workspace(cluster, current, radius):
    d = np.hypot(*(cluster.raw_points - np.array(current[:2])).T)
    return bool(d.min() <= radius)


def build_problem(current, clusters, reference_window, cfg, footprint):
    current = Pose(*current)
    window = list(reference_window)
    obstacles = [c for c in clusters
                 if len(c.feature_points) and _in_workspace(c, current, cfg.workspace_radius)]
    return PlanProblem(
        N=cfg.N, dt=cfg.dt, start=current, goal=window[-1], reference=window,
        obstacles=obstacles, footprint=footprint, u_min=cfg.u_min, u_max=cfg.u_max,
        weights=cfg.weights, sep_margin=cfg.sep_margin,
        workspace_radius=cfg.workspace_radius, degree=cfg.degree,
    )


def plan_step(current, clusters, goal, prev=None, cfg=None, reference=None,
              footprint=None, progress=0.0, shift=1, duals=None):
    """Plan from the current pose and return the input to execute now.

    Args:
        current: Pose of the robot.
        clusters: perceived ObstacleClusters (filtered to the workspace radius).
        goal: final goal Pose.
        prev: previous PlanSolution to warm start from, or None.
        cfg: PlannerConfig.
        reference: ReferencePath; straight line from current to goal if None.
        footprint: planning footprint (already inflated).
        progress: arc length already covered along `reference`.
        shift: timesteps to shift `prev` by. 0 re-solves from the last iterate
            with the larger retry budget.
        duals: multipliers carried from the previous solve.

    Returns:
        (next_input, solution, StepStatus).
    """
    cfg = cfg or PlannerConfig()
    current = Pose(*current)
    if footprint is None:
        footprint = l_shape_footprint().inflated(cfg.footprint_inflation)
    if reference is None:
        reference = ReferencePath.straight(current, goal)
    window = reference.window(progress, cfg.N, cfg.dt, cfg.nominal_speed)
    problem = build_problem(current, clusters, window, cfg, footprint)

    init = None
    if prev is not None and prev.N == cfg.N:
        init = warm_start_shift(prev, shift, problem)
    if init is None:
        init = cold_start(problem)
    solver_cfg = cfg.retry_solver() if prev is not None and shift == 0 else cfg.solver
    solution, status = solve(problem, init, solver_cfg, duals)

    tol = cfg.accept_factor * cfg.solver.constraint_tolerance
    if status.code is SolveCode.MAX_ITER and solution.max_violation > tol:
        extra = cfg.continuation_solver(solution.wall_time)
        if extra is not None:
            log.debug("[Planner] continuing unfinished solve (violation %.2e)",
                      solution.max_violation)
            more, more_status = solve(problem, solution.z, extra, solution.duals)
            solution = replace(more, iterations=solution.iterations + more.iterations,
                               wall_time=solution.wall_time + more.wall_time)
            status = replace(more_status, iterations=status.iterations + more_status.iterations)
    if status.code is SolveCode.NUMERIC_FAILURE:
        return Twist.zero(), solution, StepStatus(StepAction.HOLD, status, "numeric failure")
    if solution.max_violation > tol:
        return Twist.zero(), solution, StepStatus(
            StepAction.HOLD, status, f"violation {solution.max_violation:.2e}")
    safe, reports = verify_separation(problem, solution, tol)
    if not safe:
        bad = [oid for oid, r in reports if not r.ok]
        return Twist.zero(), solution, StepStatus(
            StepAction.HOLD, status, f"separation recheck failed for obstacles {bad}")
    return solution.inputs[0], solution, StepStatus(StepAction.MOVE, status)


# ===========================================================================
# Stateful planner
# ===========================================================================

class RecedingHorizonPlanner:
    """Per-robot planner state across ticks."""

    def __init__(self, goal, cfg=None, footprint=None, reference=None, start=None):
        self.cfg = cfg or PlannerConfig()
        self.goal = Pose(*goal)
        base = footprint if footprint is not None else l_shape_footprint()
        self.footprint = base.inflated(self.cfg.footprint_inflation)
        if reference is None and start is not None:
            reference = ReferencePath.straight(start, self.goal)
        self.reference = reference
        self.progress = 0.0
        self.last_solution = None
        self.last_accepted = True
        self.clusters = []
        self._next_id = 0
        self.stats = []

    def track(self, clusters):
        """Carry obstacle ids over from the previous snapshot."""
        tracked = associate_clusters(self.clusters, clusters, next_id=self._next_id)
        if tracked:
            self._next_id = max(self._next_id, max(c.id for c in tracked) + 1)
        self.clusters = tracked
        return tracked

    def step(self, current, clusters):
        """One tick: returns (next_input, StepStatus)."""
        current = Pose(*current)
        if self.reference is None:
            self.reference = ReferencePath.straight(current, self.goal)
        self.progress = self.reference.project(current, self.progress)
        tracked = self.track(clusters)
        prev = self.last_solution
        shift = 1 if self.last_accepted else 0
        # multipliers only line up with an unshifted retry
        duals = prev.duals if prev is not None and shift == 0 else None
        u, solution, status = plan_step(
            current, tracked, self.goal, prev, self.cfg, self.reference,
            self.footprint, self.progress, shift, duals)
        self.last_solution = solution
        self.last_accepted = not status.hold
        self.stats.append({
            "action": status.action.value,
            "code": status.solve.code.value,
            "iterations": status.solve.iterations,
            "warm": prev is not None,
            "wall_time": solution.wall_time,
            "K": len(solution.separators),
        })
        if status.hold:
            log.info("[Planner] HOLD (%s, %s)", status.solve.code.value, status.reason)
        return u, status

    def is_done(self, current):
        return goal_reached(current, self.goal, self.cfg.goal_tol_pos, self.cfg.goal_tol_ang)

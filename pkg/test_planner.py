"""References, goal checks and the receding-horizon step."""

import logging
import math

import numpy as np
import pytest

from solver.auglag import SolverConfig
from solver.footprint import l_shape_footprint
from solver.geom_poly import Pose, Twist
from solver.nlp_core import kinematics_step
from solver.obstacle_pipeline import ObstacleCluster
from solver.planner import (
    PlannerConfig, RecedingHorizonPlanner, ReferencePath, StepAction, goal_reached, plan_step,
    straight_line_reference,
)

log = logging.getLogger(__name__)

OFFLINE = SolverConfig(max_wall_time=math.inf, max_iterations=2000)


def _disk_cluster(oid, center, radius, n=24):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    pts = np.column_stack([np.cos(t), np.sin(t)]) * radius + np.asarray(center)
    return ObstacleCluster(oid, pts, pts.copy())


# --- straight_line_reference ----------------------------------------------

def test_reference_start_equals_goal():
    q = Pose(1.0, -2.0, 0.5)
    ref = straight_line_reference(q, q, 5)
    assert len(ref) == 6
    assert all(np.allclose(p, q) for p in ref)


def test_reference_linear_spacing():
    ref = straight_line_reference((0, 0, 0), (4, 0, 0), 4)
    assert [p.x for p in ref] == [0, 1, 2, 3, 4]


def test_reference_heading_shortest_arc():
    ref = straight_line_reference((0, 0, 3.0), (1, 0, -3.0), 2)
    assert abs(ref[1].psi) == pytest.approx(math.pi, abs=1e-3)
    assert ref[1].psi > 3.0


def test_reference_rejects_short_horizon():
    with pytest.raises(ValueError):
        straight_line_reference((0, 0, 0), (1, 0, 0), 1)


# --- goal_reached ---------------------------------------------------------

def test_goal_reached_examples():
    goal = Pose(1.0, 1.0, 0.3)
    assert goal_reached(goal, goal)
    assert not goal_reached(Pose(1.2, 1.0, 0.3), goal, tol_pos=0.1)
    assert not goal_reached(Pose(1.0, 1.0, 0.3 + math.pi), goal, tol_pos=10.0)
    assert goal_reached(Pose(1.05, 1.0, 0.3 + 2 * math.pi), goal)


def test_goal_reached_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        goal_reached((0, 0, 0), (0, 0, 0), tol_pos=0.0)


# --- ReferencePath --------------------------------------------------------

def test_reference_path_from_csv(tmp_path):
    path = tmp_path / "ref.csv"
    path.write_text("x,y\n0,0\n1,0\n1,1\n")
    ref = ReferencePath.load_csv(str(path), start_psi=0.0, goal_psi=math.pi / 2)
    assert ref.length == pytest.approx(2.0)
    assert np.allclose(ref.pose_at(1.0), (1.0, 0.0, math.pi / 4))
    assert np.allclose(ref.pose_at(1.5), (1.0, 0.5, 3 * math.pi / 8))
    assert np.allclose(ref.pose_at(5.0), ref.end)


def test_reference_path_three_columns(tmp_path):
    path = tmp_path / "ref.csv"
    path.write_text("0,0,0.5\n2,0,0.7\n")
    ref = ReferencePath.load_csv(str(path))
    assert np.allclose(ref.pose_at(1.0), (1.0, 0.0, 0.6))


def test_reference_path_bad_files(tmp_path):
    path = tmp_path / "ref.csv"
    path.write_text("0,0\n1,0,0\n")
    with pytest.raises(ValueError):
        ReferencePath.load_csv(str(path))
    path.write_text("x,y\n")
    with pytest.raises(ValueError):
        ReferencePath.load_csv(str(path))


def test_reference_path_projection_is_monotone():
    ref = ReferencePath.from_polyline([(0, 0), (1, 0), (1, 1)], 0.0, 0.0)
    assert ref.project((0.5, 0.2)) == pytest.approx(0.5)
    assert ref.project((0.5, 0.2), s_min=1.2) == pytest.approx(1.2)
    assert ref.project((1.3, 0.8), s_min=0.4) == pytest.approx(1.8)


def test_reference_window_spacing_and_clamp():
    ref = ReferencePath.straight((0, 0, 0), (4, 0, 0))
    assert [p.x for p in ref.window(0.0, 4, 0.5, 2.0)] == pytest.approx([0, 1, 2, 3, 4])
    tail = ref.window(3.5, 4, 0.5, 2.0)
    assert tail[-1].x == pytest.approx(4.0)


def test_reference_headings_unwrapped():
    ref = ReferencePath([(0, 0, 3.0), (1, 0, -3.0)])
    assert ref.poses[1, 2] == pytest.approx(2 * math.pi - 3.0)


# --- configuration --------------------------------------------------------

def test_planner_config_modes():
    cfg = PlannerConfig()
    assert cfg.with_mode("hyperplane").degree == 1
    assert cfg.with_mode("quad").degree == 2
    with pytest.raises(ValueError):
        cfg.with_mode("cubic")
    with pytest.raises(ValueError):
        PlannerConfig(N=1)
    with pytest.raises(ValueError):
        PlannerConfig(nominal_speed=0.0)
    for margin in (0.0, -0.01):
        with pytest.raises(ValueError):
            PlannerConfig(sep_margin=margin)


def test_retry_solver_scales_budget():
    cfg = PlannerConfig(retry_budget=2.5, solver=SolverConfig(max_iterations=400, max_wall_time=0.08))
    retry = cfg.retry_solver()
    assert retry.max_iterations == 1000
    assert retry.max_wall_time == pytest.approx(0.2)
    assert retry.constraint_tolerance == cfg.solver.constraint_tolerance
    assert math.isinf(PlannerConfig(solver=OFFLINE).retry_solver().max_wall_time)
    with pytest.raises(ValueError):
        PlannerConfig(retry_budget=0.5)


def test_continuation_solver_respects_tick_budget():
    cfg = PlannerConfig(retry_budget=3.0, solver=SolverConfig(max_iterations=100, max_wall_time=0.08))
    extra = cfg.continuation_solver(0.05)
    assert extra.max_iterations == 200
    assert extra.max_wall_time == pytest.approx(0.03)
    assert cfg.continuation_solver(0.08) is None
    assert PlannerConfig(retry_budget=1.0).continuation_solver(0.0) is None


def test_plan_step_continues_unfinished_solve():
    short = SolverConfig(max_wall_time=math.inf, max_iterations=5)
    obstacle = [_disk_cluster(0, (1.5, 1.2), 0.3)]
    _, _, capped = plan_step((0, 0, 0), obstacle, (2, 0, 0),
                             cfg=PlannerConfig(N=10, solver=short, retry_budget=1.0))
    _, _, carried = plan_step((0, 0, 0), obstacle, (2, 0, 0),
                              cfg=PlannerConfig(N=10, solver=short, retry_budget=3.0))
    assert capped.solve.iterations <= 5
    assert carried.solve.iterations > 5
    assert carried.solve.max_violation <= capped.solve.max_violation


# --- plan_step ------------------------------------------------------------

def test_plan_step_drives_toward_goal():
    cfg = PlannerConfig(N=12, solver=OFFLINE)
    start, goal = Pose(0.0, 0.0, 0.0), Pose(3.0, 0.0, 0.0)
    reference = ReferencePath.straight(start, goal)
    current, progress, prev = start, 0.0, None
    distances = [math.hypot(goal.x - current.x, goal.y - current.y)]
    for _ in range(4):
        progress = reference.project(current, progress)
        u, solution, status = plan_step(current, [], goal, prev, cfg, reference,
                                        progress=progress)
        assert status.action is StepAction.MOVE
        assert u.vx > 0
        current = kinematics_step(current, u, cfg.dt)
        prev = solution
        distances.append(math.hypot(goal.x - current.x, goal.y - current.y))
    assert all(b < a for a, b in zip(distances, distances[1:]))


def test_plan_step_holds_without_safe_plan():
    # obstacle points fill the robot's footprint: no separator exists
    g = np.arange(-0.6, 1.0, 0.1)
    grid = np.array([(x, y) for x in g for y in g])
    cfg = PlannerConfig(N=8, solver=SolverConfig(max_wall_time=5.0, max_iterations=200))
    u, solution, status = plan_step((0, 0, 0), [ObstacleCluster(0, grid, grid.copy())],
                                    (2, 0, 0), cfg=cfg)
    assert status.hold
    assert u == Twist.zero()
    assert solution.max_violation > cfg.accept_factor * cfg.solver.constraint_tolerance


def test_plan_step_ignores_clusters_outside_workspace():
    cfg = PlannerConfig(N=8, solver=OFFLINE, workspace_radius=2.0)
    far = _disk_cluster(4, (10.0, 0.0), 0.3)
    _, solution, status = plan_step((0, 0, 0), [far], (1, 0, 0), cfg=cfg)
    assert solution.separators == ()
    assert status.action is StepAction.MOVE


def test_plan_step_hyperplane_mode_keeps_lines():
    cfg = PlannerConfig(N=10, solver=OFFLINE).with_mode("hyperplane")
    obstacle = _disk_cluster(0, (1.5, 1.2), 0.3)
    _, solution, _ = plan_step((0, 0, 0), [obstacle], (2, 0, 0), cfg=cfg)
    assert all(p.is_hyperplane() for p in solution.separators)


# --- stateful planner -----------------------------------------------------

def test_planner_tracks_ids_and_records_stats():
    cfg = PlannerConfig(N=10, solver=OFFLINE)
    planner = RecedingHorizonPlanner((3, 0, 0), cfg, start=(0, 0, 0))
    clusters = [_disk_cluster(0, (1.5, 1.5), 0.3), _disk_cluster(1, (1.5, -1.5), 0.3)]
    current = Pose(0.0, 0.0, 0.0)
    for _ in range(3):
        u, status = planner.step(current, clusters)
        current = kinematics_step(current, u, cfg.dt)
    assert sorted(c.id for c in planner.clusters) == [0, 1]
    assert len(planner.stats) == 3
    assert planner.stats[0]["warm"] is False
    assert planner.stats[1]["warm"] is True
    assert {"action", "code", "iterations", "wall_time", "K"} <= set(planner.stats[0])
    assert not planner.is_done(current)


@pytest.mark.slow
def test_warm_starts_need_fewer_iterations():
    cfg = PlannerConfig(N=20, solver=OFFLINE)
    goal = Pose(3.0, 0.0, 0.0)
    planner = RecedingHorizonPlanner(goal, cfg, start=(0, 0, 0))
    clusters = [_disk_cluster(0, (1.5, 0.6), 0.3)]
    current = Pose(0.0, 0.0, 0.0)
    fewer = 0
    ticks = 10
    for _ in range(ticks):
        u, status = planner.step(current, clusters)
        _, _, cold = plan_step(current, planner.clusters, goal, None, cfg, planner.reference,
                               planner.footprint, planner.progress)
        if status.solve.iterations < cold.solve.iterations:
            fewer += 1
        current = kinematics_step(current, u, cfg.dt)
    # the first tick is a cold start on both sides
    assert fewer >= 0.8 * (ticks - 1)


@pytest.mark.slow
def test_separators_flatten_to_lines_for_distant_disks():
    cfg = PlannerConfig(N=30, solver=OFFLINE)
    rng = np.random.default_rng(7)
    flat = 0
    for _ in range(10):
        center = (1.5 + rng.uniform(-0.3, 0.3), 2.2 + rng.uniform(-0.2, 0.2))
        _, solution, status = plan_step((0, 0, 0), [_disk_cluster(0, center, 0.3)], (3, 0, 0),
                                        cfg=cfg)
        (poly,) = solution.separators
        if poly.quadratic_norm() <= 0.05 * poly.linear_norm():
            flat += 1
        else:
            log.info("disk at (%.2f, %.2f): %s did not flatten (%s)",
                     *center, poly, status.solve.code.value)
    assert flat >= 8

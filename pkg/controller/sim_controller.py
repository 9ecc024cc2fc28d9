"""
Simulation controller.

Runs one scenario tick by tick:

    perceive -> obstacle pipeline -> plan_step -> kinematics_step

and collects the trajectory log and run metrics. A collision flags the run
but does not stop it. The run ends on goal reached, time limit, or a stall
(no progress for stall_timeout seconds with no scenario event pending).
"""

import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from model.world_state import WorldState
from solver.geom_poly import Twist
from solver.obstacle_pipeline import process_cloud
from solver.planner import RecedingHorizonPlanner, ReferencePath

from .config import AppConfig, apply_scenario_overrides

log = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ("t", "x", "y", "psi", "vx", "vy", "omega", "min_clearance")
_TIMING_FIELDS = ("mean_solve_ms", "median_solve_ms")


@dataclass(frozen=True)
class RunMetrics:
    scenario: str
    seed: int
    mode: str
    path_length: float
    total_time: float
    success: bool
    completion: bool
    collision_free: bool
    path_ratio: float
    min_clearance: float
    n_steps: int
    n_holds: int
    end_reason: str
    mean_solve_ms: float
    median_solve_ms: float

    def to_json(self, include_timing=True):
        data = asdict(self)
        if not include_timing:
            for name in _TIMING_FIELDS:
                data.pop(name)
        return data


@dataclass(frozen=True, eq=False)
class RunResult:
    metrics: RunMetrics
    rows: tuple
    snapshots: tuple
    planner_stats: tuple


def _row(t, pose, u, clearance):
    return (t, pose.x, pose.y, pose.psi, u.vx, u.vy, u.omega, clearance)


def _path_length(rows):
    xy = np.array([(r[1], r[2]) for r in rows])
    if len(xy) < 2:
        return 0.0
    return float(np.hypot(*np.diff(xy, axis=0).T).sum())


def _reference_for(scenario):
    if scenario.reference is not None:
        return ReferencePath(scenario.reference)
    return ReferencePath.straight(scenario.start, scenario.goal)


def run_scenario(scenario, config=None, seed=None, mode=None, snapshot_every=10):
    """Simulate one run.

    Args:
        scenario: Scenario.
        config: AppConfig (defaults when None).
        seed: perception seed; overrides config.run.seed.
        mode: 'quad' or 'hyperplane'; overrides config.run.mode.
        snapshot_every: keep every n-th accepted plan for plotting.

    Returns:
        RunResult.
    """
    config = config or AppConfig()
    cfg = apply_scenario_overrides(config, scenario).for_run(seed, mode)
    dt = cfg.planner.dt
    world = WorldState(scenario, cfg.run.seed)
    planner = RecedingHorizonPlanner(scenario.goal, cfg.planner, scenario.footprint,
                                     reference=_reference_for(scenario))
    time_limit = cfg.run.time_limit or scenario.time_limit

    rows = []
    snapshots = []
    n_holds = 0
    collided, clearance = world.collision()
    min_clearance = clearance
    anchor = {"t": 0.0, "pose": world.pose}

    def reset_anchor(_event):
        anchor["t"] = world.time
        anchor["pose"] = world.pose

    world.on_event(reset_anchor)
    end_reason = "time_limit"
    completion = False

    while world.time < time_limit - 1e-9:
        pose = world.pose
        if planner.is_done(pose):
            completion = True
            end_reason = "goal"
            break
        clusters = process_cloud(world.perceive(), cfg.pipeline)
        u, status = planner.step(pose, clusters)
        if status.hold:
            n_holds += 1
        elif len(rows) % snapshot_every == 0:
            snapshots.append((world.time, planner.last_solution))
        rows.append(_row(world.time, pose, u, clearance))

        world.step(u, dt)
        hit, clearance = world.collision()
        if hit and not collided:
            log.warning("[Sim] %s: collision at t=%.2fs (depth %.3f m)",
                        scenario.name, world.time, -clearance)
        collided = collided or hit
        min_clearance = min(min_clearance, clearance)

        moved = math.hypot(world.pose.x - anchor["pose"].x, world.pose.y - anchor["pose"].y)
        turned = abs(world.pose.psi - anchor["pose"].psi)
        if moved > cfg.run.stall_distance or turned > 0.1:
            anchor["t"], anchor["pose"] = world.time, world.pose
        elif world.time - anchor["t"] >= cfg.run.stall_timeout and world.pending_events == 0:
            end_reason = "stall"
            break
    else:
        if planner.is_done(world.pose):
            completion = True
            end_reason = "goal"

    rows.append(_row(world.time, world.pose, Twist.zero(), clearance))
    path_length = _path_length(rows)
    straight = scenario.straight_distance()
    solve_ms = [1e3 * s["wall_time"] for s in planner.stats]
    metrics = RunMetrics(
        scenario=scenario.name,
        seed=cfg.run.seed,
        mode=cfg.run.mode,
        path_length=path_length,
        total_time=world.time,
        success=completion and not collided,
        completion=completion,
        collision_free=not collided,
        path_ratio=path_length / straight if straight > 0 else float("nan"),
        min_clearance=min_clearance,
        n_steps=len(planner.stats),
        n_holds=n_holds,
        end_reason=end_reason,
        mean_solve_ms=float(np.mean(solve_ms)) if solve_ms else 0.0,
        median_solve_ms=float(np.median(solve_ms)) if solve_ms else 0.0,
    )
    log.info("[Sim] %s seed=%d mode=%s: %s after %.1fs, path %.2f m, holds %d",
             scenario.name, metrics.seed, metrics.mode, end_reason, metrics.total_time,
             path_length, n_holds)
    return RunResult(metrics, tuple(rows), tuple(snapshots), tuple(planner.stats))


# ===========================================================================
# Writers
# ===========================================================================

def write_trajectory_csv(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRAJECTORY_COLUMNS)
        for r in rows:
            writer.writerow([f"{v:.9f}" for v in r])


def write_metrics_json(metrics, path, include_timing=True):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(metrics.to_json(include_timing), f, indent=2, sort_keys=True)
        f.write("\n")


def write_run_artifacts(result, scenario, out_dir):
    """trajectory.csv, metrics.json and trajectory.svg under out_dir."""
    from view.plot_renderer import render_run

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "trajectory": os.path.join(out_dir, "trajectory.csv"),
        "metrics": os.path.join(out_dir, "metrics.json"),
        "plot": os.path.join(out_dir, "trajectory.svg"),
    }
    write_trajectory_csv(result.rows, paths["trajectory"])
    write_metrics_json(result.metrics, paths["metrics"])
    render_run(scenario, result, paths["plot"])
    return paths

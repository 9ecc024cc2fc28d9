"""Scenario worlds, perception, ground-truth collisions and closed-loop runs."""

import math
import os

import numpy as np
import pytest

from controller.config import AppConfig
from controller.sim_controller import TRAJECTORY_COLUMNS, run_scenario, write_run_artifacts
from model.collision import ground_truth_collision
from model.scenario import (
    ConfigError, DiskObstacle, RemovalEvent, Scenario, load_scenario, make_dead_end_scenario,
    make_forest_scenario, make_passage_scenario, rectangle, scenario_from_json,
)
from model.world_state import WorldState, perceive
from solver.footprint import l_shape_footprint
from solver.geom_poly import Pose, Twist

SCENARIO_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "scenarios")


def _open_scenario(obstacles=(), events=(), **kw):
    return Scenario("open", obstacles, (0.0, 0.0, 0.0), (1.0, 0.0, 0.0), events=events, **kw)


# --- perception -----------------------------------------------------------

def test_perceive_nothing_in_range():
    scenario = _open_scenario([DiskObstacle("far", (10.0, 0.0), 0.5)])
    assert len(perceive(scenario, scenario.start)) == 0


def test_perceive_disk_boundary():
    disk = DiskObstacle("d", (1.0, 0.0), 0.5)
    scenario = _open_scenario([disk], point_density=20.0)
    cloud = perceive(scenario, scenario.start, seed=3)
    assert len(cloud) == math.ceil(20.0 * 2 * math.pi * 0.5)
    assert np.allclose(np.hypot(*(cloud.points - disk.center).T), 0.5)


def test_perceive_clips_to_sensing_radius():
    scenario = _open_scenario([DiskObstacle("edge", (3.0, 0.0), 0.5)], sensing_radius=3.0)
    cloud = perceive(scenario, scenario.start)
    assert 0 < len(cloud) < math.ceil(20.0 * math.pi)
    assert np.all(np.hypot(*cloud.points.T) <= 3.0)


def test_perceive_is_seeded():
    scenario = _open_scenario([DiskObstacle("d", (1.0, 0.0), 0.5)])
    a = perceive(scenario, scenario.start, seed=1).points
    b = perceive(scenario, scenario.start, seed=1).points
    c = perceive(scenario, scenario.start, seed=2).points
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


# --- ground truth ---------------------------------------------------------

def test_disk_in_inner_corner_clearance():
    fp = l_shape_footprint()
    hit, clearance = ground_truth_collision(fp, Pose(0, 0, 0), [DiskObstacle("d", (0.35, 0.35), 0.3)])
    assert not hit
    assert clearance == pytest.approx(0.05, abs=1e-6)


def test_disk_overlap_is_negative():
    fp = l_shape_footprint()
    hit, clearance = ground_truth_collision(fp, Pose(0, 0, 0), [DiskObstacle("d", (0.25, 0.25), 0.3)])
    assert hit
    assert clearance == pytest.approx(-0.05, abs=1e-6)


def test_polygon_clearance_follows_pose():
    fp = l_shape_footprint()
    wall = rectangle("wall", 1.0, -1.0, 1.2, 1.0)
    _, near = ground_truth_collision(fp, Pose(0, 0, 0), [wall])
    assert near == pytest.approx(0.2)
    hit, _ = ground_truth_collision(fp, Pose(0.5, 0, 0), [wall])
    assert hit


# --- generators -----------------------------------------------------------

def test_passage_gap_width():
    scenario = make_passage_scenario(1.4)
    upper, lower = (o.shape for o in scenario.obstacles)
    assert upper.distance(lower) == pytest.approx(1.4)
    assert not ground_truth_collision(scenario.footprint, scenario.start, scenario)[0]


def test_passage_rejects_zero_gap():
    with pytest.raises(ValueError):
        make_passage_scenario(0.0)


def test_forest_surface_spacing():
    scenario = make_forest_scenario(4.0)
    shapes = [o.shape for o in scenario.obstacles]
    gaps = [a.distance(b) for i, a in enumerate(shapes) for b in shapes[i + 1:]]
    assert min(gaps) == pytest.approx(4.0, abs=1e-3)
    for pose in (scenario.start, scenario.goal):
        assert not ground_truth_collision(scenario.footprint, pose, scenario)[0]


def test_forest_lane_follows_gap_centre():
    assert make_forest_scenario(4.0).reference is None
    for spacing in (1.4, 1.6):
        generated = make_forest_scenario(spacing)
        shipped = load_scenario(os.path.join(SCENARIO_DIR, f"forest_{spacing:g}.json"))
        assert np.allclose(generated.reference, shipped.reference)
        assert np.allclose(generated.start, shipped.start)
        mid_y = generated.reference[1][1]
        trees = generated.obstacles
        for tree in trees:
            pose = Pose(tree.center[0], mid_y, 0.0)
            hit, clearance = ground_truth_collision(generated.footprint, pose, trees)
            assert not hit and clearance >= 0.09


def test_dead_end_has_removal_event():
    scenario = make_dead_end_scenario(removal_time=5.0)
    assert [e.obstacle for e in scenario.events] == ["back_wall"]
    assert len(scenario.active_obstacles(4.9)) == 3
    assert len(scenario.active_obstacles(5.0)) == 2


# --- scenario files -------------------------------------------------------

def test_scenario_json_round_trip(tmp_path):
    path = tmp_path / "passage.json"
    make_passage_scenario(1.2).save(str(path))
    back = load_scenario(str(path))
    assert back.name == "passage_1.2"
    assert back.to_json() == make_passage_scenario(1.2).to_json()


def test_scenario_rejects_unknown_keys():
    data = make_passage_scenario(1.2).to_json()
    data["gravity"] = 9.81
    with pytest.raises(ConfigError):
        scenario_from_json(data)


def test_scenario_rejects_colliding_start():
    data = make_passage_scenario(1.2).to_json()
    data["start"] = [0.0, 1.5, 0.0]
    with pytest.raises(ConfigError):
        scenario_from_json(data)


def test_shipped_scenarios_load():
    for name in ("passage_1.0", "passage_1.2", "passage_1.4", "forest_1.4", "forest_1.6",
                 "forest_4.0", "dead_end"):
        scenario = load_scenario(os.path.join(SCENARIO_DIR, f"{name}.json"))
        assert scenario.obstacles


# --- world state ----------------------------------------------------------

def test_world_fires_removal_events():
    disk = DiskObstacle("d", (2.0, 0.0), 0.3)
    world = WorldState(_open_scenario([disk], events=[RemovalEvent(0.25, "d")]))
    fired = []
    world.on_event(fired.append)
    for _ in range(3):
        world.step(Twist(0.1, 0.0, 0.0), 0.1)
    assert [e.obstacle for e in fired] == ["d"]
    assert world.obstacles == ()
    assert world.pending_events == 0
    assert world.pose.x == pytest.approx(0.03)
    world.reset()
    assert world.obstacles == (disk,)


# --- closed loop ----------------------------------------------------------

def test_open_run_reaches_goal(tmp_path):
    scenario = _open_scenario(time_limit=20.0)
    result = run_scenario(scenario, AppConfig())
    m = result.metrics
    assert m.success and m.end_reason == "goal"
    xy = np.array([(r[1], r[2]) for r in result.rows])
    assert m.path_length == pytest.approx(np.hypot(*np.diff(xy, axis=0).T).sum())
    paths = write_run_artifacts(result, scenario, str(tmp_path))
    header = (tmp_path / "trajectory.csv").read_text().splitlines()[0]
    assert header == ",".join(TRAJECTORY_COLUMNS)
    assert paths


@pytest.mark.slow
def test_passage_1_4_succeeds():
    m = run_scenario(make_passage_scenario(1.4), AppConfig(), seed=0).metrics
    assert m.success
    assert m.min_clearance > 0


@pytest.mark.slow
def test_hyperplane_mode_fails_narrow_passage():
    m = run_scenario(make_passage_scenario(1.0), AppConfig(), seed=0, mode="hyperplane").metrics
    assert not m.success


@pytest.mark.slow
def test_runs_are_deterministic():
    scenario = make_passage_scenario(1.4)
    a = run_scenario(scenario, AppConfig(), seed=4)
    b = run_scenario(scenario, AppConfig(), seed=4)
    assert a.rows == b.rows
    assert a.metrics.to_json(include_timing=False) == b.metrics.to_json(include_timing=False)


def _shipped(name):
    return load_scenario(os.path.join(SCENARIO_DIR, f"{name}.json"))


@pytest.mark.slow
@pytest.mark.parametrize("gap", [1.2, 1.0])
def test_quad_mode_clears_narrow_passages(gap):
    m = run_scenario(_shipped(f"passage_{gap}"), AppConfig(), seed=0).metrics
    assert m.success
    assert m.min_clearance > 0
    assert m.total_time <= 13.6


@pytest.mark.slow
def test_hyperplane_mode_fails_passage_1_2():
    m = run_scenario(_shipped("passage_1.2"), AppConfig(), seed=0, mode="hyperplane").metrics
    assert not m.success


@pytest.mark.slow
@pytest.mark.parametrize("name,max_ratio", [
    ("forest_4.0", 1.15),
    ("forest_1.6", 1.25),
    ("forest_1.4", 1.30),
])
def test_forest_runs_complete(name, max_ratio):
    m = run_scenario(_shipped(name), AppConfig(), seed=0).metrics
    assert m.completion and m.end_reason == "goal"
    assert m.collision_free
    assert m.path_ratio <= max_ratio


@pytest.mark.slow
def test_dead_end_waits_then_replans():
    scenario = _shipped("dead_end")
    removal = scenario.events[0].time
    result = run_scenario(scenario, AppConfig(), seed=0)
    m = result.metrics
    assert m.success
    t = np.array([r[0] for r in result.rows])
    xy = np.array([(r[1], r[2]) for r in result.rows])
    # boxed in during the last second before the back wall goes
    late = (t >= removal - 1.0) & (t < removal)
    assert np.ptp(xy[late], axis=0).max() < 0.25
    back_x = scenario.obstacle("back_wall").shape.bounds[0]
    assert xy[t < removal, 0].max() < back_x
    assert t[-1] > removal

"""
Scenario worlds: static obstacle shapes, start/goal, perception settings and
timed removal events.

Built-in generators:
- make_passage_scenario(gap)     two walls forming a slit of width `gap`
- make_forest_scenario(spacing)  grid of disks with surface spacing `spacing`
- make_dead_end_scenario()       U-shaped trap whose back wall can be removed

Scenario files are JSON (meters, poses as [x, y, psi]); see Scenario.to_json.
"""

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.geometry import Point, Polygon

from solver.footprint import Footprint, l_shape_footprint, quadruped_footprint
from solver.geom_poly import Pose
from solver.planner import ReferencePath

from .collision import ground_truth_collision

DEFAULT_SENSING_RADIUS = 3.0    # m
DEFAULT_POINT_DENSITY = 20.0    # points per meter of boundary
FOREST_DISK_RADIUS = 0.3        # m
WALL_LENGTH = 2.0               # m
WALL_THICKNESS = 0.2            # m
FOREST_LANE_CLEARANCE = 0.1     # m, footprint to tree surface on the straight lane


class ConfigError(ValueError):
    """Malformed scenario or configuration file."""


# ===========================================================================
# Obstacle shapes
# ===========================================================================

@dataclass(frozen=True)
class DiskObstacle:
    name: str
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"disk {self.name!r} needs a positive radius, got {self.radius}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def shape(self):
        return Point(self.center).buffer(self.radius, quad_segs=64)

    @property
    def boundary_length(self):
        return 2.0 * math.pi * self.radius

    def sample_boundary(self, density, phase):
        n = max(3, math.ceil(density * self.boundary_length - 1e-9))
        ang = 2.0 * math.pi * (np.arange(n) + phase) / n
        cx, cy = self.center
        return np.column_stack([cx + self.radius * np.cos(ang), cy + self.radius * np.sin(ang)])

    def to_json(self):
        return {"name": self.name, "type": "disk", "center": list(self.center),
                "radius": self.radius}


@dataclass(frozen=True)
class PolygonObstacle:
    name: str
    vertices: tuple

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3 or not Polygon(verts).is_valid or Polygon(verts).area <= 0:
            raise ValueError(f"polygon {self.name!r} must be simple with >= 3 vertices")
        object.__setattr__(self, "vertices", verts)

    @property
    def shape(self):
        return Polygon(self.vertices)

    @property
    def boundary_length(self):
        return float(self.shape.exterior.length)

    def sample_boundary(self, density, phase):
        length = self.boundary_length
        n = max(3, math.ceil(density * length - 1e-9))
        dist = (np.arange(n) + phase) * (length / n)
        pts = shapely.line_interpolate_point(self.shape.exterior, dist)
        return shapely.get_coordinates(pts)

    def to_json(self):
        return {"name": self.name, "type": "polygon", "vertices": [list(v) for v in self.vertices]}


def rectangle(name, xmin, ymin, xmax, ymax):
    return PolygonObstacle(name, ((xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)))


def obstacle_from_json(data):
    try:
        kind = data["type"]
        name = data.get("name", kind)
        if kind == "disk":
            return DiskObstacle(name, tuple(data["center"]), float(data["radius"]))
        if kind == "polygon":
            return PolygonObstacle(name, tuple(tuple(v) for v in data["vertices"]))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad obstacle record {data!r}: {e}")
    raise ConfigError(f"unknown obstacle type {kind!r}")


def _reference_poses(points, start, goal):
    """Reference polyline as (x, y, psi) tuples; 2D points get blended headings."""
    rows = [tuple(map(float, p)) for p in points]
    widths = {len(r) for r in rows}
    if widths == {2}:
        path = ReferencePath.from_polyline(rows, start.psi, goal.psi)
        return tuple(tuple(float(v) for v in p) for p in path.poses)
    if widths == {3}:
        return tuple(rows)
    raise ValueError("reference points must all be (x, y) or all (x, y, psi)")


@dataclass(frozen=True)
class RemovalEvent:
    time: float
    obstacle: str


# ===========================================================================
# Scenario
# ===========================================================================

@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    obstacles: tuple
    start: Pose
    goal: Pose
    workspace_radius: float = 12.0
    sensing_radius: float = DEFAULT_SENSING_RADIUS
    point_density: float = DEFAULT_POINT_DENSITY
    reference: tuple = None
    events: tuple = ()
    footprint: Footprint = field(default_factory=l_shape_footprint)
    pipeline: dict = field(default_factory=dict)
    planner: dict = field(default_factory=dict)
    time_limit: float = 60.0

    def __post_init__(self):
        object.__setattr__(self, "start", Pose(*self.start))
        object.__setattr__(self, "goal", Pose(*self.goal))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "events", tuple(sorted(self.events, key=lambda e: e.time)))
        if self.reference is not None:
            object.__setattr__(self, "reference", _reference_poses(self.reference, self.start, self.goal))
        names = [o.name for o in self.obstacles]
        if len(set(names)) != len(names):
            raise ValueError(f"obstacle names must be unique in scenario {self.name!r}")
        for ev in self.events:
            if ev.obstacle not in names:
                raise ValueError(f"event removes unknown obstacle {ev.obstacle!r}")
        for label in ("sensing_radius", "point_density", "workspace_radius", "time_limit"):
            if not getattr(self, label) > 0:
                raise ValueError(f"{label} must be positive, got {getattr(self, label)}")

    def obstacle(self, name):
        for o in self.obstacles:
            if o.name == name:
                return o
        raise KeyError(name)

    def active_obstacles(self, t=0.0):
        """Obstacles not yet removed by an event at time t."""
        removed = {e.obstacle for e in self.events if e.time <= t}
        return tuple(o for o in self.obstacles if o.name not in removed)

    def straight_distance(self):
        return math.hypot(self.goal.x - self.start.x, self.goal.y - self.start.y)

    def validate(self):
        """Start and goal placements must be collision free."""
        for label, pose in (("start", self.start), ("goal", self.goal)):
            hit, clearance = ground_truth_collision(self.footprint, pose, self.obstacles)
            if hit:
                raise ValueError(
                    f"scenario {self.name!r}: {label} pose collides (clearance {clearance:.3f} m)")
        return self

    # -----------------------------------------------------------------------
    # JSON
    # -----------------------------------------------------------------------

    def to_json(self):
        data = {
            "name": self.name,
            "start": list(self.start),
            "goal": list(self.goal),
            "workspace_radius": self.workspace_radius,
            "sensing_radius": self.sensing_radius,
            "point_density": self.point_density,
            "time_limit": self.time_limit,
            "obstacles": [o.to_json() for o in self.obstacles],
            "events": [{"time": e.time, "remove": e.obstacle} for e in self.events],
            "footprint": self.footprint.to_json(),
        }
        if self.reference is not None:
            data["reference"] = [list(p) for p in self.reference]
        if self.pipeline:
            data["pipeline"] = dict(self.pipeline)
        if self.planner:
            data["planner"] = dict(self.planner)
        return data

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, indent=2, sort_keys=True)
            f.write("\n")


_SCENARIO_KEYS = {
    "name", "start", "goal", "workspace_radius", "sensing_radius", "point_density",
    "time_limit", "obstacles", "events", "footprint", "reference", "pipeline", "planner",
}


def _footprint_from_json(data):
    if "preset" in data:
        params = {k: v for k, v in data.items() if k != "preset"}
        if data["preset"] == "l_shape":
            return l_shape_footprint(**params)
        if data["preset"] == "quadruped":
            return quadruped_footprint(**params)
        raise ConfigError(f"unknown footprint preset {data['preset']!r}")
    return Footprint.from_json(data)


def scenario_from_json(data, base_dir="."):
    if not isinstance(data, dict):
        raise ConfigError("scenario file must hold a JSON object")
    unknown = set(data) - _SCENARIO_KEYS
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    try:
        reference = data.get("reference")
        if isinstance(reference, str):
            path = os.path.join(base_dir, reference)
            ref = ReferencePath.load_csv(path, data["start"][2], data["goal"][2])
            reference = [tuple(p) for p in ref.poses]
        fp = data.get("footprint")
        footprint = _footprint_from_json(fp) if fp is not None else l_shape_footprint()
        scenario = Scenario(
            name=data.get("name", "scenario"),
            obstacles=[obstacle_from_json(o) for o in data.get("obstacles", [])],
            start=Pose(*data["start"]),
            goal=Pose(*data["goal"]),
            workspace_radius=float(data.get("workspace_radius", 12.0)),
            sensing_radius=float(data.get("sensing_radius", DEFAULT_SENSING_RADIUS)),
            point_density=float(data.get("point_density", DEFAULT_POINT_DENSITY)),
            reference=reference,
            events=[RemovalEvent(float(e["time"]), e["remove"]) for e in data.get("events", [])],
            footprint=footprint,
            pipeline=dict(data.get("pipeline", {})),
            planner=dict(data.get("planner", {})),
            time_limit=float(data.get("time_limit", 60.0)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, OSError) as e:
        raise ConfigError(f"bad scenario: {e}")
    try:
        return scenario.validate()
    except ValueError as e:
        raise ConfigError(str(e))


def load_scenario(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read scenario {path}: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"scenario {path} is not valid JSON: {e}")
    return scenario_from_json(data, os.path.dirname(os.path.abspath(path)))


# ===========================================================================
# Generators
# ===========================================================================

_SCENE_PIPELINE = {"feature_spacing": 0.12}


def make_passage_scenario(gap, wall_length=WALL_LENGTH, wall_thickness=WALL_THICKNESS,
                          distance=4.0, heading=math.pi / 4):
    """Two walls across the start-goal line leaving a slit of width `gap`."""
    for label, v in (("gap", gap), ("wall_length", wall_length),
                     ("wall_thickness", wall_thickness), ("distance", distance)):
        if not v > 0:
            raise ValueError(f"{label} must be positive, got {v}")
    h = gap / 2.0
    t = wall_thickness / 2.0
    walls = (
        rectangle("wall_upper", -t, h, t, h + wall_length),
        rectangle("wall_lower", -t, -h - wall_length, t, -h),
    )
    half = distance / 2.0
    return Scenario(
        name=f"passage_{gap:g}",
        obstacles=walls,
        start=Pose(-half, 0.0, heading),
        goal=Pose(half, 0.0, heading),
        workspace_radius=6.0,
        pipeline=dict(_SCENE_PIPELINE),
        time_limit=40.0,
    ).validate()


def make_forest_scenario(spacing, rows=3, cols=3, radius=FOREST_DISK_RADIUS, reference=None):
    """rows x cols disks whose neighbouring surfaces are `spacing` apart.

    Start and goal lie one pitch outside the grid, on a line 0.3 pitch above
    the middle row. When the footprint on that line would pass closer than
    FOREST_LANE_CLEARANCE to a row of trees, and no reference is given, the
    reference ramps into the middle of the gap between the rows and back.
    """
    for label, v in (("spacing", spacing), ("rows", rows), ("cols", cols), ("radius", radius)):
        if not v > 0:
            raise ValueError(f"{label} must be positive, got {v}")
    pitch = spacing + 2.0 * radius
    disks = []
    for i in range(rows):
        for j in range(cols):
            cx = (j - (cols - 1) / 2.0) * pitch
            cy = (i - (rows - 1) / 2.0) * pitch
            disks.append(DiskObstacle(f"tree_{i}_{j}", (cx, cy), radius))
    x_end = ((cols - 1) / 2.0 + 1.0) * pitch
    lane = 0.3 * pitch
    footprint = l_shape_footprint()
    if reference is None:
        reference = _forest_lane(footprint, rows, pitch, radius, lane, x_end)
    return Scenario(
        name=f"forest_{spacing:g}",
        obstacles=disks,
        start=Pose(-x_end, lane, 0.0),
        goal=Pose(x_end, lane, 0.0),
        workspace_radius=x_end + pitch,
        reference=reference,
        footprint=footprint,
        pipeline=dict(_SCENE_PIPELINE),
        time_limit=2.5 * (2.0 * x_end) / 0.45,
    ).validate()


def _forest_lane(footprint, rows, pitch, radius, lane, x_end):
    """Mid-gap reference polyline, or None when the straight lane is clear."""
    _, y_lo, _, y_hi = footprint.shape.bounds
    row_ys = [(i - (rows - 1) / 2.0) * pitch for i in range(rows)]
    below = max((y for y in row_ys if y <= lane), default=lane - pitch)
    above = below + pitch
    if (lane + y_lo >= below + radius + FOREST_LANE_CLEARANCE
            and lane + y_hi <= above - radius - FOREST_LANE_CLEARANCE):
        return None
    mid = 0.5 * (below + above) - 0.5 * (y_lo + y_hi)
    ramp = x_end - 0.4 * pitch
    return [(-x_end, lane), (-ramp, mid), (ramp, mid), (x_end, lane)]


def make_dead_end_scenario(removal_time=12.0, corridor=2.6, depth=2.0, opening=0.5):
    """U-shaped trap ahead of the robot; the back wall is removed at removal_time.

    Side walls and back wall are separate obstacles with `opening` between
    them, narrower than the robot can pass.
    """
    for label, v in (("corridor", corridor), ("depth", depth), ("opening", opening)):
        if not v > 0:
            raise ValueError(f"{label} must be positive, got {v}")
    t = WALL_THICKNESS
    inner = corridor / 2.0
    x0, x1 = -1.0, -1.0 + depth
    back_x = x1 + opening
    obstacles = (
        rectangle("side_left", x0, inner, x1, inner + t),
        rectangle("side_right", x0, -inner - t, x1, -inner),
        rectangle("back_wall", back_x, -inner - t, back_x + t, inner + t),
    )
    events = (RemovalEvent(removal_time, "back_wall"),) if removal_time is not None else ()
    return Scenario(
        name="dead_end",
        obstacles=obstacles,
        start=Pose(-2.5, -0.2, 0.0),
        goal=Pose(3.0, -0.2, 0.0),
        workspace_radius=6.0,
        events=events,
        pipeline={"feature_spacing": 0.12, "link_dist": 0.3},
        time_limit=removal_time + 30.0 if removal_time is not None else 30.0,
    ).validate()

"""
Ground-truth collision checking with exact shapely geometry.

Works on the true footprint polygons and the true obstacle shapes, never on
the sampled collision points or feature points the planner uses.
"""

import math

from shapely import affinity
from shapely.geometry import Point, Polygon
from shapely.ops import unary_union

TOUCH_DEPTH = 1e-9


def placed_footprint(footprint, pose):
    """Footprint union moved to a world pose."""
    x, y, psi = pose
    body = unary_union([Polygon(p) for p in footprint.polygons])
    moved = affinity.rotate(body, psi, origin=(0.0, 0.0), use_radians=True)
    return affinity.translate(moved, x, y)


def _parts(geom):
    return list(getattr(geom, "geoms", [geom]))


def _clearance_disk(robot, disk):
    center = Point(disk.center)
    if robot.contains(center) or robot.boundary.distance(center) == 0.0:
        return -(disk.radius + robot.boundary.distance(center))
    d = robot.distance(center)
    return d - disk.radius


def _depth_inside(points, poly):
    depth = 0.0
    for p in points:
        pt = Point(p)
        if poly.contains(pt):
            depth = max(depth, poly.exterior.distance(pt))
    return depth


def _clearance_polygon(robot, shape):
    if not robot.intersects(shape):
        return robot.distance(shape)
    depth = 0.0
    for part in _parts(robot):
        depth = max(depth, _depth_inside(part.exterior.coords[:-1], shape))
        depth = max(depth, _depth_inside(shape.exterior.coords[:-1], part))
    return -max(depth, TOUCH_DEPTH)


def obstacle_clearance(robot, obstacle):
    """Signed clearance between a placed robot geometry and one obstacle."""
    if hasattr(obstacle, "radius"):
        return _clearance_disk(robot, obstacle)
    return _clearance_polygon(robot, obstacle.shape)


def ground_truth_collision(footprint, pose, obstacles):
    """Exact collision test of the footprint at `pose`.

    Args:
        footprint: true (not inflated) Footprint.
        pose: Pose of the robot.
        obstacles: Scenario or iterable of obstacle shapes.

    Returns:
        (collided, min clearance in meters; negative depth on collision).
    """
    if hasattr(obstacles, "active_obstacles"):
        obstacles = obstacles.obstacles
    robot = placed_footprint(footprint, pose)
    clearance = math.inf
    for obs in obstacles:
        clearance = min(clearance, obstacle_clearance(robot, obs))
    return clearance <= 0.0, clearance

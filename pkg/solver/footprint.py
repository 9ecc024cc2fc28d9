"""
Robot footprint: the body-frame shape and its collision (check) points.

A footprint is a union of simple polygons given counter-clockwise in the body
frame. Overlapping input polygons are merged first, so the collision points
are sampled on the boundary of the actual robot shape (never inside it).

The swept point set over a trajectory is the discrete-time union of the
transformed collision points, tagged with their timestep.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
from shapely.geometry import MultiPolygon, Polygon
from shapely.geometry.polygon import orient
from shapely.ops import unary_union

from .geom_poly import Pose, transform_points

DEFAULT_SAMPLE_SPACING = 0.15   # m
DEFAULT_ARM_LENGTH = 1.2        # m
DEFAULT_ARM_WIDTH = 0.4         # m


# ===========================================================================
# Boundary sampling
# ===========================================================================

def _as_vertices(polygon):
    verts = np.asarray(polygon, dtype=float).reshape(-1, 2)
    if len(verts) > 1 and np.allclose(verts[0], verts[-1]):
        verts = verts[:-1]  # closed ring
    return verts


def sample_collision_points(polygons, spacing):
    """Sample points along polygon boundaries.

    Every vertex is kept; each edge is split into ceil(length / spacing)
    equal pieces, so consecutive samples are at most `spacing` apart.

    Args:
        polygons: iterable of (M, 2) vertex arrays.
        spacing: maximum arc-length gap in meters.

    Returns:
        (P, 2) array of body-frame points.
    """
    if not spacing > 0:
        raise ValueError(f"sample spacing must be positive, got {spacing}")
    out = []
    for poly in polygons:
        verts = _as_vertices(poly)
        if len(verts) < 3:
            raise ValueError(f"degenerate polygon with {len(verts)} vertices")
        if Polygon(verts).area <= 0.0:
            raise ValueError("degenerate polygon with zero area")
        n = len(verts)
        for i in range(n):
            a = verts[i]
            b = verts[(i + 1) % n]
            length = float(np.hypot(*(b - a)))
            pieces = max(1, math.ceil(length / spacing - 1e-12))
            for k in range(pieces):
                out.append(a + (b - a) * (k / pieces))
    return np.array(out, dtype=float).reshape(-1, 2)


# ===========================================================================
# Footprint
# ===========================================================================

class Footprint:
    """Non-convex body-frame robot shape with sampled collision points."""

    def __init__(self, polygons, sample_spacing=DEFAULT_SAMPLE_SPACING):
        shape = _merge(polygons)
        parts = list(shape.geoms) if isinstance(shape, MultiPolygon) else [shape]
        self.polygons = []
        for part in parts:
            part = orient(part, sign=1.0)
            self.polygons.append(np.array(part.exterior.coords[:-1], dtype=float))
        self.sample_spacing = float(sample_spacing)
        self.collision_points = sample_collision_points(self.polygons, self.sample_spacing)
        if len(self.collision_points) < 3:
            raise ValueError("footprint needs at least 3 collision points")
        self._shape = shape

    @property
    def n_points(self):
        return len(self.collision_points)

    @property
    def shape(self):
        """The body-frame union as a shapely geometry."""
        return self._shape

    def area(self):
        return float(self._shape.area)

    def convex_hull_area(self):
        return float(self._shape.convex_hull.area)

    def is_convex(self, tol=1e-9):
        return self.convex_hull_area() - self.area() <= tol

    def bounding_box(self):
        minx, miny, maxx, maxy = self._shape.bounds
        return (maxx - minx, maxy - miny)

    def diameter(self):
        """Largest distance between two boundary vertices."""
        verts = np.vstack(self.polygons)
        diff = verts[:, None, :] - verts[None, :, :]
        return float(np.sqrt((diff ** 2).sum(-1)).max())

    def inflated(self, distance):
        """Footprint grown outward by `distance` (mitred corners)."""
        if distance <= 0:
            return self
        grown = self._shape.buffer(distance, join_style=2)
        return Footprint(_polygon_list(grown), self.sample_spacing)

    def world_polygons(self, pose):
        return [transform_points(pose, poly) for poly in self.polygons]

    def to_json(self):
        return {
            "polygons": [poly.tolist() for poly in self.polygons],
            "sample_spacing": self.sample_spacing,
        }

    @classmethod
    def from_json(cls, data):
        try:
            polygons = data["polygons"]
        except (KeyError, TypeError):
            raise ValueError("footprint record needs a 'polygons' list")
        return cls(polygons, data.get("sample_spacing", DEFAULT_SAMPLE_SPACING))

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json(json.load(f))


def _merge(polygons):
    shapes = []
    for poly in polygons:
        verts = _as_vertices(poly)
        if len(verts) < 3:
            raise ValueError(f"degenerate polygon with {len(verts)} vertices")
        shape = Polygon(verts)
        if not shape.is_valid:
            raise ValueError("footprint polygons must be simple (non-self-intersecting)")
        if shape.area <= 0.0:
            raise ValueError("degenerate polygon with zero area")
        shapes.append(shape)
    if not shapes:
        raise ValueError("footprint needs at least one polygon")
    merged = unary_union(shapes)
    for part in _polygon_parts(merged):
        if part.interiors:
            raise ValueError("footprints with holes are not supported")
    return merged


def _polygon_parts(geom):
    if isinstance(geom, MultiPolygon):
        return list(geom.geoms)
    return [geom]


def _polygon_list(geom):
    return [np.array(orient(p, sign=1.0).exterior.coords[:-1]) for p in _polygon_parts(geom)]


# ===========================================================================
# Swept point set
# ===========================================================================

@dataclass(frozen=True)
class SweptPointSet:
    """Tagged union of transformed collision points over a trajectory.

    points[m] is the world position of collision point m % N_B at timestep
    steps[m] = m // N_B (timestep-major order).
    """

    points: np.ndarray
    steps: np.ndarray
    footprint: Footprint
    trajectory: tuple

    def __len__(self):
        return len(self.points)

    def at_step(self, tau):
        return self.points[self.steps == tau]


def swept_points(footprint, trajectory):
    trajectory = tuple(Pose(*q) for q in trajectory)
    if not trajectory:
        raise ValueError("swept_points needs a non-empty trajectory")
    n_b = footprint.n_points
    blocks = [transform_points(q, footprint.collision_points) for q in trajectory]
    points = np.vstack(blocks)
    steps = np.repeat(np.arange(len(trajectory)), n_b)
    return SweptPointSet(points, steps, footprint, trajectory)


# ===========================================================================
# Presets
# ===========================================================================

def l_shape_footprint(arm_length=DEFAULT_ARM_LENGTH, arm_width=DEFAULT_ARM_WIDTH,
                      sample_spacing=DEFAULT_SAMPLE_SPACING):
    """L-shaped robot: two arm_length x arm_width rectangles sharing a corner square.

    The body origin is the L's inner (reflex) corner; the arms point along
    +x and +y.
    """
    if not (arm_length > 0 and arm_width > 0):
        raise ValueError(f"L dimensions must be positive, got ({arm_length}, {arm_width})")
    if not arm_length > arm_width:
        raise ValueError(
            f"arm_length must exceed arm_width, got ({arm_length}, {arm_width})")
    w = arm_width
    reach = arm_length - arm_width
    outline = [
        (-w, -w), (reach, -w), (reach, 0.0),
        (0.0, 0.0), (0.0, reach), (-w, reach),
    ]
    return Footprint([outline], sample_spacing)


def quadruped_footprint(body_length=0.70, body_width=0.31, frame_reach=0.35,
                        frame_span=0.75, frame_width=0.10,
                        sample_spacing=DEFAULT_SAMPLE_SPACING):
    """Rectangular legged body carrying an L-shaped frame.

    The frame runs along the left flank, overhangs the nose by `frame_reach`
    and turns right across the front, spanning `frame_span` to the right of
    the body centerline. Origin at the body center.
    """
    for name, v in (("body_length", body_length), ("body_width", body_width),
                    ("frame_reach", frame_reach), ("frame_span", frame_span),
                    ("frame_width", frame_width)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    hl, hw = body_length / 2.0, body_width / 2.0
    front = hl + frame_reach
    body = [(-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)]
    flank = [(-hl, hw - frame_width), (front, hw - frame_width), (front, hw), (-hl, hw)]
    cross = [(front - frame_width, -frame_span), (front, -frame_span),
             (front, hw), (front - frame_width, hw)]
    return Footprint([body, flank, cross], sample_spacing)

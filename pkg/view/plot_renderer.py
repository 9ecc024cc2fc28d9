"""
SVG rendering of runs and separator diagnostics (matplotlib, Agg backend).

Zero-level curves of the quadratic separators are drawn with a contour at
level 0 over a grid, which is marching squares on the sampled field.
Output is byte-stable: the SVG hash salt is fixed and no date is embedded.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Circle, Polygon as PolygonPatch  # noqa: E402

from solver.geom_poly import monomials_batch, transform_points  # noqa: E402

plt.rcParams["svg.hashsalt"] = "separating-hypersurfaces"
plt.rcParams["svg.fonttype"] = "none"

_OBSTACLE_STYLE = dict(facecolor="#9a9a9a", edgecolor="#404040", linewidth=0.8)
_ROBOT_COLOR = "#1f77b4"
_SEPARATOR_COLOR = "#d62728"


def _draw_obstacles(ax, obstacles, alpha=1.0):
    for obs in obstacles:
        if hasattr(obs, "radius"):
            ax.add_patch(Circle(obs.center, obs.radius, alpha=alpha, **_OBSTACLE_STYLE))
        else:
            ax.add_patch(PolygonPatch(np.array(obs.vertices), closed=True, alpha=alpha,
                                      **_OBSTACLE_STYLE))


def _draw_footprint(ax, footprint, pose, **style):
    for poly in footprint.polygons:
        ax.add_patch(PolygonPatch(transform_points(pose, poly), closed=True, fill=False, **style))


def draw_zero_level(ax, coef, bounds, resolution=200, **style):
    """Draw {p = 0} of one quadratic inside bounds (xmin, xmax, ymin, ymax)."""
    xmin, xmax, ymin, ymax = bounds
    xs = np.linspace(xmin, xmax, resolution)
    ys = np.linspace(ymin, ymax, resolution)
    gx, gy = np.meshgrid(xs, ys)
    vals = (monomials_batch(np.column_stack([gx.ravel(), gy.ravel()])) @ np.asarray(coef)).reshape(gx.shape)
    if vals.min() < 0.0 < vals.max():
        ax.contour(gx, gy, vals, levels=[0.0], **style)


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def render_run(scenario, result, path, footprint_every=15):
    """Trajectory trace, footprint snapshots and separators of kept plans."""
    rows = np.array(result.rows)
    fig, ax = plt.subplots(figsize=(8, 5))
    removed = {e.obstacle for e in scenario.events}
    _draw_obstacles(ax, [o for o in scenario.obstacles if o.name not in removed])
    _draw_obstacles(ax, [o for o in scenario.obstacles if o.name in removed], alpha=0.3)

    if scenario.reference is not None:
        ref = np.array(scenario.reference)
        ax.plot(ref[:, 0], ref[:, 1], "--", color="#7f7f7f", linewidth=0.8, label="reference")
    else:
        ax.plot([scenario.start.x, scenario.goal.x], [scenario.start.y, scenario.goal.y],
                "--", color="#7f7f7f", linewidth=0.8, label="reference")
    ax.plot(rows[:, 1], rows[:, 2], color=_ROBOT_COLOR, linewidth=1.5, label="executed")
    for r in rows[::footprint_every]:
        _draw_footprint(ax, scenario.footprint, r[1:4], edgecolor=_ROBOT_COLOR, linewidth=0.6, alpha=0.6)
    _draw_footprint(ax, scenario.footprint, rows[-1, 1:4], edgecolor=_ROBOT_COLOR, linewidth=1.2)

    xmin, xmax = rows[:, 1].min() - 2.0, rows[:, 1].max() + 2.0
    ymin, ymax = rows[:, 2].min() - 2.0, rows[:, 2].max() + 2.0
    if result.snapshots:
        _, plan = result.snapshots[len(result.snapshots) // 2]
        states = np.array(plan.states)
        ax.plot(states[:, 0], states[:, 1], ":", color=_SEPARATOR_COLOR, linewidth=1.0)
        for poly in plan.separators:
            draw_zero_level(ax, poly.coef, (xmin, xmax, ymin, ymax),
                            colors=_SEPARATOR_COLOR, linewidths=0.7)

    ax.plot(*scenario.start[:2], "o", color="k", markersize=4)
    ax.plot(*scenario.goal[:2], "*", color="k", markersize=8)
    m = result.metrics
    ax.set_title(f"{scenario.name} ({m.mode}, seed {m.seed}): "
                 f"{'success' if m.success else m.end_reason}, path {m.path_length:.2f} m")
    ax.set_xlim(xmin, xmax)
    ax.set_ylim(ymin, ymax)
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=7, frameon=False)
    _save(fig, path)


def render_separation(A, B, certificate, path):
    """Both point sets and, when a certificate exists, its zero-level curve."""
    A = np.asarray(A, dtype=float).reshape(-1, 2)
    B = np.asarray(B, dtype=float).reshape(-1, 2)
    pts = np.vstack([A, B])
    pad = 0.2 * max(float(np.ptp(pts[:, 0])), float(np.ptp(pts[:, 1])), 1.0)
    bounds = (pts[:, 0].min() - pad, pts[:, 0].max() + pad, pts[:, 1].min() - pad, pts[:, 1].max() + pad)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(A[:, 0], A[:, 1], "o", color="#404040", markersize=3, label="A (p < 0)")
    ax.plot(B[:, 0], B[:, 1], "s", color=_ROBOT_COLOR, markersize=3, label="B (p > 0)")
    if certificate is not None:
        draw_zero_level(ax, certificate.poly.coef, bounds, colors=_SEPARATOR_COLOR, linewidths=1.0)
        ax.set_title(f"degree {certificate.degree} separator")
    else:
        ax.set_title("INFEASIBLE")
    ax.set_xlim(bounds[0], bounds[1])
    ax.set_ylim(bounds[2], bounds[3])
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=7, frameon=False)
    _save(fig, path)

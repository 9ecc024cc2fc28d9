"""
Point cloud -> obstacle clusters with compact boundary feature sets.

Pipeline per perception snapshot:
    1. voxel_downsample   one centroid per occupied grid cell
    2. euclidean_cluster  single-linkage connected components at link_dist
    3. dispersion_scores  mean distance of each point to the rest of its cluster
    4. select_features    greedy thinning, highest score first, min spacing r_d

High dispersion marks the periphery of a cluster, so the thinned feature set
hugs the obstacle outline while staying small.

Everything here is deterministic: ties are broken lexicographically on the
coordinates, and cluster ids follow the lexicographically smallest point.
"""

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import KDTree
from scipy.spatial.distance import pdist, squareform

log = logging.getLogger(__name__)

DEFAULT_VOXEL = 0.10        # m
DEFAULT_LINK_DIST = 0.45    # m
DEFAULT_MIN_SIZE = 3
DEFAULT_FEATURE_SPACING = 0.25  # r_d, m


class SingletonClusterError(ValueError):
    """Dispersion is undefined for a cluster with a single point."""


# ===========================================================================
# Types
# ===========================================================================

class RawCloud:
    """World-frame 2D point cloud."""

    __slots__ = ("points",)

    def __init__(self, points=()):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise ValueError("RawCloud points must be finite")
        self.points = pts

    def __len__(self):
        return len(self.points)

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path, "r", encoding="utf-8", newline="") as f:
            for row in csv.reader(f):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except (ValueError, IndexError):
                    if rows:
                        raise ValueError(f"bad point row in {path}: {row}")
                    # header line
        return cls(rows)


@dataclass(frozen=True)
class ObstacleCluster:
    """One segmented obstacle with its feature points s_j."""

    id: int
    raw_points: np.ndarray
    feature_points: np.ndarray
    dispersion: np.ndarray = field(default=None, compare=False)

    @property
    def centroid(self):
        return self.raw_points.mean(axis=0)

    @property
    def n_features(self):
        return len(self.feature_points)

    def with_id(self, new_id):
        return replace(self, id=int(new_id))

    def to_json(self):
        return {
            "id": self.id,
            "feature_points": [[float(x), float(y)] for x, y in self.feature_points],
            "raw_count": len(self.raw_points),
        }


# ===========================================================================
# Voxel grid filter
# ===========================================================================

def voxel_downsample(cloud, voxel=DEFAULT_VOXEL):
    """Replace the points of every occupied voxel by their centroid.

    Output order follows the sorted voxel keys, so it does not depend on the
    input order.
    """
    if not voxel > 0:
        raise ValueError(f"voxel size must be positive, got {voxel}")
    pts = cloud.points
    if len(pts) == 0:
        return RawCloud()
    keys = np.floor(pts / voxel).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((len(uniq), 2))
    np.add.at(sums, inverse, pts)
    counts = np.bincount(inverse, minlength=len(uniq)).astype(float)
    return RawCloud(sums / counts[:, None])


# ===========================================================================
# Euclidean clustering
# ===========================================================================

def _lex_sorted(points):
    order = np.lexsort((points[:, 1], points[:, 0]))
    return points[order]


def euclidean_cluster(cloud, link_dist=DEFAULT_LINK_DIST, min_size=DEFAULT_MIN_SIZE):
    """Single-linkage clustering: points chained by hops <= link_dist share a cluster.

    Returns clusters without features (feature_points empty), ids 0..n-1
    ordered by each cluster's lexicographically smallest point.
    """
    if not link_dist > 0:
        raise ValueError(f"link_dist must be positive, got {link_dist}")
    pts = cloud.points
    n = len(pts)
    if n == 0:
        return []
    pairs = KDTree(pts).query_pairs(r=link_dist, output_type="ndarray")
    graph = coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    n_comp, labels = connected_components(graph, directed=False)

    groups = []
    for c in range(n_comp):
        members = pts[labels == c]
        if len(members) < min_size:
            continue
        groups.append(_lex_sorted(members))
    groups.sort(key=lambda g: (g[0, 0], g[0, 1]))
    empty = np.empty((0, 2))
    return [ObstacleCluster(i, g, empty) for i, g in enumerate(groups)]


# ===========================================================================
# Dispersion and feature selection
# ===========================================================================

def dispersion_scores(cluster):
    """c_i = mean distance from point i to every other point of the cluster."""
    pts = _raw(cluster)
    m = len(pts)
    if m < 2:
        raise SingletonClusterError(f"dispersion needs >= 2 points, cluster has {m}")
    dist = squareform(pdist(pts))
    return dist.sum(axis=1) / (m - 1)


def select_features(cluster, r_d=DEFAULT_FEATURE_SPACING, scores=None):
    """Greedy boundary-biased thinning.

    Points are visited by descending score (ties: ascending x, then y); a
    point is kept iff it is at least r_d from every point already kept.
    """
    if not r_d > 0:
        raise ValueError(f"feature spacing must be positive, got {r_d}")
    pts = _raw(cluster)
    if len(pts) == 1:
        return pts.copy()
    if scores is None:
        scores = dispersion_scores(pts)
    scores = np.round(np.asarray(scores, dtype=float), 9)
    order = np.lexsort((pts[:, 1], pts[:, 0], -scores))

    kept = []
    for idx in order:
        p = pts[idx]
        if all(np.hypot(*(p - q)) >= r_d for q in kept):
            kept.append(p)
    return np.array(kept)


def _raw(cluster):
    if isinstance(cluster, ObstacleCluster):
        return cluster.raw_points
    if isinstance(cluster, RawCloud):
        return cluster.points
    return np.asarray(cluster, dtype=float).reshape(-1, 2)


def with_features(cluster, r_d=DEFAULT_FEATURE_SPACING):
    """Attach dispersion scores and feature points to a bare cluster."""
    if len(cluster.raw_points) == 1:
        return replace(cluster, feature_points=cluster.raw_points.copy(),
                       dispersion=np.zeros(1))
    scores = dispersion_scores(cluster)
    feats = select_features(cluster, r_d, scores)
    return replace(cluster, feature_points=feats, dispersion=scores)


# ===========================================================================
# Full chain
# ===========================================================================

@dataclass(frozen=True)
class PipelineConfig:
    """Obstacle pipeline knobs."""

    voxel: float = DEFAULT_VOXEL
    link_dist: float = DEFAULT_LINK_DIST
    min_size: int = DEFAULT_MIN_SIZE
    feature_spacing: float = DEFAULT_FEATURE_SPACING

    def __post_init__(self):
        for name in ("voxel", "link_dist", "feature_spacing"):
            if not getattr(self, name) > 0:
                raise ValueError(f"PipelineConfig.{name} must be positive, got {getattr(self, name)}")
        if self.min_size < 1:
            raise ValueError(f"PipelineConfig.min_size must be >= 1, got {self.min_size}")


def process_cloud(cloud, config=None):
    """Downsample, cluster, score and thin one perception snapshot."""
    config = config or PipelineConfig()
    down = voxel_downsample(cloud, config.voxel)
    clusters = euclidean_cluster(down, config.link_dist, config.min_size)
    out = [with_features(c, config.feature_spacing) for c in clusters]
    log.debug("[Pipeline] %d raw -> %d voxels -> %d clusters, %d features",
              len(cloud), len(down), len(out), sum(c.n_features for c in out))
    return out


def associate_clusters(previous, current, max_jump=None, next_id=0):
    """Carry obstacle ids across snapshots by nearest-centroid matching.

    Each current cluster takes the id of the closest unmatched previous
    cluster within `max_jump` (default: the larger of the two clusters'
    extents); unmatched clusters get fresh ids counting up from
    max(next_id, largest previous id + 1).
    Matching is greedy over pairs sorted by distance.
    """
    if not previous:
        return [c.with_id(next_id + i) for i, c in enumerate(current)]
    if not current:
        return []
    prev_c = np.array([c.centroid for c in previous])
    cur_c = np.array([c.centroid for c in current])
    dist = np.linalg.norm(cur_c[:, None, :] - prev_c[None, :, :], axis=-1)

    def extent(c):
        return float(np.linalg.norm(np.ptp(c.raw_points, axis=0)))

    pairs = sorted((dist[i, j], i, j) for i in range(len(current)) for j in range(len(previous)))
    assigned = {}
    used = set()
    for d, i, j in pairs:
        if i in assigned or j in used:
            continue
        limit = max_jump if max_jump is not None else max(
            extent(current[i]), extent(previous[j]), DEFAULT_LINK_DIST)
        if d > limit:
            continue
        assigned[i] = previous[j].id
        used.add(j)

    next_id = max(next_id, max(c.id for c in previous) + 1)
    out = []
    for i, c in enumerate(current):
        if i in assigned:
            out.append(c.with_id(assigned[i]))
        else:
            out.append(c.with_id(next_id))
            next_id += 1
    return out

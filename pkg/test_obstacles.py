"""Voxel filter, Euclidean clustering, dispersion scores and feature thinning."""

import itertools

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from solver.obstacle_pipeline import (
    ObstacleCluster, PipelineConfig, RawCloud, SingletonClusterError, associate_clusters,
    dispersion_scores, euclidean_cluster, process_cloud, select_features, voxel_downsample,
)

LINE = np.array([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)])


def _union_find_partition(points, link_dist):
    parent = list(range(len(points)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in itertools.combinations(range(len(points)), 2):
        if np.linalg.norm(points[i] - points[j]) <= link_dist:
            parent[find(i)] = find(j)
    groups = {}
    for i, p in enumerate(points):
        groups.setdefault(find(i), set()).add(tuple(p))
    return sorted(frozenset(g) for g in groups.values())


def _blobs(rng, centers, n, spread):
    return np.vstack([c + rng.uniform(-spread, spread, size=(n, 2)) for c in centers])


# --- voxel filter ---------------------------------------------------------

def test_voxel_empty_cloud():
    assert len(voxel_downsample(RawCloud(), 0.1)) == 0


def test_voxel_single_cell_centroid():
    out = voxel_downsample(RawCloud([(0.1, 0.1), (0.2, 0.2)]), 1.0)
    assert len(out) == 1
    assert np.allclose(out.points[0], (0.15, 0.15))


def test_voxel_cell_membership():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 10, size=(1000, 2))
    out = voxel_downsample(RawCloud(pts), 1.0)
    assert len(out) <= 100
    for q in out.points:
        nearest = np.min(np.linalg.norm(pts - q, axis=1))
        assert nearest <= np.sqrt(2) / 2 + 1e-12


def test_voxel_is_order_independent():
    rng = np.random.default_rng(1)
    pts = rng.uniform(-3, 3, size=(300, 2))
    a = voxel_downsample(RawCloud(pts), 0.25).points
    b = voxel_downsample(RawCloud(pts[rng.permutation(len(pts))]), 0.25).points
    assert np.allclose(a, b)


def test_voxel_rejects_non_positive_size():
    with pytest.raises(ValueError):
        voxel_downsample(RawCloud([(0, 0)]), 0.0)


# --- clustering -----------------------------------------------------------

def test_cluster_two_close_points():
    clusters = euclidean_cluster(RawCloud([(0, 0), (0.5, 0)]), link_dist=1.0, min_size=1)
    assert len(clusters) == 1


def test_cluster_two_far_points():
    clusters = euclidean_cluster(RawCloud([(0, 0), (2.0, 0)]), link_dist=1.0, min_size=1)
    assert len(clusters) == 2


def test_cluster_matches_union_find():
    rng = np.random.default_rng(2)
    link = 0.3
    # blob extent 0.6, so neighbouring blobs are 3 * link apart edge to edge
    pts = _blobs(rng, [np.array([0.0, 0.0]), np.array([1.5, 0.0]), np.array([0.0, 1.5])], 20, 0.3)
    clusters = euclidean_cluster(RawCloud(pts), link_dist=link, min_size=1)
    got = sorted(frozenset(map(tuple, c.raw_points)) for c in clusters)
    assert got == _union_find_partition(pts, link)


def test_cluster_three_dense_blobs():
    rng = np.random.default_rng(3)
    link = 0.5
    centers = [np.array([0.0, 0.0]), np.array([2.5, 0.0]), np.array([0.0, 2.5])]
    # 20 points on a 0.1 m ring keep each blob connected
    ring = 0.1 * np.column_stack([np.cos(np.linspace(0, 2 * np.pi, 20, endpoint=False)),
                                  np.sin(np.linspace(0, 2 * np.pi, 20, endpoint=False))])
    pts = np.vstack([c + ring for c in centers])
    clusters = euclidean_cluster(RawCloud(pts[rng.permutation(len(pts))]), link, min_size=3)
    assert len(clusters) == 3
    assert [c.id for c in clusters] == [0, 1, 2]
    assert all(len(c.raw_points) == 20 for c in clusters)


def test_cluster_drops_small_groups():
    pts = [(0, 0), (0.1, 0), (0.2, 0), (5, 5)]
    clusters = euclidean_cluster(RawCloud(pts), link_dist=0.15, min_size=3)
    assert len(clusters) == 1
    assert len(clusters[0].raw_points) == 3


def test_cluster_ids_follow_smallest_point():
    pts = [(5, 0), (5.1, 0), (-1, 0), (-0.9, 0)]
    clusters = euclidean_cluster(RawCloud(pts), link_dist=0.2, min_size=1)
    assert clusters[0].raw_points[0][0] == -1
    assert clusters[1].raw_points[0][0] == 5


def test_cluster_rejects_bad_link():
    with pytest.raises(ValueError):
        euclidean_cluster(RawCloud([(0, 0)]), link_dist=0.0)


def test_downsample_does_not_split_connected_blob():
    rng = np.random.default_rng(4)
    voxel = 0.05
    link = 0.5
    slack = link - 2 * voxel * np.sqrt(2)
    # a chain whose hops are below the slack stays one cluster after downsampling
    t = np.arange(0, 3, slack * 0.9)
    pts = np.column_stack([t, 0.1 * np.sin(t)]) + rng.uniform(-0.01, 0.01, size=(len(t), 2))
    clusters = euclidean_cluster(voxel_downsample(RawCloud(pts), voxel), link, min_size=1)
    assert len(clusters) == 1


# --- dispersion -----------------------------------------------------------

def test_dispersion_collinear():
    assert np.allclose(dispersion_scores(LINE), (1.5, 1.0, 1.5))


def test_dispersion_two_points():
    assert np.allclose(dispersion_scores([(0, 0), (3, 4)]), (5, 5))


def test_dispersion_singleton_signals():
    with pytest.raises(SingletonClusterError):
        dispersion_scores([(1, 1)])


def test_dispersion_argmax_on_hull():
    rng = np.random.default_rng(5)
    for _ in range(200):
        pts = rng.normal(size=(int(rng.integers(4, 40)), 2))
        best = int(np.argmax(dispersion_scores(pts)))
        assert best in set(ConvexHull(pts).vertices)


# --- feature selection ----------------------------------------------------

def test_features_tiny_threshold_keeps_everything():
    feats = select_features(LINE, 1e-9)
    assert len(feats) == 3


def test_features_collinear_trace():
    feats = select_features(LINE, 1.5)
    assert {tuple(p) for p in feats} == {(0.0, 0.0), (2.0, 0.0)}
    assert tuple(feats[0]) == (0.0, 0.0)


def test_features_spacing_and_maximality():
    rng = np.random.default_rng(6)
    r_d = 0.3
    for _ in range(20):
        pts = rng.uniform(-1, 1, size=(60, 2))
        feats = select_features(pts, r_d)
        for a, b in itertools.combinations(feats, 2):
            assert np.linalg.norm(a - b) >= r_d - 1e-9
        for p in pts:
            assert np.min(np.linalg.norm(feats - p, axis=1)) < r_d + 1e-12


def test_features_are_order_independent():
    rng = np.random.default_rng(7)
    pts = rng.uniform(-1, 1, size=(80, 2))
    a = select_features(pts, 0.25)
    b = select_features(pts[rng.permutation(len(pts))], 0.25)
    assert np.array_equal(a, b)


def test_features_subset_of_cluster():
    rng = np.random.default_rng(8)
    pts = rng.uniform(-1, 1, size=(50, 2))
    raw = {tuple(p) for p in pts}
    assert all(tuple(f) in raw for f in select_features(pts, 0.2))


def test_singleton_cluster_is_its_own_feature():
    cluster = ObstacleCluster(0, np.array([[1.0, 2.0]]), np.empty((0, 2)))
    out = process_cloud(RawCloud([(1.0, 2.0)]), PipelineConfig(min_size=1))
    assert len(out) == 1
    assert np.array_equal(out[0].feature_points, cluster.raw_points)


# --- full chain and id tracking -------------------------------------------

def _square_ring(center, half=0.5, n=40):
    t = np.linspace(0, 1, n, endpoint=False)
    edges = [np.column_stack([-half + 2 * half * t, np.full(n, -half)]),
             np.column_stack([np.full(n, half), -half + 2 * half * t]),
             np.column_stack([half - 2 * half * t, np.full(n, half)]),
             np.column_stack([np.full(n, -half), half - 2 * half * t])]
    return np.vstack(edges) + np.asarray(center)


def test_process_cloud_two_obstacles():
    cloud = RawCloud(np.vstack([_square_ring((0, 0)), _square_ring((3, 0))]))
    out = process_cloud(cloud)
    assert len(out) == 2
    for c in out:
        assert 1 <= c.n_features <= len(c.raw_points)
        assert len(c.dispersion) == len(c.raw_points)
        rec = c.to_json()
        assert rec["raw_count"] == len(c.raw_points)
        assert len(rec["feature_points"]) == c.n_features


def test_raw_cloud_csv(tmp_path):
    path = tmp_path / "cloud.csv"
    path.write_text("x,y\n0.5,1.0\n-2,3.25\n")
    cloud = RawCloud.from_csv(str(path))
    assert np.array_equal(cloud.points, [[0.5, 1.0], [-2.0, 3.25]])
    path.write_text("0,0\nnot,a number\n")
    with pytest.raises(ValueError):
        RawCloud.from_csv(str(path))


def test_associate_keeps_ids_of_persisting_obstacles():
    first = process_cloud(RawCloud(np.vstack([_square_ring((0, 0)), _square_ring((3, 0))])))
    first = associate_clusters([], first, next_id=10)
    assert [c.id for c in first] == [10, 11]
    # the left obstacle disappears, a new one appears far away
    second = process_cloud(RawCloud(np.vstack([_square_ring((3.05, 0)), _square_ring((0, 6))])))
    second = associate_clusters(first, second)
    ids = {tuple(np.round(c.centroid)): c.id for c in second}
    assert ids[(3.0, 0.0)] == 11
    assert ids[(0.0, 6.0)] == 12

"""Separator LP, verification and NLP seeding."""

import logging

import numpy as np
import pytest
from shapely.geometry import Point, Polygon

from solver.footprint import sample_collision_points
from solver.geom_poly import QuadPoly, poly_eval_batch
from solver.separation import (
    SeparationCertificate, bisecting_hyperplane, check_separation, find_separator,
    seed_separator,
)

log = logging.getLogger(__name__)


def _circle(radius, n, center=(0.0, 0.0), phase=0.0):
    t = phase + np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.column_stack([np.cos(t), np.sin(t)]) * radius + np.asarray(center)


INNER = _circle(1.0, 12)
OUTER = _circle(2.0, 12)


# --- find_separator -------------------------------------------------------

def test_single_points_hyperplane():
    cert = find_separator([(-1, 0)], [(1, 0)], degree=1, margin=0.01)
    assert cert is not None
    assert cert.degree == 1
    assert cert.poly((-1, 0)) <= -0.01
    assert cert.poly((1, 0)) >= 0.01
    assert cert.poly.is_hyperplane()


def test_annulus_needs_degree_two():
    assert find_separator(INNER, OUTER, degree=1) is None
    cert = find_separator(INNER, OUTER, degree=2)
    assert cert is not None
    assert cert.margin_a >= 0.01 and cert.margin_b >= 0.01


def test_circle_polynomial_separates_annulus():
    # the reference separator x1^2 + x2^2 - 2.25 has margins 1.25 and 1.75
    ok, report = check_separation(QuadPoly((-2.25, 0, 0, 1, 0, 1)), INNER, OUTER, 0.01)
    assert ok
    assert report.margin_a == pytest.approx(1.25)
    assert report.margin_b == pytest.approx(1.75)


def test_identical_sets_are_infeasible():
    assert find_separator([(0, 0)], [(0, 0)], degree=2, margin=0.01) is None
    assert find_separator([(0, 0)], [(0, 0)], degree=2, margin=1e-6) is None


def test_find_separator_rejects_bad_input():
    with pytest.raises(ValueError):
        find_separator([], [(1, 0)])
    with pytest.raises(ValueError):
        find_separator([(0, 0)], [(1, 0)], degree=3)
    with pytest.raises(ValueError):
        find_separator([(0, 0)], [(1, 0)], margin=0.0)


def test_degree_nesting():
    rng = np.random.default_rng(0)
    for _ in range(20):
        A = rng.normal(size=(15, 2)) * 0.5 - np.array([1.5, 0.0])
        B = rng.normal(size=(15, 2)) * 0.5 + np.array([1.5, 0.0])
        if find_separator(A, B, degree=1) is not None:
            assert find_separator(A, B, degree=2) is not None


# --- check_separation -----------------------------------------------------

def test_certificate_checks_on_its_own_sets():
    cert = find_separator(INNER, OUTER, degree=2, margin=0.05)
    ok, report = check_separation(cert.poly, INNER, OUTER, 0.05)
    assert ok
    assert report.n_violators == 0


def test_zero_polynomial_fails_everywhere():
    ok, report = check_separation(QuadPoly.zero(), INNER, OUTER, 0.01)
    assert not ok
    assert len(report.violators_a) == len(INNER)
    assert len(report.violators_b) == len(OUTER)


def test_scaled_certificate_still_valid():
    cert = find_separator(INNER, OUTER, degree=2)
    ok, report = check_separation(cert.poly * 2.0, INNER, OUTER, 0.01)
    assert ok
    assert report.margin_a == pytest.approx(2 * cert.margin_a)
    assert report.margin_b == pytest.approx(2 * cert.margin_b)


def test_certificate_valid_on_subsets():
    cert = find_separator(INNER, OUTER, degree=2)
    ok, _ = check_separation(cert.poly, INNER[::3], OUTER[1::2], 0.01)
    assert ok


def test_violators_sorted_worst_first():
    poly = QuadPoly((0, 1, 0, 0, 0, 0))  # p = x1
    A = [(0.5, 0), (2.0, 0), (-1, 0)]
    ok, report = check_separation(poly, A, [(1, 0)], 0.01)
    assert not ok
    assert report.violators_a == (1, 0)


def test_certificate_json():
    cert = find_separator(INNER, OUTER, degree=2)
    back = SeparationCertificate.from_json(cert.to_json())
    assert back == cert
    assert '"degree": 2' in cert.dumps()


# --- seeding --------------------------------------------------------------

def test_bisecting_hyperplane_sides():
    robot = [(2, 0), (2, 1)]
    obstacle = [(-2, 0), (-2, 1)]
    p = bisecting_hyperplane(robot, obstacle)
    assert np.all(poly_eval_batch(p, robot) > 0)
    assert np.all(poly_eval_batch(p, obstacle) < 0)
    assert p.linear_norm() == pytest.approx(1.0)


def test_seed_separator_is_robot_positive():
    features = _circle(0.3, 10, center=(2.0, 0.0))
    swept = np.vstack([_circle(0.2, 8, center=(x, 0.0)) for x in (-1.0, -0.5, 0.0)])
    current = swept[:8]
    p = seed_separator(swept, current, features, degree=2, margin=0.01)
    ok, _ = check_separation(p, features, swept, 0.01)
    assert ok


def test_seed_separator_falls_back_to_current():
    features = _circle(0.3, 10, center=(0.0, 0.0))
    current = _circle(0.2, 8, center=(-1.5, 0.0))
    # the swept set passes straight through the obstacle
    swept = np.vstack([current, features * 0.5])
    p = seed_separator(swept, current, features, degree=1)
    ok, _ = check_separation(p, features, current, 0.01)
    assert ok


def test_seed_separator_prefers_a_line():
    features = _circle(0.3, 10, center=(2.0, 0.0))
    swept = np.vstack([_circle(0.2, 8, center=(x, 0.0)) for x in (-1.0, -0.5, 0.0)])
    p = seed_separator(swept, swept[:8], features, degree=2, margin=0.01)
    assert p.is_hyperplane()


def test_seed_separator_quadratic_when_no_line_exists():
    p = seed_separator(INNER, INNER, OUTER, degree=2, margin=0.01)
    assert not p.is_hyperplane()
    ok, _ = check_separation(p, OUTER, INNER, 0.01)
    assert ok


# --- randomized existence suite -------------------------------------------

def _random_convex(rng):
    if rng.random() < 0.5:
        r = rng.uniform(0.2, 1.0)
        c = rng.uniform(-4.0 + r, 4.0 - r, size=2)
        return Point(c).buffer(r, 64), _circle(r, 24, center=c, phase=rng.uniform(0, 1))
    w, h = rng.uniform(0.2, 1.5, size=2)
    c = rng.uniform(-3.5, 3.5, size=2)
    verts = np.array([(-w, -h), (w, -h), (w, h), (-w, h)]) / 2 + c
    return Polygon(verts), sample_collision_points([verts], 0.15)


def _nested_pair(rng):
    r_out = rng.uniform(1.5, 4.5)
    c = rng.uniform(-0.5, 0.5, size=2)
    ring = _circle(r_out, 48, center=c)
    if rng.random() < 0.5:
        r_in = rng.uniform(0.2, r_out - 0.3)
        return _circle(r_in, 24, center=c + rng.uniform(-0.1, 0.1, size=2) * (r_out - r_in)), ring
    half = rng.uniform(0.1, (r_out - 0.3) / np.sqrt(2))
    verts = np.array([(-half, -half), (half, -half), (half, half), (-half, half)]) + c
    return sample_collision_points([verts], 0.15), ring


def test_randomized_existence_suite():
    rng = np.random.default_rng(2024)
    found = {"convex": 0, "nested": 0}
    trials = {"convex": 0, "nested": 0}
    while trials["convex"] < 250:
        (sa, A), (sb, B) = _random_convex(rng), _random_convex(rng)
        if sa.distance(sb) < 0.05:
            continue
        trials["convex"] += 1
        if find_separator(A, B, degree=2) is not None:
            found["convex"] += 1
        else:
            log.warning("no degree-2 separator for convex pair %d", trials["convex"])
    for i in range(250):
        A, B = _nested_pair(rng)
        trials["nested"] += 1
        if find_separator(A, B, degree=2) is not None:
            found["nested"] += 1
        else:
            log.warning("no degree-2 separator for nested pair %d", i)
    for kind in found:
        assert found[kind] >= 0.95 * trials[kind]

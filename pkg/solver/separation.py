"""
Polynomial separators for fixed point sets.

find_separator solves a small LP in the six coefficients of a quadratic
p(x) = coef . [x]_2:

    coef . [a]_2 <= -margin   for every a in A
    coef . [b]_2 >= +margin   for every b in B
    |coef_i| <= coef_box

minimizing the L1 norm of coef, so the returned separator is the "smallest"
one and stays well inside the box. Degree 1 pins the quadratic terms to zero.

Sign convention here is A negative / B positive. The trajectory NLP keeps the
robot on the positive side and obstacles on the negative side, so callers pass
obstacle features as A and robot points as B.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .geom_poly import N_COEF, QUADRATIC_TERMS, QuadPoly, monomials_batch, poly_eval_batch

log = logging.getLogger(__name__)

DEFAULT_MARGIN = 0.01
DEFAULT_COEF_BOX = 1e3

# The LP is solved at a slightly inflated margin, then rescaled so the
# exact-margin check holds despite solver round-off.
_MARGIN_INFLATION = 1e-6
_MARGIN_ABS_PAD = 1e-9


class SeparationError(RuntimeError):
    """The LP backend broke down (not the same as an infeasible instance)."""


@dataclass(frozen=True)
class SeparationCertificate:
    """A separator with its achieved margins on both sides."""

    poly: QuadPoly
    margin_a: float
    margin_b: float
    degree: int

    def to_json(self):
        return {
            "coef": self.poly.to_list(),
            "margin_a": self.margin_a,
            "margin_b": self.margin_b,
            "degree": self.degree,
        }

    @classmethod
    def from_json(cls, data):
        return cls(QuadPoly(data["coef"]), float(data["margin_a"]),
                   float(data["margin_b"]), int(data["degree"]))

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True)


@dataclass(frozen=True)
class SeparationReport:
    """Outcome of check_separation."""

    ok: bool
    margin_a: float
    margin_b: float
    violators_a: tuple
    violators_b: tuple

    @property
    def n_violators(self):
        return len(self.violators_a) + len(self.violators_b)


def _points(pts, name):
    arr = np.asarray(pts, dtype=float).reshape(-1, 2)
    if len(arr) == 0:
        raise ValueError(f"point set {name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"point set {name} has non-finite entries")
    return arr


def _check_degree(degree):
    if degree not in (1, 2):
        raise ValueError(f"separator degree must be 1 or 2, got {degree}")


# ===========================================================================
# LP separator
# ===========================================================================

def find_separator(A, B, degree=2, margin=DEFAULT_MARGIN, coef_box=DEFAULT_COEF_BOX):
    """Find p with p <= -margin on A and p >= margin on B.

    Args:
        A: (Na, 2) points for the negative side.
        B: (Nb, 2) points for the positive side.
        degree: 1 (hyperplane) or 2 (quadratic).
        margin: required margin, > 0.
        coef_box: bound on every coefficient.

    Returns:
        SeparationCertificate, or None if no separator exists in the box.

    Raises:
        SeparationError: if the LP solver fails for numerical reasons.
    """
    _check_degree(degree)
    if not margin > 0:
        raise ValueError(f"separation margin must be positive, got {margin}")
    A = _points(A, "A")
    B = _points(B, "B")

    m_lp = margin * (1.0 + _MARGIN_INFLATION) + _MARGIN_ABS_PAD
    ma = monomials_batch(A)
    mb = monomials_batch(B)

    # variables: [coef (6) | t (6)], |coef_i| <= t_i, minimize sum t
    eye = np.eye(N_COEF)
    zeros_a = np.zeros((len(A), N_COEF))
    zeros_b = np.zeros((len(B), N_COEF))
    a_ub = np.vstack([
        np.hstack([ma, zeros_a]),
        np.hstack([-mb, zeros_b]),
        np.hstack([eye, -eye]),
        np.hstack([-eye, -eye]),
    ])
    b_ub = np.concatenate([
        np.full(len(A), -m_lp),
        np.full(len(B), -m_lp),
        np.zeros(2 * N_COEF),
    ])
    cost = np.concatenate([np.zeros(N_COEF), np.ones(N_COEF)])
    bounds = [(-coef_box, coef_box)] * N_COEF + [(0.0, coef_box)] * N_COEF
    if degree == 1:
        for i in QUADRATIC_TERMS:
            bounds[i] = (0.0, 0.0)
            bounds[N_COEF + i] = (0.0, 0.0)

    res = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status == 2:
        log.debug("[Separation] infeasible: |A|=%d |B|=%d degree=%d", len(A), len(B), degree)
        return None
    if res.status != 0 or res.x is None:
        raise SeparationError(f"LP failed with status {res.status}: {res.message}")

    coef = np.array(res.x[:N_COEF])
    if degree == 1:
        coef[list(QUADRATIC_TERMS)] = 0.0
    neg = -poly_eval_batch(coef, A)
    pos = poly_eval_batch(coef, B)
    worst = min(neg.min(), pos.min())
    if worst <= 0.0:
        raise SeparationError(f"LP returned a non-separating point (worst margin {worst:.3e})")
    if worst < margin:
        coef = coef * (m_lp / worst)
        neg = -poly_eval_batch(coef, A)
        pos = poly_eval_batch(coef, B)
    return SeparationCertificate(QuadPoly(coef), float(neg.min()), float(pos.min()), degree)


# ===========================================================================
# Verification
# ===========================================================================

def check_separation(poly, A, B, margin):
    """Check p <= -margin on A and p >= margin on B.

    Returns:
        (ok, SeparationReport) with the violating indices sorted worst first.
    """
    A = np.asarray(A, dtype=float).reshape(-1, 2)
    B = np.asarray(B, dtype=float).reshape(-1, 2)
    neg = -poly_eval_batch(poly, A) if len(A) else np.empty(0)
    pos = poly_eval_batch(poly, B) if len(B) else np.empty(0)

    bad_a = np.flatnonzero(neg < margin)
    bad_b = np.flatnonzero(pos < margin)
    bad_a = tuple(int(i) for i in bad_a[np.argsort(neg[bad_a], kind="stable")])
    bad_b = tuple(int(i) for i in bad_b[np.argsort(pos[bad_b], kind="stable")])
    report = SeparationReport(
        ok=not bad_a and not bad_b,
        margin_a=float(neg.min()) if len(neg) else float("inf"),
        margin_b=float(pos.min()) if len(pos) else float("inf"),
        violators_a=bad_a,
        violators_b=bad_b,
    )
    return report.ok, report


# ===========================================================================
# NLP seeding
# ===========================================================================

def normalized(poly):
    """Scale p so its largest non-constant coefficient has magnitude 1."""
    c = poly.coef if isinstance(poly, QuadPoly) else np.asarray(poly, dtype=float)
    top = float(np.abs(c[1:]).max())
    if top == 0.0:
        return QuadPoly(c)
    return QuadPoly(c / top)


def bisecting_hyperplane(robot_points, obstacle_points):
    """Unit-gradient line through the midpoint of the two centroids.

    Positive on the robot side. A last-resort seed, not a certificate.
    """
    rc = np.asarray(robot_points, dtype=float).reshape(-1, 2).mean(axis=0)
    oc = np.asarray(obstacle_points, dtype=float).reshape(-1, 2).mean(axis=0)
    d = rc - oc
    norm = float(np.hypot(*d))
    n = d / norm if norm > 1e-12 else np.array([1.0, 0.0])
    mid = 0.5 * (rc + oc)
    return QuadPoly([-float(n @ mid), n[0], n[1], 0.0, 0.0, 0.0])


def seed_separator(swept, current, features, degree=2, margin=DEFAULT_MARGIN,
                   coef_box=DEFAULT_COEF_BOX):
    """Initial separator coefficients for one obstacle, robot positive.

    Tries the swept robot points first, then only the current-pose points,
    then falls back to the bisecting hyperplane. For each point set a line
    is tried before a quadratic, so the NLP starts from a hyperplane whenever
    one exists. The LP result is rescaled to a unit-size gradient when that
    only increases its margins.
    """
    _check_degree(degree)
    features = _points(features, "features")
    degrees = (1, 2) if degree == 2 else (1,)
    for name, robot in (("swept", swept), ("current", current)):
        robot = np.asarray(robot, dtype=float).reshape(-1, 2)
        if len(robot) == 0:
            continue
        for d in degrees:
            try:
                cert = find_separator(features, robot, d, margin, coef_box)
            except SeparationError as e:
                log.warning("[Separation] degree %d seed LP on %s points failed: %s", d, name, e)
                continue
            if cert is None:
                continue
            poly = cert.poly
            unit = normalized(poly)
            scale = float(np.abs(poly.coef[1:]).max())
            if 0.0 < scale < 1.0 and np.abs(unit.coef).max() <= coef_box:
                poly = unit
            return poly
    log.debug("[Separation] seeding with bisecting hyperplane")
    return bisecting_hyperplane(current if len(current) else swept, features)

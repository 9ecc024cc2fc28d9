"""
Planar poses, rigid transforms and quadratic polynomials.

This is the algebraic substrate of every separation constraint.

Conventions:
- Pose (x, y, psi): position in meters, heading in radians. Headings are
  stored unwrapped; wrapping only happens inside error terms.
- Twist (vx, vy, omega): body-frame velocity input.
- The monomial basis is fixed to

      [x]_2 = (1, x1, x2, x1^2, x1*x2, x2^2)

  and every coefficient vector in the package (NLP packing, JSON, CSV) uses
  this order. Index 3..5 are the quadratic terms; pinning them to zero gives
  a hyperplane.
"""

import math
from typing import NamedTuple

import numpy as np

N_COEF = 6
QUADRATIC_TERMS = (3, 4, 5)


# ---------------------------------------------------------------------------
# Pose / Twist
# ---------------------------------------------------------------------------

class Pose(NamedTuple):
    """Robot configuration q = (x, y, psi)."""

    x: float
    y: float
    psi: float

    def as_array(self):
        return np.array([self.x, self.y, self.psi], dtype=float)

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=float).reshape(3)
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))


class Twist(NamedTuple):
    """Body-frame velocity input u = (vx, vy, omega)."""

    vx: float
    vy: float
    omega: float

    def as_array(self):
        return np.array([self.vx, self.vy, self.omega], dtype=float)

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=float).reshape(3)
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))

    @classmethod
    def zero(cls):
        return cls(0.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# QuadPoly
# ---------------------------------------------------------------------------

class QuadPoly:
    """Quadratic polynomial p(x) = coef . [x]_2 over R^2. Immutable."""

    __slots__ = ("_coef",)

    def __init__(self, coef):
        arr = np.array(coef, dtype=float).reshape(-1)
        if arr.size != N_COEF:
            raise ValueError(f"QuadPoly needs {N_COEF} coefficients, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"QuadPoly coefficients must be finite: {arr}")
        arr.flags.writeable = False
        self._coef = arr

    @property
    def coef(self):
        return self._coef

    @classmethod
    def zero(cls):
        return cls(np.zeros(N_COEF))

    def __call__(self, pt):
        return poly_eval(self, pt)

    def __mul__(self, t):
        return QuadPoly(self._coef * float(t))

    __rmul__ = __mul__

    def __add__(self, other):
        return QuadPoly(self._coef + _coef_of(other))

    def __eq__(self, other):
        if not isinstance(other, QuadPoly):
            return NotImplemented
        return bool(np.array_equal(self._coef, other._coef))

    def __hash__(self):
        return hash(self._coef.tobytes())

    def __repr__(self):
        terms = ", ".join(f"{c:.6g}" for c in self._coef)
        return f"QuadPoly({terms})"

    def is_hyperplane(self, tol=0.0):
        return bool(np.all(np.abs(self._coef[list(QUADRATIC_TERMS)]) <= tol))

    def linear_norm(self):
        return float(np.linalg.norm(self._coef[1:3]))

    def quadratic_norm(self):
        return float(np.linalg.norm(self._coef[3:6]))

    def to_list(self):
        return [float(c) for c in self._coef]


def _coef_of(p):
    if isinstance(p, QuadPoly):
        return p.coef
    return np.asarray(p, dtype=float).reshape(N_COEF)


# ===========================================================================
# Monomials and polynomial evaluation
# ===========================================================================

def monomials(pt):
    """Degree-2 monomial vector (1, x1, x2, x1^2, x1*x2, x2^2) of a 2D point."""
    x1, x2 = float(pt[0]), float(pt[1])
    return np.array([1.0, x1, x2, x1 * x1, x1 * x2, x2 * x2])


def monomials_batch(points):
    """Row-wise monomials of an (M, 2) array. Returns (M, 6)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    x1 = pts[:, 0]
    x2 = pts[:, 1]
    return np.column_stack([np.ones_like(x1), x1, x2, x1 * x1, x1 * x2, x2 * x2])


def poly_eval(p, pt):
    return float(_coef_of(p) @ monomials(pt))


def poly_eval_batch(p, points):
    return monomials_batch(points) @ _coef_of(p)


def poly_grad_pt(p, pt):
    """Spatial gradient (dp/dx1, dp/dx2) at pt."""
    c = _coef_of(p)
    x1, x2 = float(pt[0]), float(pt[1])
    return np.array([
        c[1] + 2.0 * c[3] * x1 + c[4] * x2,
        c[2] + c[4] * x1 + 2.0 * c[5] * x2,
    ])


def poly_grad_batch(coefs, points):
    """Spatial gradients for K polynomials at M points.

    Args:
        coefs: (K, 6) coefficient rows.
        points: (M, 2) points.

    Returns:
        (M, K, 2) array of gradients.
    """
    c = np.asarray(coefs, dtype=float).reshape(-1, N_COEF)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    x1 = pts[:, 0:1]
    x2 = pts[:, 1:2]
    gx = c[None, :, 1] + 2.0 * c[None, :, 3] * x1 + c[None, :, 4] * x2
    gy = c[None, :, 2] + c[None, :, 4] * x1 + 2.0 * c[None, :, 5] * x2
    return np.stack([gx, gy], axis=-1)


# ===========================================================================
# Rigid transforms
# ===========================================================================

def rotation(psi):
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s], [s, c]])


def transform_point(pose, body_pt):
    """World position of a body-frame point: R(psi) b + (x, y)."""
    c, s = math.cos(pose[2]), math.sin(pose[2])
    bx, by = float(body_pt[0]), float(body_pt[1])
    return np.array([c * bx - s * by + pose[0], s * bx + c * by + pose[1]])


def transform_points(pose, body_pts):
    """Vectorized transform_point for an (M, 2) array."""
    pts = np.asarray(body_pts, dtype=float).reshape(-1, 2)
    return pts @ rotation(pose[2]).T + np.array([pose[0], pose[1]])


def transform_jacobian(pose, body_pt):
    """d(world point)/d(x, y, psi) as a 2x3 matrix."""
    c, s = math.cos(pose[2]), math.sin(pose[2])
    bx, by = float(body_pt[0]), float(body_pt[1])
    return np.array([
        [1.0, 0.0, -s * bx - c * by],
        [0.0, 1.0, c * bx - s * by],
    ])

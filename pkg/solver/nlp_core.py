"""
The joint trajectory / separator NLP.

Decision vector (frozen packing order, see DecisionVector):

    z = [ q_1 .. q_N  (3N) | u_0 .. u_{N-1}  (3N) | coef_1 .. coef_K  (6K) ]

q_0 is pinned to the start pose and is not a variable. Each obstacle k owns one
quadratic p_k shared by the whole horizon.

Constraint rows, in order:

    dynamics    3N     q_{t+1} - f(q_t, u_t) = 0       (heading defect not wrapped)
    robot side  K*N_B*(N+1)   p_k(T(q_t, b_i)) - margin >= 0
                ordered k-major, then t = 0..N, then collision point i
    obstacle    sum_k N_O_k   -p_k(s_j) - margin >= 0  ordered k-major, then j

Input bounds u_min <= u_t <= u_max are variable bounds, not rows. In
hyperplane mode (degree 1) the quadratic coefficients are pinned to zero by
their bounds.

Cost J = J_q + J_s + J_u + J_p:
    J_q  tracking sum_{t=0..N} e_t' Q_eq e_t  plus terminal e_N' Q_fq e_N vs goal
    J_s  smoothness on consecutive input differences (t = 0..N-2)
    J_u  input effort u_t' R u_t
    J_p  coefficient regularization coef_k' Q_p coef_k
Heading errors use angle_diff everywhere in the cost.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.sparse import coo_matrix

from .footprint import Footprint
from .geom_poly import N_COEF, QUADRATIC_TERMS, Pose, Twist, monomials_batch, poly_grad_batch

DEFAULT_SEP_MARGIN = 0.01
DEFAULT_COEF_BOX = 1e3


# ===========================================================================
# Kinematics
# ===========================================================================

def kinematics_step(q, u, dt):
    """Explicit-Euler holonomic step with body-frame velocities."""
    x, y, psi = q
    vx, vy, omega = u
    c, s = math.cos(psi), math.sin(psi)
    return Pose(
        x + dt * (vx * c - vy * s),
        y + dt * (vx * s + vy * c),
        psi + dt * omega,
    )


def angle_diff(a, b):
    """Wrapped difference a - b in (-pi, pi]."""
    d = math.atan2(math.sin(a - b), math.cos(a - b))
    if d == -math.pi:
        d = math.pi
    return d


def _angle_diff_vec(a, b):
    d = np.arctan2(np.sin(a - b), np.cos(a - b))
    return np.where(d == -np.pi, np.pi, d)


# ===========================================================================
# Weights and problem
# ===========================================================================

def _diag(values):
    return np.diag(np.asarray(values, dtype=float))


def _matrix(value, size, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1:
        arr = np.diag(arr)
    if arr.shape != (size, size):
        raise ValueError(f"{name} must be {size}x{size}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    sym = 0.5 * (arr + arr.T)
    if np.linalg.eigvalsh(sym).min() < -1e-12:
        raise ValueError(f"{name} must be positive semidefinite")
    return arr


@dataclass(frozen=True, eq=False)
class Weights:
    """Cost weights. Vectors are taken as diagonals."""

    Q_eq: np.ndarray = field(default_factory=lambda: _diag([1.0, 1.0, 0.3]))
    Q_fq: np.ndarray = field(default_factory=lambda: _diag([50.0, 50.0, 10.0]))
    Q_a: np.ndarray = field(default_factory=lambda: _diag([0.5, 0.5]))
    Q_alpha: float = 0.3
    R: np.ndarray = field(default_factory=lambda: _diag([0.1, 0.1, 0.05]))
    Q_p: np.ndarray = field(default_factory=lambda: _diag([1e-4, 1e-4, 1e-4, 1e-5, 1e-5, 1e-5]))

    def __post_init__(self):
        object.__setattr__(self, "Q_eq", _matrix(self.Q_eq, 3, "Q_eq"))
        object.__setattr__(self, "Q_fq", _matrix(self.Q_fq, 3, "Q_fq"))
        object.__setattr__(self, "Q_a", _matrix(self.Q_a, 2, "Q_a"))
        object.__setattr__(self, "R", _matrix(self.R, 3, "R"))
        q_p = _matrix(self.Q_p, N_COEF, "Q_p")
        if np.count_nonzero(q_p - np.diag(np.diag(q_p))):
            raise ValueError("Q_p must be diagonal")
        object.__setattr__(self, "Q_p", q_p)
        if not (math.isfinite(self.Q_alpha) and self.Q_alpha >= 0):
            raise ValueError(f"Q_alpha must be >= 0, got {self.Q_alpha}")
        object.__setattr__(self, "Q_alpha", float(self.Q_alpha))

    @classmethod
    def zero(cls):
        return cls(np.zeros(3), np.zeros(3), np.zeros(2), 0.0, np.zeros(3), np.zeros(N_COEF))

    def to_json(self):
        return {
            "Q_eq": self.Q_eq.tolist(), "Q_fq": self.Q_fq.tolist(),
            "Q_a": self.Q_a.tolist(), "Q_alpha": self.Q_alpha,
            "R": self.R.tolist(), "Q_p": np.diag(self.Q_p).tolist(),
        }


@dataclass(frozen=True, eq=False)
class PlanProblem:
    """One finite-horizon planning instance."""

    N: int
    dt: float
    start: Pose
    goal: Pose
    reference: tuple
    obstacles: tuple
    footprint: Footprint
    u_min: Twist
    u_max: Twist
    weights: Weights = field(default_factory=Weights)
    sep_margin: float = DEFAULT_SEP_MARGIN
    workspace_radius: float = 3.0
    degree: int = 2
    coef_box: float = DEFAULT_COEF_BOX

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"horizon N must be an integer >= 2, got {self.N}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "start", Pose(*self.start))
        object.__setattr__(self, "goal", Pose(*self.goal))
        object.__setattr__(self, "u_min", Twist(*self.u_min))
        object.__setattr__(self, "u_max", Twist(*self.u_max))
        if any(lo > hi for lo, hi in zip(self.u_min, self.u_max)):
            raise ValueError(f"u_min {self.u_min} exceeds u_max {self.u_max}")
        reference = tuple(Pose(*q) for q in self.reference)
        if len(reference) != self.N + 1:
            raise ValueError(f"reference needs N+1 = {self.N + 1} poses, got {len(reference)}")
        object.__setattr__(self, "reference", reference)
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2, got {self.degree}")
        if not self.sep_margin > 0:
            raise ValueError(f"sep_margin must be positive, got {self.sep_margin}")

    @property
    def K(self):
        return len(self.obstacles)

    @property
    def n_collision_points(self):
        return self.footprint.n_points

    @property
    def obstacle_ids(self):
        return tuple(o.id for o in self.obstacles)

    def feature_counts(self):
        return tuple(len(o.feature_points) for o in self.obstacles)


# ===========================================================================
# Decision vector and layouts
# ===========================================================================

class DecisionVector:
    """Flat decision vector with named views.

    Packing order: states q_1..q_N (x, y, psi each), inputs u_0..u_{N-1}
    (vx, vy, omega each), then coef(p_1)..coef(p_K) in monomial order.
    """

    def __init__(self, z, N, K):
        z = np.array(z, dtype=float).reshape(-1)
        if z.size != 6 * N + N_COEF * K:
            raise ValueError(f"decision vector length {z.size} != 6N + 6K = {6 * N + N_COEF * K}")
        self.z = z
        self.N = N
        self.K = K

    @classmethod
    def pack(cls, states, inputs, coefs):
        states = np.asarray(states, dtype=float).reshape(-1, 3)
        inputs = np.asarray(inputs, dtype=float).reshape(-1, 3)
        coefs = np.asarray(coefs, dtype=float).reshape(-1, N_COEF)
        if len(states) != len(inputs):
            raise ValueError(f"{len(states)} states vs {len(inputs)} inputs")
        z = np.concatenate([states.reshape(-1), inputs.reshape(-1), coefs.reshape(-1)])
        return cls(z, len(states), len(coefs))

    @property
    def states(self):
        return self.z[:3 * self.N].reshape(self.N, 3)

    @property
    def inputs(self):
        return self.z[3 * self.N:6 * self.N].reshape(self.N, 3)

    @property
    def coefs(self):
        return self.z[6 * self.N:].reshape(self.K, N_COEF)

    def __len__(self):
        return self.z.size

    def copy(self):
        return DecisionVector(self.z.copy(), self.N, self.K)


class VariableCounts(NamedTuple):
    n_vars: int
    n_coef_vars: int
    n_vars_per_step: int
    n_coef_vars_per_step: int
    coef_var_saving: int
    n_dynamics_rows: int
    n_robot_rows: int
    n_obstacle_rows: int


def variable_counts(N, K, N_B, N_O_total):
    """Problem sizes, plus the per-timestep-separator counterfactual."""
    for name, v in (("N", N), ("K", K), ("N_B", N_B), ("N_O_total", N_O_total)):
        if v < 0:
            raise ValueError(f"{name} must be >= 0, got {v}")
    shared = N_COEF * K
    per_step = N_COEF * K * (N + 1)
    return VariableCounts(
        n_vars=6 * N + shared,
        n_coef_vars=shared,
        n_vars_per_step=6 * N + per_step,
        n_coef_vars_per_step=per_step,
        coef_var_saving=per_step - shared,
        n_dynamics_rows=3 * N,
        n_robot_rows=K * N_B * (N + 1),
        n_obstacle_rows=N_O_total,
    )


@dataclass(frozen=True)
class ConstraintLayout:
    """Row offsets of each constraint block."""

    N: int
    K: int
    N_B: int
    feature_counts: tuple

    @property
    def n_eq(self):
        return 3 * self.N

    @property
    def robot_offset(self):
        return self.n_eq

    @property
    def n_robot(self):
        return self.K * self.N_B * (self.N + 1)

    @property
    def obstacle_offset(self):
        return self.n_eq + self.n_robot

    @property
    def n_obstacle(self):
        return int(sum(self.feature_counts))

    @property
    def n_rows(self):
        return self.obstacle_offset + self.n_obstacle

    def robot_row(self, k, tau, i):
        return self.robot_offset + (k * (self.N + 1) + tau) * self.N_B + i

    def obstacle_rows(self, k):
        start = self.obstacle_offset + int(sum(self.feature_counts[:k]))
        return slice(start, start + self.feature_counts[k])

    def robot_rows(self, k):
        start = self.robot_offset + k * (self.N + 1) * self.N_B
        return slice(start, start + (self.N + 1) * self.N_B)

    def n_vars(self):
        return 6 * self.N + N_COEF * self.K


def layout_of(problem):
    return ConstraintLayout(problem.N, problem.K, problem.n_collision_points,
                            problem.feature_counts())


# ===========================================================================
# Jacobian sparsity structure (cached per layout)
# ===========================================================================

_structures = {}


def _jacobian_structure(layout):
    """(rows, cols) of every structural nonzero, in evaluation order."""
    if layout in _structures:
        return _structures[layout]
    N, K, N_B = layout.N, layout.K, layout.N_B
    rows, cols = [], []

    # dynamics: d_t couples q_{t+1} (identity), q_t (t >= 1), u_t
    t = np.arange(N)
    r0 = 3 * t
    q_next = 3 * t          # q_{t+1} starts at 3t in z
    q_cur = 3 * (t - 1)     # q_t starts at 3(t-1) for t >= 1
    u_col = 3 * N + 3 * t
    for r in range(3):
        rows.append(r0 + r)
        cols.append(q_next + r)
    mask = t >= 1
    for r, c in ((0, 0), (1, 1), (2, 2), (0, 2), (1, 2)):
        rows.append(r0[mask] + r)
        cols.append(q_cur[mask] + c)
    for r, c in ((0, 0), (0, 1), (1, 0), (1, 1), (2, 2)):
        rows.append(r0 + r)
        cols.append(u_col + c)

    # robot side: coef_k for every row, q_t for t >= 1
    if K and N_B:
        kk, tt, ii = np.meshgrid(np.arange(K), np.arange(N + 1), np.arange(N_B), indexing="ij")
        kk, tt, ii = kk.ravel(), tt.ravel(), ii.ravel()
        row = layout.robot_offset + (kk * (N + 1) + tt) * N_B + ii
        coef_col = 6 * N + N_COEF * kk
        for c in range(N_COEF):
            rows.append(row)
            cols.append(coef_col + c)
        mask = tt >= 1
        for c in range(3):
            rows.append(row[mask])
            cols.append(3 * (tt[mask] - 1) + c)

    # obstacle side: coef_k only
    if layout.n_obstacle:
        kk = np.repeat(np.arange(K), layout.feature_counts)
        row = layout.obstacle_offset + np.arange(layout.n_obstacle)
        for c in range(N_COEF):
            rows.append(row)
            cols.append(6 * N + N_COEF * kk + c)

    structure = (np.concatenate(rows).astype(np.int64), np.concatenate(cols).astype(np.int64))
    _structures[layout] = structure
    return structure


# ===========================================================================
# Evaluation
# ===========================================================================

def _full_states(problem, dv):
    return np.vstack([problem.start.as_array(), dv.states])


def _as_dv(problem, z):
    if isinstance(z, DecisionVector):
        return z
    return DecisionVector(z, problem.N, problem.K)


def cost_eval(problem, z):
    """Cost J and its exact gradient w.r.t. z."""
    dv = _as_dv(problem, z)
    w = problem.weights
    N = problem.N
    Q = _full_states(problem, dv)
    U = dv.inputs
    C = dv.coefs
    grad_q = np.zeros((N + 1, 3))

    ref = np.array(problem.reference)
    E = Q - ref
    E[:, 2] = _angle_diff_vec(Q[:, 2], ref[:, 2])
    J = float(np.einsum("ti,ij,tj->", E, w.Q_eq, E))
    grad_q += E @ (w.Q_eq + w.Q_eq.T)

    goal = problem.goal.as_array()
    e_goal = Q[N] - goal
    e_goal[2] = angle_diff(Q[N, 2], goal[2])
    J += float(e_goal @ w.Q_fq @ e_goal)
    grad_q[N] += (w.Q_fq + w.Q_fq.T) @ e_goal

    grad_u = np.zeros_like(U)
    if N >= 2:
        acc = U[1:, :2] - U[:-1, :2]
        alpha = U[1:, 2] - U[:-1, 2]
        J += float(np.einsum("ti,ij,tj->", acc, w.Q_a, acc))
        J += float(w.Q_alpha * alpha @ alpha)
        g_acc = acc @ (w.Q_a + w.Q_a.T)
        grad_u[1:, :2] += g_acc
        grad_u[:-1, :2] -= g_acc
        grad_u[1:, 2] += 2.0 * w.Q_alpha * alpha
        grad_u[:-1, 2] -= 2.0 * w.Q_alpha * alpha

    J += float(np.einsum("ti,ij,tj->", U, w.R, U))
    grad_u += U @ (w.R + w.R.T)

    J += float(np.einsum("ki,ij,kj->", C, w.Q_p, C))
    grad_c = C @ (w.Q_p + w.Q_p.T)

    grad = np.concatenate([grad_q[1:].reshape(-1), grad_u.reshape(-1), grad_c.reshape(-1)])
    return J, grad


def _constraint_values_and_data(problem, dv, with_jacobian=True):
    N, K = problem.N, problem.K
    dt = problem.dt
    m = problem.sep_margin
    Q = _full_states(problem, dv)
    U = dv.inputs
    C = dv.coefs

    # dynamics defects
    psi = Q[:N, 2]
    c, s = np.cos(psi), np.sin(psi)
    vx, vy, om = U[:, 0], U[:, 1], U[:, 2]
    f = np.column_stack([
        Q[:N, 0] + dt * (vx * c - vy * s),
        Q[:N, 1] + dt * (vx * s + vy * c),
        Q[:N, 2] + dt * om,
    ])
    dyn = (Q[1:] - f).reshape(-1)
    parts = [dyn]
    data = []
    if with_jacobian:
        ones = np.ones(N)
        data.extend([ones, ones, ones])
        mask = np.arange(N) >= 1
        d0 = -dt * (-vx * s - vy * c)
        d1 = -dt * (vx * c - vy * s)
        data.extend([-ones[mask], -ones[mask], -ones[mask], d0[mask], d1[mask]])
        data.extend([-dt * c, dt * s, -dt * s, -dt * c, -dt * ones])

    # robot side
    body = problem.footprint.collision_points
    N_B = len(body)
    if K and N_B:
        cq, sq = np.cos(Q[:, 2]), np.sin(Q[:, 2])
        # world points (N+1, N_B, 2)
        wx = cq[:, None] * body[None, :, 0] - sq[:, None] * body[None, :, 1] + Q[:, 0:1]
        wy = sq[:, None] * body[None, :, 0] + cq[:, None] * body[None, :, 1] + Q[:, 1:2]
        W = np.stack([wx, wy], axis=-1).reshape(-1, 2)
        mono = monomials_batch(W)                      # (M, 6)
        vals = mono @ C.T                               # (M, K)
        parts.append((vals.T - m).reshape(-1))          # k-major
        if with_jacobian:
            mono_k = np.broadcast_to(mono[None], (K,) + mono.shape)   # (K, M, 6)
            for col in range(N_COEF):
                data.append(mono_k[:, :, col].reshape(-1))
            grads = poly_grad_batch(C, W)               # (M, K, 2)
            rx = (wx - Q[:, 0:1]).reshape(-1)
            ry = (wy - Q[:, 1:2]).reshape(-1)
            gx = grads[:, :, 0].T                       # (K, M)
            gy = grads[:, :, 1].T
            gpsi = gx * (-ry) + gy * rx
            tmask = np.repeat(np.arange(N + 1) >= 1, N_B)
            data.append(gx[:, tmask].reshape(-1))
            data.append(gy[:, tmask].reshape(-1))
            data.append(gpsi[:, tmask].reshape(-1))

    # obstacle side
    feats = [o.feature_points for o in problem.obstacles if len(o.feature_points)]
    if feats:
        S = np.vstack(feats)
        kk = np.repeat(np.arange(K), problem.feature_counts())
        mono_s = monomials_batch(S)
        parts.append(-(mono_s * C[kk]).sum(axis=1) - m)
        if with_jacobian:
            for col in range(N_COEF):
                data.append(-mono_s[:, col])

    values = np.concatenate(parts)
    jac_data = np.concatenate(data) if with_jacobian else None
    return values, jac_data


def constraint_eval(problem, z):
    """Constraint values, sparse Jacobian (CSR) and the row layout."""
    dv = _as_dv(problem, z)
    layout = layout_of(problem)
    values, data = _constraint_values_and_data(problem, dv)
    rows, cols = _jacobian_structure(layout)
    jac = coo_matrix((data, (rows, cols)), shape=(layout.n_rows, layout.n_vars())).tocsr()
    return values, jac, layout


def variable_bounds(problem):
    """(lower, upper) arrays over z."""
    N, K = problem.N, problem.K
    lo = np.concatenate([
        np.full(3 * N, -np.inf),
        np.tile(problem.u_min.as_array(), N),
        np.full(N_COEF * K, -problem.coef_box),
    ])
    hi = np.concatenate([
        np.full(3 * N, np.inf),
        np.tile(problem.u_max.as_array(), N),
        np.full(N_COEF * K, problem.coef_box),
    ])
    if problem.degree == 1 and K:
        for k in range(K):
            for i in QUADRATIC_TERMS:
                lo[6 * N + N_COEF * k + i] = 0.0
                hi[6 * N + N_COEF * k + i] = 0.0
    return lo, hi


# ===========================================================================
# Evaluation object
# ===========================================================================

class NLPModel:
    """Evaluation surface of one PlanProblem for the NLP solver.

    Constraints are c_E(z) = 0 for the first n_eq rows and c_I(z) >= 0 for
    the rest.
    """

    def __init__(self, problem):
        self.problem = problem
        self.layout = layout_of(problem)
        self.n = self.layout.n_vars()
        self.m = self.layout.n_rows
        self.n_eq = self.layout.n_eq
        self.lower, self.upper = variable_bounds(problem)
        self._rows, self._cols = _jacobian_structure(self.layout)

    def obj(self, z):
        return cost_eval(self.problem, z)[0]

    def grad(self, z):
        return cost_eval(self.problem, z)[1]

    def cons(self, z):
        return _constraint_values_and_data(self.problem, _as_dv(self.problem, z), False)[0]

    def jac(self, z):
        return constraint_eval(self.problem, z)[1]

    def evaluate(self, z):
        """Everything the solver needs at z: (f, grad f, c, jacobian data)."""
        dv = _as_dv(self.problem, z)
        f, g = cost_eval(self.problem, dv)
        c, data = _constraint_values_and_data(self.problem, dv)
        return f, g, c, data

    def jac_t_prod(self, jac_data, v):
        """J' v from raw Jacobian data, without assembling a matrix."""
        return np.bincount(self._cols, weights=jac_data * v[self._rows], minlength=self.n)

    def violation(self, c):
        """Max constraint violation (equalities absolute, inequalities negative part)."""
        eq = np.abs(c[:self.n_eq])
        ineq = np.maximum(0.0, -c[self.n_eq:])
        worst = 0.0
        if eq.size:
            worst = max(worst, float(eq.max()))
        if ineq.size:
            worst = max(worst, float(ineq.max()))
        return worst

    def project(self, z):
        return np.clip(z, self.lower, self.upper)

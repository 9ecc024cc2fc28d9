"""
Augmented Lagrangian method for the trajectory NLP.

    min f(z)  s.t.  c_E(z) = 0,  c_I(z) >= 0,  lower <= z <= upper

Outer loop (multipliers nu for equalities, lam >= 0 for inequalities, one
penalty mu):

    Phi(z) = s_f f(z) + sum_E ( -nu c + mu/2 c^2 ) + sum_I psi(c, lam, mu)

    psi(c, lam, mu) = -lam c + mu/2 c^2     if lam - mu c > 0
                      -lam^2 / (2 mu)       otherwise

Each outer iteration minimizes Phi over the box with L-BFGS-B (scipy), then

    nu  <- nu - mu c_E
    lam <- max(0, lam - mu c_I)

and grows mu when the violation did not shrink enough. s_f scales the
objective so its initial gradient is at most 100 in max-norm.

The budget is counted in inner (L-BFGS-B) iterations across all outer
iterations. The best iterate seen is always returned; this function never
raises on numeric trouble.
"""

import json
import logging
import math
import time
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import minimize

log = logging.getLogger(__name__)


class SolveCode(Enum):
    CONVERGED = "CONVERGED"
    MAX_ITER = "MAX_ITER"
    TIMEOUT = "TIMEOUT"
    INFEASIBLE_POINT = "INFEASIBLE_POINT"
    NUMERIC_FAILURE = "NUMERIC_FAILURE"


STRATEGIES = ("augmented-lagrangian",)


@dataclass(frozen=True)
class SolverConfig:
    """NLP solver settings. max_wall_time is in seconds (inf disables it)."""

    max_iterations: int = 400
    constraint_tolerance: float = 1e-6
    optimality_tolerance: float = 1e-4
    max_wall_time: float = 0.08
    strategy: str = "augmented-lagrangian"
    penalty_init: float = 50.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e8
    max_outer_iterations: int = 40
    inner_memory: int = 10
    log_path: str = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.constraint_tolerance > 0:
            raise ValueError(f"constraint_tolerance must be > 0, got {self.constraint_tolerance}")
        if not self.optimality_tolerance > 0:
            raise ValueError(f"optimality_tolerance must be > 0, got {self.optimality_tolerance}")
        if not self.max_wall_time > 0:
            raise ValueError(f"max_wall_time must be > 0, got {self.max_wall_time}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unsupported strategy {self.strategy!r}, available: {STRATEGIES}")
        if not (self.penalty_init > 0 and self.penalty_growth > 1 and self.penalty_max >= self.penalty_init):
            raise ValueError("penalty schedule needs init > 0, growth > 1, max >= init")


@dataclass(frozen=True)
class Duals:
    """Multipliers and penalty, reusable by the next solve of the same layout.

    The multipliers belong to the objective scaled by `scale`; a solve that
    accepts them keeps that scale.
    """

    nu: np.ndarray
    lam: np.ndarray
    mu: float
    scale: float = None

    def matches(self, n_eq, n_ineq):
        return len(self.nu) == n_eq and len(self.lam) == n_ineq


@dataclass(frozen=True)
class AugLagResult:
    z: np.ndarray
    code: SolveCode
    iterations: int
    outer_iterations: int
    cost: float
    max_violation: float
    merit: float
    kkt_residual: float
    duals: Duals
    records: tuple
    wall_time: float
    objective_scale: float


class _WallTimeExceeded(Exception):
    pass


class _NonFinite(Exception):
    pass


# ---------------------------------------------------------------------------
# Merit function with a small evaluation cache
# ---------------------------------------------------------------------------

class _Merit:
    """Phi(z) and its gradient for fixed (nu, lam, mu)."""

    def __init__(self, model, scale, deadline):
        self.model = model
        self.scale = scale
        self.deadline = deadline
        self.nu = None
        self.lam = None
        self.mu = None
        self._cache = {}

    def set_duals(self, nu, lam, mu):
        self.nu, self.lam, self.mu = nu, lam, mu

    def evaluate(self, z):
        """(f, grad f, c, jac data) at z, cached on the exact bytes of z."""
        key = z.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if time.perf_counter() > self.deadline:
            raise _WallTimeExceeded()
        f, g, c, jd = self.model.evaluate(z)
        if not (math.isfinite(f) and np.all(np.isfinite(g)) and np.all(np.isfinite(c))
                and np.all(np.isfinite(jd))):
            raise _NonFinite()
        if len(self._cache) >= 4:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = (f, g, c, jd)
        return f, g, c, jd

    def weights(self, c):
        """Constraint weights w with grad Phi = s_f grad f + J' w."""
        n_eq = self.model.n_eq
        ce, ci = c[:n_eq], c[n_eq:]
        w_eq = -self.nu + self.mu * ce
        t = self.lam - self.mu * ci
        w_in = np.where(t > 0.0, -t, 0.0)
        return np.concatenate([w_eq, w_in])

    def value(self, f, c):
        n_eq = self.model.n_eq
        ce, ci = c[:n_eq], c[n_eq:]
        phi = self.scale * f
        phi += float(-self.nu @ ce + 0.5 * self.mu * ce @ ce)
        t = self.lam - self.mu * ci
        active = t > 0.0
        phi += float(np.sum(-self.lam[active] * ci[active] + 0.5 * self.mu * ci[active] ** 2))
        phi -= float(np.sum(self.lam[~active] ** 2)) / (2.0 * self.mu)
        return phi

    def __call__(self, z):
        f, g, c, jd = self.evaluate(z)
        phi = self.value(f, c)
        grad = self.scale * g + self.model.jac_t_prod(jd, self.weights(c))
        return phi, grad


class _Best:
    """Best iterate: lowest cost among points within tolerance, else lowest violation."""

    def __init__(self, tol):
        self.tol = tol
        self.z = None
        self.cost = math.inf
        self.violation = math.inf

    def offer(self, z, cost, violation):
        ok_new = violation <= self.tol
        ok_old = self.violation <= self.tol
        if self.z is None:
            better = True
        elif ok_new and ok_old:
            better = cost < self.cost
        elif ok_new != ok_old:
            better = ok_new
        else:
            better = violation < self.violation
        if better:
            self.z = z.copy()
            self.cost = cost
            self.violation = violation


def _record(outer, it, cost, violation, step, merit, event):
    return {
        "outer": outer, "iter": it, "cost": float(cost),
        "max_violation": float(violation), "step_norm": float(step),
        "merit": float(merit), "event": event,
    }


def _kkt_residual(model, z, grad_phi, scaled_grad):
    pg = z - np.clip(z - grad_phi, model.lower, model.upper)
    return float(np.abs(pg).max(initial=0.0)) / max(1.0, float(np.abs(scaled_grad).max(initial=0.0)))


# ===========================================================================
# Solver
# ===========================================================================

def minimize_auglag(model, z0, config=None, duals=None):
    """Run the augmented Lagrangian method on an NLPModel.

    Args:
        model: object with evaluate / jac_t_prod / violation / lower / upper /
            n_eq / m (see nlp_core.NLPModel).
        z0: initial point (projected onto the bounds first).
        config: SolverConfig.
        duals: optional Duals from a previous solve with the same layout.

    Returns:
        AugLagResult.
    """
    config = config or SolverConfig()
    t_start = time.perf_counter()
    deadline = t_start + config.max_wall_time
    ctol = config.constraint_tolerance
    otol = config.optimality_tolerance
    n_eq = model.n_eq
    n_in = model.m - n_eq

    z = model.project(np.asarray(z0, dtype=float).copy())
    merit = _Merit(model, 1.0, math.inf)
    records = []
    best = _Best(ctol)

    def finish(code, z_out, iterations, outer, kkt, duals_out):
        merit.deadline = math.inf
        try:
            f, _, c, _ = merit.evaluate(z_out)
            cost, viol = f, model.violation(c)
            phi = merit.value(f, c) if merit.mu is not None else float("nan")
        except (_NonFinite, _WallTimeExceeded):
            cost, viol, phi = math.nan, math.inf, math.nan
        result = AugLagResult(
            z=z_out, code=code, iterations=iterations, outer_iterations=outer,
            cost=cost, max_violation=viol, merit=phi, kkt_residual=kkt,
            duals=duals_out, records=tuple(records),
            wall_time=time.perf_counter() - t_start, objective_scale=merit.scale,
        )
        if config.log_path:
            with open(config.log_path, "a", encoding="utf-8") as fh:
                for rec in records:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
        log.debug("[Solver] %s after %d iterations (%d outer): cost %.6g, violation %.3e",
                  code.value, iterations, outer, cost, viol)
        return result

    empty = Duals(np.zeros(n_eq), np.zeros(n_in), config.penalty_init)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            f, g, c, _ = merit.evaluate(z)
    except _NonFinite:
        return finish(SolveCode.NUMERIC_FAILURE, z, 0, 0, math.inf, empty)

    gmax = float(np.abs(g).max(initial=0.0))
    merit.scale = min(1.0, 100.0 / gmax) if gmax > 0 else 1.0
    merit.deadline = deadline

    if duals is not None and duals.matches(n_eq, n_in):
        nu, lam, mu = duals.nu.copy(), duals.lam.copy(), float(duals.mu)
        if duals.scale is not None:
            merit.scale = duals.scale
    else:
        nu, lam, mu = empty.nu.copy(), empty.lam.copy(), empty.mu
    merit.set_duals(nu, lam, mu)

    viol = model.violation(c)
    best.offer(z, f, viol)
    prev_viol = viol
    total_iter = 0
    outer = 0
    omega = 1e-1
    stalled = 0
    kkt = math.inf
    state = {"prev": z}

    def callback(xk):
        nonlocal total_iter
        total_iter += 1
        fk, _, ck, _ = merit.evaluate(xk)
        vk = model.violation(ck)
        step = float(np.abs(xk - state["prev"]).max(initial=0.0))
        records.append(_record(outer, total_iter, fk, vk, step, merit.value(fk, ck), "iterate"))
        best.offer(xk, fk, vk)
        state["prev"] = xk.copy()

    code = None
    with np.errstate(over="ignore", invalid="ignore"):
        while code is None:
            event = "start" if outer == 0 else "multiplier_update"
            records.append(_record(outer, total_iter, f, viol, 0.0, merit.value(f, c), event))
            remaining = config.max_iterations - total_iter
            if remaining <= 0:
                code = SolveCode.MAX_ITER
                break
            state["prev"] = z.copy()
            try:
                res = minimize(
                    merit, z, jac=True, method="L-BFGS-B",
                    bounds=list(zip(model.lower, model.upper)),
                    callback=callback,
                    options={
                        "maxiter": remaining,
                        "maxfun": 20 * remaining + 50,
                        "maxcor": config.inner_memory,
                        "gtol": max(0.1 * otol, omega),
                        "ftol": 1e-12,
                    },
                )
                z = model.project(np.asarray(res.x, dtype=float))
            except _WallTimeExceeded:
                code = SolveCode.TIMEOUT
                break
            except (_NonFinite, FloatingPointError, np.linalg.LinAlgError):
                code = SolveCode.NUMERIC_FAILURE
                break

            try:
                f, g, c, jd = merit.evaluate(z)
            except _WallTimeExceeded:
                code = SolveCode.TIMEOUT
                break
            except _NonFinite:
                code = SolveCode.NUMERIC_FAILURE
                break
            viol = model.violation(c)
            best.offer(z, f, viol)
            grad_phi = merit.scale * g + model.jac_t_prod(jd, merit.weights(c))
            kkt = _kkt_residual(model, z, grad_phi, merit.scale * g)

            # first-order multiplier update
            nu = nu - mu * c[:n_eq]
            lam = np.maximum(0.0, lam - mu * c[n_eq:])
            outer += 1

            if viol <= ctol and kkt <= otol:
                code = SolveCode.CONVERGED
                merit.set_duals(nu, lam, mu)
                break

            if viol > ctol and viol > 0.25 * prev_viol:
                if mu >= config.penalty_max:
                    stalled += 1
                mu = min(mu * config.penalty_growth, config.penalty_max)
            else:
                stalled = 0
            if stalled >= 2:
                code = SolveCode.INFEASIBLE_POINT
                merit.set_duals(nu, lam, mu)
                break
            prev_viol = viol
            omega = max(0.1 * otol, 0.1 * omega)
            merit.set_duals(nu, lam, mu)

            if total_iter >= config.max_iterations or outer >= config.max_outer_iterations:
                code = SolveCode.MAX_ITER
                break

    out_duals = Duals(nu, lam, mu, merit.scale)
    if code is SolveCode.CONVERGED:
        return finish(code, z, total_iter, outer, kkt, out_duals)
    return finish(code, best.z, total_iter, outer, kkt, out_duals)

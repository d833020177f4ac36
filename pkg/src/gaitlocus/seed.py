"""Direct optimizers: the maximum-efficiency seed gait and single constrained solves.

``solve_constrained`` is deliberately built on different machinery from the
locus tracer (augmented Lagrangian outer loop, quasi-Newton inner solves) so
that it can serve as an independent check of traced costs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .errors import GaitLocusError, InfeasibleConstraintError, InvalidSeedError
from .system import SystemModel

log = logging.getLogger(__name__)


@dataclass
class OptimizerReport:
    p: np.ndarray
    iterations: int
    grad_norm: float
    converged: bool
    g: float
    s: float
    lam: Optional[float] = None
    message: str = ""

    @property
    def efficiency(self) -> float:
        return self.g / self.s


@dataclass
class SeedOptions:
    tol: float = 1e-7
    max_iter: int = 5000
    initial_step: float = 1.0
    min_step: float = 1e-14
    armijo: float = 1e-4
    newton_switch: float = 1e-2  # |field| below which Newton refinement takes over; 0 disables


def complement_basis(n: int, directions) -> np.ndarray:
    """Orthonormal basis (columns) of the complement of the given row directions."""
    directions = np.atleast_2d(directions)
    if directions.size == 0:
        return np.eye(n)
    norms = np.linalg.norm(directions, axis=1)
    directions = directions[norms > 1e-12]
    if directions.size == 0:
        return np.eye(n)
    u, _, _ = np.linalg.svd(directions.T, full_matrices=True)
    return u[:, directions.shape[0]:]


def _efficiency_newton(d, trivial):
    """Newton ascent direction of g/s from first and second derivatives, or None."""
    g, s = d.g, d.s
    grad = d.grad_g / s - g * d.grad_s / s**2
    outer = np.outer(d.grad_g, d.grad_s)
    hess = (d.hess_g / s - (outer + outer.T) / s**2 - g * d.hess_s / s**2
            + 2.0 * g * np.outer(d.grad_s, d.grad_s) / s**3)
    Z = complement_basis(grad.size, trivial)
    w, v = np.linalg.eigh(Z.T @ (0.5 * (hess + hess.T)) @ Z)
    if np.any(w >= 0):
        return None  # not in a concave region yet
    step = -(Z @ (v @ ((v.T @ (Z.T @ grad)) / w)))
    return step if step @ grad > 0 else None


def find_max_efficiency_gait(model: SystemModel, p_init, options: Optional[SeedOptions] = None) -> OptimizerReport:
    """Ascend the efficiency g/s along ``grad g - (g/s) grad s``.

    The step doubles after every accepted move and halves on rejection.  Once
    the field is small and the efficiency Hessian is negative definite (modulo
    trivial directions), Newton steps finish the job.  At convergence the
    first-order condition of the unconstrained problem holds.
    """
    opts = options or SeedOptions()
    p = np.array(p_init, dtype=float)
    d = model.derivatives(p, hessians=False)
    if not d.g > 0:
        raise InvalidSeedError("initial gait must produce positive displacement", {"g": d.g})
    alpha = opts.initial_step
    it = 0
    field_ = d.grad_g - (d.g / d.s) * d.grad_s
    norm = float(np.linalg.norm(field_))
    while norm > opts.tol and it < opts.max_iter:
        eff = d.g / d.s
        newton = None
        if norm < opts.newton_switch:
            d = model.derivatives(p, hessians=True)
            newton = _efficiency_newton(d, model.trivial_directions(p))
        accepted = False
        if newton is not None:
            beta = 1.0
            while beta >= 1e-4 and not accepted:
                trial = p + beta * newton
                try:
                    dt = model.derivatives(trial, hessians=False)
                except GaitLocusError:
                    beta *= 0.5
                    continue
                ft = dt.grad_g - (dt.g / dt.s) * dt.grad_s
                if dt.g / dt.s >= eff - 1e-14 * abs(eff) and np.linalg.norm(ft) < norm:
                    accepted = True
                else:
                    beta *= 0.5
            if accepted:
                p, d, field_ = trial, dt, ft
                norm = float(np.linalg.norm(field_))
                it += 1
                continue
        while alpha >= opts.min_step:
            trial = p + alpha * field_
            try:
                g_t, s_t = model.evaluate(trial)
            except GaitLocusError:
                alpha *= 0.5
                continue
            # g/s gradient is field / s, so the Armijo bound uses |field|^2 / s
            if s_t > 0 and g_t / s_t >= eff + opts.armijo * alpha * norm**2 / d.s:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        p = trial
        alpha *= 2.0
        it += 1
        d = model.derivatives(p, hessians=False)
        field_ = d.grad_g - (d.g / d.s) * d.grad_s
        norm = float(np.linalg.norm(field_))
    lam = float(d.grad_g @ d.grad_s / (d.grad_g @ d.grad_g))
    converged = norm <= opts.tol
    msg = "converged" if converged else ("step underflow" if it < opts.max_iter else "max iterations")
    log.info("max-efficiency search: %s after %d iterations, |field|=%.3g", msg, it, norm)
    return OptimizerReport(p=p, iterations=it, grad_norm=norm, converged=converged,
                           g=d.g, s=d.s, lam=lam, message=msg)


@dataclass
class ConstrainedOptions:
    tol: float = 1e-6  # on |grad s - lambda grad g|, relative to 1 + |s|
    tol_g: float = 1e-8  # on |g - g_c|, relative to 1 + |g_c|
    rho: float = 10.0
    max_outer: int = 50
    max_inner: int = 400
    rho_growth: float = 4.0
    lam_init: Optional[float] = None
    extra: dict = field(default_factory=dict)


def solve_constrained(model: SystemModel, g_c: float, p_init, options: Optional[ConstrainedOptions] = None) -> OptimizerReport:
    """Minimize s(p) subject to g(p) = g_c by an augmented Lagrangian method.

    Each outer iteration minimizes ``s - lam (g - g_c) + rho/2 (g - g_c)^2``
    with BFGS on finite-difference gradients, then updates
    ``lam <- lam - rho (g - g_c)``.  The penalty grows when the constraint
    violation does not shrink fast enough.
    """
    opts = options or ConstrainedOptions()
    p = np.array(p_init, dtype=float)
    d = model.derivatives(p, hessians=False)
    lam = opts.lam_init
    if lam is None:
        lam = float(d.grad_g @ d.grad_s / max(d.grad_g @ d.grad_g, 1e-300))
    rho = opts.rho
    total = 0
    prev_violation = abs(d.g - g_c)
    scale_s = 1.0 + abs(d.s)

    def merit(q):
        try:
            dq = model.derivatives(q, hessians=False)
        except GaitLocusError:
            return np.inf, np.zeros_like(q)
        c = dq.g - g_c
        val = dq.s - lam * c + 0.5 * rho * c * c
        grad = dq.grad_s - (lam - rho * c) * dq.grad_g
        return val / scale_s, grad / scale_s

    stat = np.inf
    for outer in range(opts.max_outer):
        res = minimize(merit, p, jac=True, method="BFGS",
                       options={"maxiter": opts.max_inner, "gtol": 0.1 * opts.tol})
        p = res.x
        total += int(res.nit)
        d = model.derivatives(p, hessians=False)
        c = d.g - g_c
        lam = lam - rho * c
        lam_star = float(d.grad_g @ d.grad_s / max(d.grad_g @ d.grad_g, 1e-300))
        stat = float(np.linalg.norm(d.grad_s - lam_star * d.grad_g))
        if stat <= opts.tol * (1 + abs(d.s)) and abs(c) <= opts.tol_g * (1 + abs(g_c)):
            return OptimizerReport(p=p, iterations=total, grad_norm=stat, converged=True,
                                   g=d.g, s=d.s, lam=lam_star, message="converged")
        if abs(c) > 0.25 * prev_violation:
            rho *= opts.rho_growth
        prev_violation = abs(c)
    if abs(d.g - g_c) > 1e-3 * (1 + abs(g_c)):
        raise InfeasibleConstraintError(
            f"displacement {g_c} not reached: closest g={d.g:.6g} after {opts.max_outer} outer iterations")
    return OptimizerReport(p=p, iterations=total, grad_norm=stat, converged=False,
                           g=d.g, s=d.s, lam=lam, message="max outer iterations")

"""Optimal locus generator: continuation of step-optimal gaits across displacement levels.

Along the locus of constrained minimizers the residual
``F(p) = grad s - lam*(p) grad g`` vanishes, with ``lam*`` the least-squares
multiplier.  ``F`` is orthogonal to ``grad g`` everywhere, so its Jacobian,
the Lagrangian Hessian ``H = hess s - lam* hess g - grad g grad lam*^T``,
is rank deficient on the locus and its right null space contains the locus
tangent.  The tracer flows along the projection of ``-grad g`` onto that null
space with fixed-step RK4 and re-polishes stationarity after every step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import calculus
from .errors import (
    DegenerateConstraintError,
    GaitLocusError,
    InvalidSeedError,
    JointLimitError,
    NotStationaryError,
    SingularNullSpaceError,
    StalledProjectionError,
)
from .seed import complement_basis
from .system import Derivatives, SystemModel

log = logging.getLogger(__name__)

MINIMIZER = "minimizer"
MAXIMIZER = "maximizer"
SADDLE = "saddle"
INDETERMINATE = "indeterminate"

STOP_MIN_DISPLACEMENT = "min_displacement_reached"
STOP_LOST_MINIMIZER = "lost_minimizer"
STOP_SINGULAR = "singular_null_space"
STOP_JOINT_LIMIT = "joint_limit"
STOP_MAX_STEPS = "max_steps"

DEGENERATE_GRAD = 1e-12


@dataclass
class LocusOptions:
    rk_step: float = 1e-2  # arclength in parameter space per RK4 step
    min_displacement: Optional[float] = None
    max_steps: int = 2000
    null_tol: float = calculus.DEFAULT_NULL_TOL
    stationarity_tol: float = 1e-6  # scaled by 1 + |s|
    eigen_tol: float = 1e-7  # relative to the largest restricted eigenvalue
    corrector: bool = True
    corrector_iters: int = 10
    polish_iters: int = 200
    decreasing: bool = True
    levels: Sequence[float] = ()  # displacement levels to land on exactly
    branch_switch: bool = True  # follow the minimizing branch past symmetry-breaking bifurcations


@dataclass
class ContinuationState:
    p: np.ndarray
    lam: float
    g: float
    s: float
    grad_L_norm: float
    classification: str
    step: int = 0

    @property
    def efficiency(self) -> float:
        return self.g / self.s


@dataclass
class LocusTrace:
    states: List[ContinuationState] = field(default_factory=list)
    stop_reason: str = STOP_MAX_STEPS
    message: str = ""
    branch_switches: List[int] = field(default_factory=list)  # steps at which a new branch was taken

    @property
    def displacements(self) -> np.ndarray:
        return np.array([st.g for st in self.states])

    @property
    def costs(self) -> np.ndarray:
        return np.array([st.s for st in self.states])

    @property
    def efficiencies(self) -> np.ndarray:
        return np.array([st.efficiency for st in self.states])

    def at_displacement(self, g: float, rtol: float = 1e-9) -> Optional[ContinuationState]:
        for st in self.states:
            if abs(st.g - g) <= rtol * max(1.0, abs(g)):
                return st
        return None


def optimal_lambda(grad_s, grad_g) -> float:
    """Least-squares multiplier ``(grad_g . grad_s) / |grad_g|^2``."""
    grad_s = np.asarray(grad_s, dtype=float)
    grad_g = np.asarray(grad_g, dtype=float)
    gg = float(grad_g @ grad_g)
    if np.sqrt(gg) <= DEGENERATE_GRAD:
        raise DegenerateConstraintError("constraint gradient vanishes")
    return float(grad_g @ grad_s) / gg


def _derivs(model, p, derivs):
    return derivs if derivs is not None else model.derivatives(p)


def _lambda_gradient(d: Derivatives) -> np.ndarray:
    gs, gg = d.grad_s, d.grad_g
    n2 = float(gg @ gg)
    if np.sqrt(n2) <= DEGENERATE_GRAD:
        raise DegenerateConstraintError("constraint gradient vanishes")
    return (d.hess_g @ gs + d.hess_s @ gg) / n2 - 2.0 / n2**2 * (d.hess_g @ gg) * float(gg @ gs)


def lambda_gradient(model: SystemModel, p, derivs: Optional[Derivatives] = None) -> np.ndarray:
    """Gradient of the least-squares multiplier with respect to the parameters."""
    return _lambda_gradient(_derivs(model, p, derivs))


def _lagrangian_hessian(d: Derivatives):
    lam = optimal_lambda(d.grad_s, d.grad_g)
    H = d.hess_s - lam * d.hess_g - np.outer(d.grad_g, _lambda_gradient(d))
    return H, lam


def lagrangian_hessian(model: SystemModel, p, derivs: Optional[Derivatives] = None) -> np.ndarray:
    """Jacobian of ``grad s - lam*(p) grad g``; not symmetric in general."""
    return _lagrangian_hessian(_derivs(model, p, derivs))[0]


def _residual(d: Derivatives, lam: float) -> np.ndarray:
    return d.grad_s - lam * d.grad_g


def null_tolerance(model: SystemModel, d: Derivatives, H: np.ndarray, base_tol: float) -> float:
    """Relative null-space tolerance: the configured floor, finite-difference noise, and off-locus drift.

    Off the locus the rank deficiency of ``H`` is only approximate; its
    smallest singular values grow like ``|F| |hess g| / |grad g|`` and, for
    trivial directions ``t``, like ``|H t|``.
    """
    smax = np.linalg.norm(H, 2)
    if smax == 0.0:
        return base_tol
    lam = optimal_lambda(d.grad_s, d.grad_g)
    hh = model.hess_step if model.hess_step is not None else calculus.default_hessian_step(d.p)
    eps = np.finfo(float).eps
    noise = hh**2 * (np.linalg.norm(d.hess_s, 2) + abs(lam) * np.linalg.norm(d.hess_g, 2)) \
        + 16.0 * eps * (abs(d.s) + abs(lam * d.g)) / hh**2
    F = np.linalg.norm(_residual(d, lam))
    drift = F * np.linalg.norm(d.hess_g, 2) / np.linalg.norm(d.grad_g)
    for t in model.trivial_directions(d.p):
        nt = np.linalg.norm(t)
        if nt > 1e-12:
            drift = max(drift, np.linalg.norm(H @ t) / nt)
    return max(base_tol, 10.0 * (noise + drift) / smax)


def _step_direction(model, d, null_tol):
    H, _ = _lagrangian_hessian(d)
    tol = null_tolerance(model, d, H, null_tol)
    basis = calculus.null_space(H, tol)
    if basis.dim == 0:
        raise SingularNullSpaceError(f"no null direction at tolerance {tol:.3g}")
    v = basis.project(-d.grad_g)
    if np.linalg.norm(v) < 1e-10:
        raise StalledProjectionError("projection of -grad g onto the null space vanished")
    return v


def locus_step(model: SystemModel, p, null_tol: float = calculus.DEFAULT_NULL_TOL,
               derivs: Optional[Derivatives] = None) -> np.ndarray:
    """Projection of ``-grad g`` onto the null space of the Lagrangian Hessian."""
    return _step_direction(model, _derivs(model, p, derivs), null_tol)


def _restricted_hessian(model, d, lam):
    W = d.hess_s - lam * d.hess_g
    W = 0.5 * (W + W.T)
    dirs = np.vstack([d.grad_g[None, :], model.trivial_directions(d.p)])
    Z = complement_basis(d.p.size, dirs)
    return W, Z


def _restricted_eigenvalues(model, d, lam):
    W, Z = _restricted_hessian(model, d, lam)
    return np.linalg.eigvalsh(Z.T @ W @ Z), np.linalg.eigvalsh(W)


def critical_direction(model: SystemModel, d: Derivatives) -> np.ndarray:
    """Unit tangent direction of the smallest restricted Lagrangian eigenvalue.

    The sign is fixed so that the largest-magnitude component is positive.
    """
    lam = optimal_lambda(d.grad_s, d.grad_g)
    W, Z = _restricted_hessian(model, d, lam)
    _, v = np.linalg.eigh(Z.T @ W @ Z)
    e = Z @ v[:, 0]
    e /= np.linalg.norm(e)
    return e if e[np.argmax(np.abs(e))] > 0 else -e


def _to_level(model, p, g_target, iters=8):
    """Move ``p`` along the displacement gradient until ``g = g_target``."""
    for _ in range(iters):
        d = model.derivatives(p, hessians=False)
        c = d.g - g_target
        if abs(c) <= 1e-12 * (1.0 + abs(g_target)):
            break
        p = p - c * d.grad_g / float(d.grad_g @ d.grad_g)
    return p, d


def switch_branch(model: SystemModel, d: Derivatives, g_target: float,
                  options: Optional[LocusOptions] = None):
    """Leave a non-minimizing stationary point for a nearby constrained minimizer.

    Both senses of the critical direction are explored: the level-corrected
    cost is scanned over geometrically growing offsets, the best offset is
    polished with the Newton corrector and the cheapest result that
    classifies as a minimizer is returned as ``(p, derivs)``, or ``None``.
    """
    opts = options or LocusOptions()
    e = critical_direction(model, d)
    scale = max(1.0, float(np.linalg.norm(d.p)))
    best = None
    for sense in (1.0, -1.0):
        s_prev, p_best = d.s, None
        t = 1e-3 * scale
        try:
            while t <= scale:
                q, dq = _to_level(model, d.p + sense * t * e, g_target)
                if dq.s >= s_prev:
                    break
                s_prev, p_best = dq.s, q
                t *= 2.0
            if p_best is None:
                continue
            q, dq, ok = polish(model, p_best, g_target, opts, max_iter=opts.polish_iters)
        except GaitLocusError:
            continue
        if not ok:
            continue
        st = _state(model, dq, opts, 0)
        if st.classification == MINIMIZER and (best is None or dq.s < best[1].s):
            best = (q, dq)
    return best


def classify_stationary(model: SystemModel, p, lam: Optional[float] = None,
                        derivs: Optional[Derivatives] = None, stationarity_tol: float = 1e-6,
                        eigen_tol: float = 1e-7) -> str:
    """Second-derivative test at a constrained stationary point.

    The symmetric Lagrangian Hessian ``hess s - lam hess g`` is restricted to
    the constraint tangent space ``{v : grad g . v = 0}`` with trivial
    (curve-preserving) directions removed.  Positive definite means a
    constrained minimizer and mixed signs a saddle.  A negative definite
    restriction is reported as a maximizer only when the unrestricted
    Hessian is negative definite too, otherwise as a saddle.  Eigenvalues
    within ``eigen_tol`` (relative) of zero give ``indeterminate``.
    """
    d = _derivs(model, p, derivs)
    if lam is None:
        lam = optimal_lambda(d.grad_s, d.grad_g)
    elif np.linalg.norm(d.grad_g) <= DEGENERATE_GRAD:
        raise DegenerateConstraintError("constraint gradient vanishes")
    res = float(np.linalg.norm(_residual(d, lam)))
    if res > stationarity_tol * (1.0 + abs(d.s)):
        raise NotStationaryError(f"|grad L| = {res:.3g} exceeds the stationarity tolerance", res)
    w, w_full = _restricted_eigenvalues(model, d, lam)
    if w.size == 0:
        return INDETERMINATE
    scale = max(np.max(np.abs(w)), np.finfo(float).tiny)
    if np.min(np.abs(w)) <= eigen_tol * scale:
        return INDETERMINATE
    if np.all(w > 0):
        return MINIMIZER
    if np.all(w < 0):
        return MAXIMIZER if np.all(w_full < 0) else SADDLE
    return SADDLE


def polish(model: SystemModel, p, g_target: float, options: Optional[LocusOptions] = None,
           max_iter: Optional[int] = None, derivs: Optional[Derivatives] = None):
    """Damped Newton iterations on the KKT system at the level ``g = g_target``.

    Returns ``(p, derivs, converged)``.  The Newton system is solved in the
    minimum-norm least-squares sense so that trivial directions stay put.
    Trial points are judged on gradients only; Hessians are evaluated once
    per accepted iterate.  A step is accepted when it lowers the merit
    ``|F| + |g - g_target| |grad s|``, or when it halves the level error
    while ``|F|`` stays at its noise floor.
    """
    opts = options or LocusOptions()
    iters = opts.corrector_iters if max_iter is None else max_iter
    p = np.asarray(p, dtype=float)
    d = _derivs(model, p, derivs)

    def residual(dd):
        lam = optimal_lambda(dd.grad_s, dd.grad_g)
        return np.linalg.norm(_residual(dd, lam)), abs(dd.g - g_target), lam

    def converged(F, c, s):
        return F <= opts.stationarity_tol * (1.0 + abs(s)) and c <= 1e-9 * (1.0 + abs(g_target))

    n = p.size
    F, c, lam = residual(d)
    g_tol = 1e-12 * (1.0 + abs(g_target))
    for _ in range(iters):
        floor = 0.1 * opts.stationarity_tol * (1.0 + abs(d.s))
        if F <= floor and c <= g_tol:
            break
        if d.hess_s is None:
            d = model.derivatives(p)
        W = d.hess_s - lam * d.hess_g
        K = np.zeros((n + 1, n + 1))
        K[:n, :n] = 0.5 * (W + W.T)
        K[:n, n] = -d.grad_g
        K[n, :n] = d.grad_g
        rhs = -np.concatenate([_residual(d, lam), [d.g - g_target]])
        dp = np.linalg.lstsq(K, rhs, rcond=1e-12)[0][:n]
        merit = F + c * np.linalg.norm(d.grad_s)
        beta = 1.0
        accepted = False
        while beta >= 1.0 / 64:
            try:
                dt = model.derivatives(p + beta * dp, hessians=False)
                Ft, ct, lt = residual(dt)
            except GaitLocusError:
                beta *= 0.5
                continue
            if Ft + ct * np.linalg.norm(dt.grad_s) < merit or (ct <= 0.5 * c and Ft <= max(F, floor)):
                accepted = True
                break
            beta *= 0.5
        if not accepted:
            log.debug("polish: no acceptable step, |F|=%.3g |c|=%.3g", F, c)
            break
        p, d, F, c, lam = p + beta * dp, dt, Ft, ct, lt
        log.debug("polish: beta=%g |F|=%.3g |c|=%.3g", beta, F, c)
    # Newton steps are noise dominated once |F| is at its floor; restore the level along grad g alone
    for _ in range(3):
        if c <= g_tol:
            break
        try:
            q = p - (d.g - g_target) * d.grad_g / float(d.grad_g @ d.grad_g)
            dt = model.derivatives(q, hessians=False)
        except GaitLocusError:
            break
        Ft, ct, lt = residual(dt)
        if ct >= c:
            break
        p, d, F, c, lam = q, dt, Ft, ct, lt
    if d.hess_s is None:
        d = model.derivatives(p)
    return p, d, bool(converged(F, c, d.s))


def _state(model, d, opts, step):
    lam = optimal_lambda(d.grad_s, d.grad_g)
    res = float(np.linalg.norm(_residual(d, lam)))
    try:
        cls = classify_stationary(model, d.p, lam, d, opts.stationarity_tol, opts.eigen_tol)
    except NotStationaryError:
        cls = INDETERMINATE
    return ContinuationState(p=d.p.copy(), lam=lam, g=d.g, s=d.s, grad_L_norm=res,
                             classification=cls, step=step)


def _stop_for(exc):
    if isinstance(exc, JointLimitError):
        return STOP_JOINT_LIMIT
    return STOP_SINGULAR


def trace_locus(model: SystemModel, seed, options: Optional[LocusOptions] = None) -> LocusTrace:
    """Trace step-optimal gaits from a seed until a stop condition fires.

    The seed is first polished to stationarity at its own displacement level
    and must classify as a constrained minimizer.  Each step is an RK4
    predictor along the unit-speed projected null direction, followed by a
    Newton corrector at the predicted displacement level.  When a step
    crosses one of ``options.levels`` the step is shortened so that a state
    lands on that level.
    """
    opts = options or LocusOptions()
    sign = -1.0 if opts.decreasing else 1.0
    p0 = np.asarray(seed, dtype=float)
    d0 = model.derivatives(p0)
    p0, d0, ok = polish(model, p0, d0.g, opts, max_iter=opts.polish_iters, derivs=d0)
    first = _state(model, d0, opts, 0)
    if not ok or first.classification != MINIMIZER:
        raise InvalidSeedError(
            f"seed is not a stationary constrained minimizer (|grad L|={first.grad_L_norm:.3g}, "
            f"classification={first.classification})",
            {"grad_L_norm": first.grad_L_norm, "classification": first.classification},
        )
    trace = LocusTrace(states=[first])
    pending = sorted((lv for lv in opts.levels if sign * (lv - first.g) > 0), key=lambda lv: sign * lv)
    pending = [lv for lv in pending if abs(lv - first.g) > 1e-12 * max(1.0, abs(first.g))]
    min_g = opts.min_displacement
    cache = {}

    def direction(q):
        key = q.tobytes()
        d = cache.get(key)
        if d is None:
            d = model.derivatives(q)
            cache[key] = d
        v = _step_direction(model, d, opts.null_tol)
        # keep g moving the requested way; the null basis has arbitrary sign
        v = v if sign * (v @ d.grad_g) > 0 else -v
        return v / np.linalg.norm(v)

    p, d = p0, d0
    for k in range(1, opts.max_steps + 1):
        cache.clear()
        cache[p.tobytes()] = d
        h = opts.rk_step
        try:
            q = calculus.rk4_step(direction, p, h)
            dq = model.derivatives(q)
            target = dq.g
            if pending and sign * (target - pending[0]) >= 0:
                # shorten the step to land on the pending level
                frac = (pending[0] - d.g) / (target - d.g)
                q = calculus.rk4_step(direction, p, h * frac)
                dq = model.derivatives(q)
                target = pending.pop(0)
            if opts.corrector:
                q, dq, ok = polish(model, q, target, opts, derivs=dq)
            else:
                ok = True
        except GaitLocusError as exc:
            trace.stop_reason = _stop_for(exc)
            trace.message = str(exc)
            break
        st = _state(model, dq, opts, k)
        if opts.branch_switch and ok and st.classification in (SADDLE, INDETERMINATE):
            switched = switch_branch(model, dq, target, opts)
            if switched is not None:
                q, dq = switched
                st = _state(model, dq, opts, k)
                trace.branch_switches.append(k)
                log.info("step %d: switched to a minimizing branch at g=%.8g (s=%.8g)", k, st.g, st.s)
        if sign * (st.g - trace.states[-1].g) <= 0:
            trace.stop_reason = STOP_SINGULAR
            trace.message = "displacement stopped changing monotonically"
            break
        if st.classification != MINIMIZER or (opts.corrector and not ok):
            trace.stop_reason = STOP_LOST_MINIMIZER
            trace.message = f"state classified {st.classification}, |grad L|={st.grad_L_norm:.3g}"
            break
        trace.states.append(st)
        p, d = q, dq
        log.debug("step %d: g=%.8g s=%.8g |gradL|=%.2g", k, st.g, st.s, st.grad_L_norm)
        if min_g is not None and sign * (st.g - min_g) >= 0:
            trace.stop_reason = STOP_MIN_DISPLACEMENT
            break
    else:
        trace.stop_reason = STOP_MAX_STEPS
    log.info("trace stopped (%s) after %d states", trace.stop_reason, len(trace.states))
    return trace

"""Finite-difference derivatives, SVD null spaces and fixed-step RK4 flow.

Every stencil is split into two halves: a ``*_probes`` function that lists the
points to evaluate and a ``*_from_values`` function that assembles the
derivative from the evaluated values.  Callers with a vectorized field (the
swimmer models) evaluate all probes in one batch; values may carry a trailing
axis so that several functionals share one set of probes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import EvaluationError, IntegrationError

GRADIENT_STEP_SCALE = 1e-4
HESSIAN_STEP_SCALE = 1e-3
DEFAULT_NULL_TOL = 1e-6


def default_gradient_step(p) -> float:
    return GRADIENT_STEP_SCALE * max(1.0, float(np.max(np.abs(p), initial=0.0)))


def default_hessian_step(p) -> float:
    return HESSIAN_STEP_SCALE * max(1.0, float(np.max(np.abs(p), initial=0.0)))


def _evaluate(f, points, batch):
    if batch is not None:
        values = np.asarray(batch(points), dtype=float)
    else:
        values = np.array([f(q) for q in points], dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        row = np.argwhere(bad.reshape(len(points), -1).any(axis=1))[0, 0]
        raise EvaluationError(f"non-finite field value at probe {points[row]!r}", points[row])
    return values


def gradient_probes(p, h: float) -> np.ndarray:
    """Probe points of the central-difference gradient, ordered (p+h e_i, p-h e_i) per i."""
    p = np.asarray(p, dtype=float)
    n = p.size
    offsets = np.repeat(np.eye(n), 2, axis=0) * h
    offsets[1::2] *= -1.0
    return p + offsets


def gradient_from_values(values, h: float) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return (values[0::2] - values[1::2]) / (2.0 * h)


def hessian_probes(p, h: float) -> np.ndarray:
    """Probe points of the second-order Hessian stencil.

    Layout: ``p``; then ``p + h e_i``, ``p - h e_i`` for each ``i``; then for
    each pair ``i < j`` the four corners ``(+,+), (+,-), (-,+), (-,-)``.
    """
    p = np.asarray(p, dtype=float)
    n = p.size
    eye = np.eye(n) * h
    rows = [p[None, :], gradient_probes(p, h)]
    iu, ju = np.triu_indices(n, k=1)
    if iu.size:
        ei, ej = eye[iu], eye[ju]
        corners = np.stack([ei + ej, ei - ej, -ei + ej, -ei - ej], axis=1)
        rows.append((p + corners).reshape(-1, n))
    return np.concatenate(rows, axis=0)


def hessian_from_values(values, h: float, n: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    tail = values.shape[1:]
    f0 = values[0]
    plus, minus = values[1:2 * n + 1:2], values[2:2 * n + 1:2]
    H = np.empty((n, n) + tail)
    idx = np.arange(n)
    H[idx, idx] = (plus - 2.0 * f0 + minus) / h**2
    iu, ju = np.triu_indices(n, k=1)
    if iu.size:
        c = values[2 * n + 1:].reshape((iu.size, 4) + tail)
        cross = (c[:, 0] - c[:, 1] - c[:, 2] + c[:, 3]) / (4.0 * h**2)
        H[iu, ju] = cross
        H[ju, iu] = cross
    if tail:
        H = np.moveaxis(H, (0, 1), (-2, -1))
    return H


def gradient(f: Callable, p, h: Optional[float] = None, batch: Optional[Callable] = None) -> np.ndarray:
    """Central-difference gradient of a scalar field.

    Parameters
    ----------
    f : callable
        Scalar field ``p -> float``.
    p : array_like
        Evaluation point.
    h : float, optional
        Probe step; defaults to ``1e-4 * max(1, |p|_inf)``.
    batch : callable, optional
        Vectorized form of ``f`` taking an ``(m, n)`` array of points.
    """
    p = np.asarray(p, dtype=float)
    if h is None:
        h = default_gradient_step(p)
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    return gradient_from_values(_evaluate(f, gradient_probes(p, h), batch), h)


def hessian(f: Callable, p, h: Optional[float] = None, batch: Optional[Callable] = None) -> np.ndarray:
    """Symmetric second-order finite-difference Hessian of a scalar field."""
    p = np.asarray(p, dtype=float)
    if h is None:
        h = default_hessian_step(p)
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    return hessian_from_values(_evaluate(f, hessian_probes(p, h), batch), h, p.size)


@dataclass(frozen=True)
class NullBasis:
    """Orthonormal basis (as columns) of an approximate null space."""

    columns: np.ndarray
    tolerance: float
    singular_values: np.ndarray

    @property
    def dim(self) -> int:
        return self.columns.shape[1]

    def project(self, v) -> np.ndarray:
        B = self.columns
        return B @ (B.T @ np.asarray(v, dtype=float))


def null_space(M, tol: float = DEFAULT_NULL_TOL) -> NullBasis:
    """Right null space of ``M`` from its SVD.

    Singular directions with ``sigma <= tol * sigma_max`` are kept; directions
    beyond the row count are null by construction.  A zero matrix yields the
    whole space.
    """
    if tol <= 0:
        raise ValueError("null-space tolerance must be positive")
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[1]
    _, sigma, vt = np.linalg.svd(M, full_matrices=True)
    smax = sigma[0] if sigma.size else 0.0
    if smax == 0.0:
        return NullBasis(np.eye(n), tol, sigma)
    full = np.zeros(n)
    full[: sigma.size] = sigma
    mask = full <= tol * smax
    return NullBasis(vt[mask].T.copy(), tol, sigma)


def rk4_step(field: Callable, p, step: float) -> np.ndarray:
    k1 = field(p)
    k2 = field(p + 0.5 * step * k1)
    k3 = field(p + 0.5 * step * k2)
    k4 = field(p + step * k3)
    return p + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_flow(field: Callable, p0, step: float, stop: Callable, max_steps: int) -> list:
    """Classical fixed-step RK4 integration of an autonomous field.

    ``stop(p, t)`` is checked at every visited state, ``p0`` included; the
    returned list holds all visited states up to and including the first one
    for which it is true (or ``max_steps`` steps).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    p = np.array(p0, dtype=float)
    states = [p.copy()]
    if stop(p, 0.0):
        return states
    for k in range(max_steps):
        p = rk4_step(field, p, step)
        if not np.all(np.isfinite(p)):
            raise IntegrationError(f"non-finite state at step {k + 1}", step_index=k + 1)
        states.append(p.copy())
        if stop(p, (k + 1) * step):
            break
    return states

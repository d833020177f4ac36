"""Truncated Fourier gaits and their sampled shape trajectories."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GaitParams:
    """Fourier coefficients of a closed gait.

    ``coefficients[j]`` holds ``(a0, a1, b1, ..., aK, bK)`` for joint ``j`` so
    that ``r_j(phi) = a0 + sum_k a_k cos(k phi) + b_k sin(k phi)``.  The flat
    parameter vector is the joint-major concatenation of these rows.
    """

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float)
        if c.ndim != 2 or c.shape[1] % 2 != 1:
            raise ValueError("coefficients must be an (n_joints, 2K+1) array")
        object.__setattr__(self, "coefficients", c)

    @property
    def n_joints(self) -> int:
        return self.coefficients.shape[0]

    @property
    def order(self) -> int:
        return (self.coefficients.shape[1] - 1) // 2

    def to_vector(self) -> np.ndarray:
        return self.coefficients.ravel().copy()

    @classmethod
    def from_vector(cls, p, n_joints: int, order: int) -> "GaitParams":
        p = np.asarray(p, dtype=float)
        if p.size != n_joints * (2 * order + 1):
            raise ValueError(f"expected {n_joints * (2 * order + 1)} parameters, got {p.size}")
        return cls(p.reshape(n_joints, 2 * order + 1))

    @classmethod
    def zeros(cls, n_joints: int, order: int) -> "GaitParams":
        return cls(np.zeros((n_joints, 2 * order + 1)))

    def to_json(self) -> dict:
        return {
            "n_joints": self.n_joints,
            "order": self.order,
            "coefficients": self.coefficients.tolist(),
        }

    @classmethod
    def from_json(cls, data) -> "GaitParams":
        if isinstance(data, str):
            data = json.loads(data)
        gait = cls(np.array(data["coefficients"], dtype=float))
        if gait.n_joints != data["n_joints"] or gait.order != data["order"]:
            raise ValueError("coefficient array does not match n_joints/order")
        return gait


@dataclass(frozen=True)
class ShapeTrajectory:
    """Shape samples ``r`` and phase derivatives ``rdot`` on a uniform grid over one cycle."""

    phi: np.ndarray
    r: np.ndarray
    rdot: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.phi.size

    @property
    def n_joints(self) -> int:
        return self.r.shape[1]


def uniform_phase(n_samples: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n_samples) / n_samples


def fourier_basis(order: int, phi):
    """Value and derivative basis matrices, shape ``(len(phi), 2K+1)``."""
    phi = np.asarray(phi, dtype=float)
    k = np.arange(1, order + 1)
    kp = np.outer(phi, k)
    cos, sin = np.cos(kp), np.sin(kp)
    value = np.empty((phi.size, 2 * order + 1))
    deriv = np.empty_like(value)
    value[:, 0] = 1.0
    deriv[:, 0] = 0.0
    value[:, 1::2], value[:, 2::2] = cos, sin
    deriv[:, 1::2], deriv[:, 2::2] = -k * sin, k * cos
    return value, deriv


def evaluate_gait(params: GaitParams, phi):
    """Shapes and phase derivatives at arbitrary phases."""
    value, deriv = fourier_basis(params.order, phi)
    return value @ params.coefficients.T, deriv @ params.coefficients.T


def sample_gait(params: GaitParams, n_samples: int) -> ShapeTrajectory:
    if n_samples < max(8 * params.order, 1):
        raise ValueError(f"n_samples={n_samples} cannot resolve harmonic order {params.order}")
    phi = uniform_phase(n_samples)
    r, rdot = evaluate_gait(params, phi)
    return ShapeTrajectory(phi, r, rdot)


def phase_shift(params: GaitParams, delta: float) -> GaitParams:
    """Coefficients of the same closed curve started ``delta`` later in phase."""
    c = params.coefficients.copy()
    a, b = c[:, 1::2].copy(), c[:, 2::2].copy()
    k = np.arange(1, params.order + 1)
    cs, sn = np.cos(k * delta), np.sin(k * delta)
    c[:, 1::2] = a * cs + b * sn
    c[:, 2::2] = -a * sn + b * cs
    return GaitParams(c)


def phase_generator(p, n_joints: int, order: int) -> np.ndarray:
    """Derivative of ``phase_shift`` at zero shift, as a flat parameter vector."""
    c = np.asarray(p, dtype=float).reshape(n_joints, 2 * order + 1)
    k = np.arange(1, order + 1)
    out = np.zeros_like(c)
    out[:, 1::2] = k * c[:, 2::2]
    out[:, 2::2] = -k * c[:, 1::2]
    return out.ravel()


def fit_gait(traj: ShapeTrajectory, order: int) -> GaitParams:
    """Least-squares trigonometric fit of sampled shapes."""
    value, _ = fourier_basis(order, traj.phi)
    coef, *_ = np.linalg.lstsq(value, traj.r, rcond=None)
    return GaitParams(coef.T)


def circle_gait(n_joints: int, order: int, amplitude: float = 1.0, joints=(0, 1), center=None) -> GaitParams:
    """Circle of the given radius in the plane of two joints, counterclockwise."""
    c = np.zeros((n_joints, 2 * order + 1))
    i, j = joints
    c[i, 1] = amplitude
    c[j, 2] = amplitude
    if center is not None:
        c[:, 0] = center
    return GaitParams(c)

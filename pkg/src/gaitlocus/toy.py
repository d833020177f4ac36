"""Weighted area/perimeter toy system on axis-aligned ellipses.

The field quality is the paraboloid ``1 - a1^2 - a2^2``.  A gait is the
ellipse ``(p1 cos phi, sqrt(p2) sin phi)``; its displacement is the enclosed
weighted area and its cost the perimeter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .system import SystemModel

DEFAULT_SAMPLES = 512
MIN_SAMPLES = 64


@dataclass(frozen=True)
class ToyEllipseParams:
    p1: float  # semi-axis along a1
    p2: float  # squared semi-axis along a2

    def __post_init__(self):
        if not (self.p1 > 0 and self.p2 > 0):
            raise ValueError(f"ellipse axes must be positive, got p1={self.p1}, p2={self.p2}")

    @classmethod
    def circle(cls, radius: float) -> "ToyEllipseParams":
        return cls(radius, radius**2)

    def to_vector(self) -> np.ndarray:
        return np.array([self.p1, self.p2])


def _check(P, n_samples):
    if n_samples < MIN_SAMPLES:
        raise ValueError(f"n_samples must be at least {MIN_SAMPLES}")
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if np.any(P <= 0):
        raise InvalidParameterError("ellipse axes must be positive")
    return P


def _phase(n_samples):
    return 2.0 * np.pi * np.arange(n_samples) / n_samples


def weighted_area_batch(P, n_samples: int = DEFAULT_SAMPLES) -> np.ndarray:
    P = _check(P, n_samples)
    phi = _phase(n_samples)
    a = P[:, :1]
    b = np.sqrt(P[:, 1:])
    x = a * np.cos(phi)
    y = b * np.sin(phi)
    dy = b * np.cos(phi)
    # Green's theorem: d(x - x^3/3 - x y^2) / dx = 1 - x^2 - y^2
    integrand = (x - x**3 / 3.0 - x * y**2) * dy
    return 2.0 * np.pi * integrand.mean(axis=1)


def perimeter_batch(P, n_samples: int = DEFAULT_SAMPLES) -> np.ndarray:
    P = _check(P, n_samples)
    phi = _phase(n_samples)
    speed = np.sqrt(P[:, :1] ** 2 * np.sin(phi) ** 2 + P[:, 1:] * np.cos(phi) ** 2)
    return 2.0 * np.pi * speed.mean(axis=1)


def weighted_area(params: ToyEllipseParams, n_samples: int = DEFAULT_SAMPLES) -> float:
    return float(weighted_area_batch(params.to_vector(), n_samples)[0])


def perimeter(params: ToyEllipseParams, n_samples: int = DEFAULT_SAMPLES) -> float:
    return float(perimeter_batch(params.to_vector(), n_samples)[0])


def circle_area(radius):
    """Closed-form weighted area of a centred circle, pi (R^2 - R^4 / 2)."""
    return np.pi * (radius**2 - radius**4 / 2.0)


def field_quality(a1, a2):
    return 1.0 - a1**2 - a2**2


def ellipse_samples(p, n_samples: int):
    """Shapes and phase derivatives of the toy gait, for gait-sample output."""
    p1, p2 = float(p[0]), float(p[1])
    phi = _phase(n_samples)
    b = np.sqrt(p2)
    r = np.column_stack([p1 * np.cos(phi), b * np.sin(phi)])
    rdot = np.column_stack([-p1 * np.sin(phi), b * np.cos(phi)])
    return phi, r, rdot


class ToyModel(SystemModel):
    name = "toy"
    n_params = 2

    def __init__(self, n_samples: int = DEFAULT_SAMPLES, **kwargs):
        super().__init__(**kwargs)
        if n_samples < MIN_SAMPLES:
            raise ValueError(f"n_samples must be at least {MIN_SAMPLES}")
        self.n_samples = n_samples

    def evaluate_batch(self, P):
        P = _check(P, self.n_samples)
        return np.column_stack([weighted_area_batch(P, self.n_samples), perimeter_batch(P, self.n_samples)])

    def initial_guess(self) -> np.ndarray:
        return np.array([1.0, 0.64])

    def shape_samples(self, p, n_samples):
        return ellipse_samples(p, n_samples)

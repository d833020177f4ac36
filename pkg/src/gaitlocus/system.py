"""The model contract consumed by the optimizers: displacement g(p), cost s(p) and their derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import calculus


@dataclass(frozen=True)
class Derivatives:
    """Values, gradients and Hessians of displacement and cost at one parameter point."""

    p: np.ndarray
    g: float
    s: float
    grad_g: np.ndarray
    grad_s: np.ndarray
    hess_g: Optional[np.ndarray] = None
    hess_s: Optional[np.ndarray] = None


class SystemModel:
    """Base class for gait systems.

    Subclasses implement :meth:`evaluate_batch`, mapping an ``(m, n)`` array of
    parameter vectors to an ``(m, 2)`` array of ``(g, s)`` rows, and may raise
    library errors for inadmissible parameters.
    """

    name = "system"
    n_params: int = 0

    def __init__(self, grad_step: Optional[float] = None, hess_step: Optional[float] = None):
        self.grad_step = grad_step
        self.hess_step = hess_step

    def evaluate_batch(self, P: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, p):
        g, s = self.evaluate_batch(np.asarray(p, dtype=float)[None, :])[0]
        return float(g), float(s)

    def displacement(self, p) -> float:
        return self.evaluate(p)[0]

    def cost(self, p) -> float:
        return self.evaluate(p)[1]

    def trivial_directions(self, p) -> np.ndarray:
        """Parameter directions that leave the gait curve unchanged, as rows."""
        return np.zeros((0, self.n_params))

    def _steps(self, p):
        hg = self.grad_step if self.grad_step is not None else calculus.default_gradient_step(p)
        hh = self.hess_step if self.hess_step is not None else calculus.default_hessian_step(p)
        return hg, hh

    def derivatives(self, p, hessians: bool = True) -> Derivatives:
        """Central-difference derivatives of g and s from one batched evaluation."""
        p = np.asarray(p, dtype=float)
        n = p.size
        hg, hh = self._steps(p)
        probes = [calculus.gradient_probes(p, hg)]
        if hessians:
            probes.append(calculus.hessian_probes(p, hh))
        else:
            probes.append(p[None, :])
        values = calculus._evaluate(None, np.concatenate(probes), self.evaluate_batch)
        grad = calculus.gradient_from_values(values[: 2 * n], hg)
        rest = values[2 * n:]
        hess_g = hess_s = None
        if hessians:
            H = calculus.hessian_from_values(rest, hh, n)
            hess_g, hess_s = H[0], H[1]
        return Derivatives(
            p=p.copy(), g=float(rest[0, 0]), s=float(rest[0, 1]),
            grad_g=grad[:, 0].copy(), grad_s=grad[:, 1].copy(),
            hess_g=hess_g, hess_s=hess_s,
        )


class FunctionalModel(SystemModel):
    """Model built from plain Python callables, used for analytic testbeds."""

    def __init__(self, displacement: Callable, cost: Callable, n_params: int,
                 name: str = "functional", trivial: Optional[Callable] = None, **kwargs):
        super().__init__(**kwargs)
        self._g = displacement
        self._s = cost
        self._trivial = trivial
        self.n_params = n_params
        self.name = name

    def evaluate_batch(self, P):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        return np.array([[self._g(q), self._s(q)] for q in P], dtype=float)

    def trivial_directions(self, p):
        if self._trivial is None:
            return super().trivial_directions(p)
        return np.atleast_2d(self._trivial(p))


def quadratic_testbed(cost_signs=(1.0, 1.0)) -> FunctionalModel:
    """``s = c1 p1^2 + c2 p2^2`` with ``g = p1``, whose locus is the axis ``p2 = 0``."""
    c1, c2 = cost_signs
    return FunctionalModel(
        displacement=lambda p: p[0],
        cost=lambda p: c1 * p[0] ** 2 + c2 * p[1] ** 2,
        n_params=2,
        name="quadratic",
    )

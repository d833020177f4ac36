import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import brentq

from gaitlocus.errors import DegenerateConstraintError, InvalidSeedError, NotStationaryError
from gaitlocus.locus import (
    MAXIMIZER,
    MINIMIZER,
    SADDLE,
    STOP_LOST_MINIMIZER,
    STOP_MIN_DISPLACEMENT,
    LocusOptions,
    classify_stationary,
    critical_direction,
    lagrangian_hessian,
    lambda_gradient,
    locus_step,
    optimal_lambda,
    trace_locus,
)
from gaitlocus.system import FunctionalModel, quadratic_testbed
from gaitlocus.toy import ToyModel, circle_area


def _model(g, s, n=2, **kw):
    return FunctionalModel(g, s, n, **kw)


def test_optimal_lambda_examples():
    assert optimal_lambda([2.0, 0.0], [1.0, 0.0]) == 2.0
    assert optimal_lambda([0.0, 3.0], [1.0, 0.0]) == 0.0
    assert optimal_lambda([1.0, 1.0], [1.0, 1.0]) == 1.0
    with pytest.raises(DegenerateConstraintError):
        optimal_lambda([1.0, 0.0], [0.0, 0.0])


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 4, elements=st.floats(-5, 5)), arrays(np.float64, 4, elements=st.floats(-5, 5)))
def test_residual_is_orthogonal_to_constraint_gradient(gs, gg):
    if np.linalg.norm(gg) < 1e-3:
        return
    lam = optimal_lambda(gs, gg)
    assert abs((gs - lam * gg) @ gg) <= 1e-12 * (1 + np.linalg.norm(gs)) * np.linalg.norm(gg)


def test_lambda_gradient_examples():
    same = _model(lambda p: p[0] + np.sin(p[1]), lambda p: p[0] + np.sin(p[1]))
    np.testing.assert_allclose(lambda_gradient(same, np.array([0.3, 0.2])), 0.0, atol=1e-6)
    quad = _model(lambda p: p[0], lambda p: p[0] ** 2)
    np.testing.assert_allclose(lambda_gradient(quad, np.array([1.0, 0.5])), [2.0, 0.0], atol=1e-6)


def test_lagrangian_hessian_vanishes_when_cost_equals_constraint():
    same = _model(lambda p: p[0] ** 2 + p[0] * p[1], lambda p: p[0] ** 2 + p[0] * p[1])
    H = lagrangian_hessian(same, np.array([0.7, -0.4]))
    assert np.max(np.abs(H)) <= 1e-6


def test_toy_hessian_annihilates_circle_tangent():
    model = ToyModel()
    for R in (0.4, 0.6, 0.8):
        p = np.array([R, R * R])
        H = lagrangian_hessian(model, p)
        t = np.array([1.0, 2 * R]) / np.hypot(1.0, 2 * R)
        assert np.linalg.norm(H @ t) <= 1e-3 * np.linalg.norm(H)


def test_toy_step_follows_circle_family():
    model = ToyModel()
    for R in (0.5, 0.7):
        v = locus_step(model, np.array([R, R * R]))
        ref = -np.array([1.0, 2 * R])
        cos = v @ ref / (np.linalg.norm(v) * np.linalg.norm(ref))
        assert np.degrees(np.arccos(min(cos, 1.0))) <= 5.0


def test_step_is_idempotent_under_projection():
    model = quadratic_testbed()
    v = locus_step(model, np.array([0.7, 0.0]))
    np.testing.assert_allclose(v, [-1.0, 0.0], atol=1e-6)
    # the step already lies in the null space of H
    H = lagrangian_hessian(model, np.array([0.7, 0.0]))
    assert np.linalg.norm(H @ v) <= 1e-6


def test_classification_examples():
    p = np.array([0.5, 0.0])
    assert classify_stationary(quadratic_testbed(), p) == MINIMIZER
    assert classify_stationary(quadratic_testbed((-1.0, -1.0)), p) == MAXIMIZER
    assert classify_stationary(quadratic_testbed((1.0, -1.0)), p) == SADDLE
    with pytest.raises(NotStationaryError):
        classify_stationary(quadratic_testbed(), np.array([0.5, 0.2]))


def test_toy_optimum_is_minimizer_and_perturbation_is_not_stationary():
    model = ToyModel()
    R = np.sqrt(2.0 / 3.0)
    p = np.array([R, R * R])
    assert classify_stationary(model, p) == MINIMIZER
    with pytest.raises(NotStationaryError):
        classify_stationary(model, p + np.array([0.0, 0.05]))


def test_quadratic_trace_stays_on_axis():
    trace = trace_locus(quadratic_testbed(), np.array([1.0, 0.0]),
                        LocusOptions(rk_step=0.05, min_displacement=0.2, levels=[0.5]))
    assert trace.stop_reason == STOP_MIN_DISPLACEMENT
    P = np.array([st.p for st in trace.states])
    assert np.max(np.abs(P[:, 1])) <= 1e-8
    np.testing.assert_allclose(trace.costs, trace.displacements**2, atol=1e-10)
    assert trace.at_displacement(0.5) is not None


def test_trivial_direction_is_orthogonal_to_step():
    # s and g depend only on |p|, so the rotation generator is a trivial direction
    model = _model(lambda p: p @ p, lambda p: np.sqrt(p @ p) + (p @ p) ** 2, n=2,
                   trivial=lambda p: np.array([-p[1], p[0]]))
    p = np.array([0.6, 0.3])
    v = locus_step(model, p)
    assert abs(v @ np.array([-p[1], p[0]])) <= 1e-6 * np.linalg.norm(v) * np.linalg.norm(p)


def test_invalid_seed_is_rejected():
    with pytest.raises(InvalidSeedError):
        trace_locus(quadratic_testbed((-1.0, -1.0)), np.array([0.5, 0.0]), LocusOptions(polish_iters=5))


def _feasible_cost(model, q, level):
    """Cost of ``t q`` with the scale chosen so that ``g(t q) = level``."""
    f = lambda t: model.displacement(t * q) - level
    t = brentq(f, 1e-3, 1.0, xtol=1e-14)
    return model.cost(t * q)


def test_toy_traced_costs_beat_random_feasible_ellipses(toy_model, toy_trace, rng):
    trace = toy_trace.value
    for st_ in trace.states[:: max(1, len(trace.states) // 5)]:
        for _ in range(20):
            a, b = rng.uniform(0.3, 1.2, size=2)
            q = np.array([a, b * b])
            if toy_model.displacement(q) <= st_.g:
                continue
            assert _feasible_cost(toy_model, q, st_.g) >= st_.s * (1 - 5e-3)


def test_three_link_traced_costs_beat_perturbed_feasible_gaits(three_link, three_link_trace, rng):
    trace = three_link_trace.value
    for st_ in trace.states[:: max(1, len(trace.states) // 3)]:
        for _ in range(20):
            q = st_.p * 1.3 + rng.normal(scale=0.05, size=st_.p.size)
            if three_link.displacement(q) <= st_.g:
                continue
            assert _feasible_cost(three_link, q, st_.g) >= st_.s * (1 - 5e-3)


def test_trace_invariants(toy_trace, three_link_trace):
    for timed in (toy_trace, three_link_trace):
        trace = timed.value
        g = trace.displacements
        assert np.all(np.diff(g) < 0)
        assert all(st_.classification == MINIMIZER for st_ in trace.states)
        assert all(st_.grad_L_norm <= 1e-6 * (1 + st_.s) for st_ in trace.states)


def test_three_link_needs_branch_switch(three_link, three_link_seed, three_link_trace):
    assert three_link_trace.value.branch_switches
    g0 = three_link_seed.value.g
    trace = trace_locus(three_link, three_link_seed.value.p,
                        LocusOptions(rk_step=4e-2, min_displacement=0.25 * g0, branch_switch=False))
    assert trace.stop_reason == STOP_LOST_MINIMIZER
    assert 0.25 * g0 < trace.states[-1].g < 0.5 * g0


def test_critical_direction_is_unit_and_tangent(three_link, three_link_seed):
    d = three_link.derivatives(three_link_seed.value.p)
    e = critical_direction(three_link, d)
    assert np.linalg.norm(e) == pytest.approx(1.0)
    assert abs(e @ d.grad_g) <= 1e-10 * np.linalg.norm(d.grad_g)
    assert e[np.argmax(np.abs(e))] > 0


def test_toy_trace_matches_circle_family(toy_trace):
    for st_ in toy_trace.value.states:
        R = st_.p[0]
        assert st_.g == pytest.approx(circle_area(R), rel=1e-6)

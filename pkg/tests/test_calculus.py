import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gaitlocus import calculus
from gaitlocus.errors import EvaluationError, IntegrationError
from gaitlocus.toy import ToyModel


def test_gradient_quadratic():
    g = calculus.gradient(lambda p: p[0] ** 2 + p[1] ** 2, np.array([1.0, 2.0]), 1e-5)
    np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-8)


def test_gradient_constant_is_exactly_zero():
    g = calculus.gradient(lambda p: 7.0, np.array([0.3, -0.8]))
    assert np.all(g == 0.0)


def test_gradient_bilinear():
    g = calculus.gradient(lambda p: p[0] * p[1], np.array([2.0, 3.0]), 1e-5)
    np.testing.assert_allclose(g, [3.0, 2.0], atol=1e-8)


def test_gradient_reports_bad_probe():
    with pytest.raises(EvaluationError) as info, np.errstate(invalid="ignore"):
        calculus.gradient(lambda p: np.sqrt(p[0]), np.array([0.0, 1.0]), 1e-3)
    assert info.value.point is not None


def test_hessian_examples():
    np.testing.assert_allclose(calculus.hessian(lambda p: p[0] ** 2 + 3 * p[1] ** 2, np.zeros(2)),
                               np.diag([2.0, 6.0]), atol=1e-6)
    np.testing.assert_allclose(calculus.hessian(lambda p: p[0] * p[1], np.array([0.4, -1.0])),
                               [[0.0, 1.0], [1.0, 0.0]], atol=1e-6)


def test_hessian_rejects_nan():
    with pytest.raises(EvaluationError):
        calculus.hessian(lambda p: np.nan, np.zeros(2))


def _five_point_hessian(f, p, h):
    """Fourth-order stencils: an independent reference for the three-point Hessian."""
    n = p.size
    H = np.zeros((n, n))
    e = np.eye(n)
    w = {-2: -1.0, -1: 16.0, 0: -30.0, 1: 16.0, 2: -1.0}
    for i in range(n):
        H[i, i] = sum(c * f(p + k * h * e[i]) for k, c in w.items()) / (12 * h * h)
    d1 = {-2: 1.0, -1: -8.0, 1: 8.0, 2: -1.0}
    for i in range(n):
        for j in range(i + 1, n):
            H[i, j] = H[j, i] = sum(ci * cj * f(p + ki * h * e[i] + kj * h * e[j])
                                    for ki, ci in d1.items() for kj, cj in d1.items()) / (144 * h * h)
    return H


def test_hessian_of_toy_perimeter_matches_higher_order_stencil():
    model = ToyModel()
    p = np.array([0.83, 0.41])
    H = calculus.hessian(model.cost, p)
    ref = _five_point_hessian(model.cost, p, 1e-2)
    assert np.linalg.norm(H - ref) <= 1e-4 * np.linalg.norm(ref)


def test_hessian_exactly_symmetric():
    rng = np.random.default_rng(1)
    H = calculus.hessian(lambda p: np.sin(p[0] * p[1]) + np.exp(p[2] - p[0]), rng.normal(size=3))
    assert np.array_equal(H, H.T)


def _order(estimate, p, hs):
    v = [estimate(p, h) for h in hs]
    return np.log2(np.linalg.norm(v[0] - v[1]) / np.linalg.norm(v[1] - v[2]))


def test_richardson_order_on_smooth_field():
    def f(p):
        return np.sin(p[0]) * np.cosh(p[1]) + p[0] ** 3 * p[1]

    p = np.array([0.4, -0.7])
    assert _order(lambda q, h: calculus.gradient(f, q, h), p, [0.1, 0.05, 0.025]) >= 1.9
    assert _order(lambda q, h: calculus.hessian(f, q, h), p, [0.1, 0.05, 0.025]) >= 1.9


def test_batched_evaluation_matches_scalar():
    def f(p):
        return np.sum(np.sin(p) ** 2)

    def batch(P):
        return np.sum(np.sin(P) ** 2, axis=1)

    p = np.array([0.2, 0.9, -0.4])
    np.testing.assert_array_equal(calculus.gradient(f, p), calculus.gradient(None, p, batch=batch))
    np.testing.assert_array_equal(calculus.hessian(f, p), calculus.hessian(None, p, batch=batch))


def test_default_steps_scale_with_parameters():
    assert calculus.default_gradient_step(np.array([0.1, -0.2])) == 1e-4
    assert calculus.default_hessian_step(np.array([5.0, -8.0])) == pytest.approx(8e-3)


def _basis_set(basis):
    return basis.columns @ basis.columns.T


def test_null_space_examples():
    assert calculus.null_space(np.eye(2), 1e-8).dim == 0
    b = calculus.null_space(np.array([[1.0, 0.0], [0.0, 0.0]]), 1e-8)
    np.testing.assert_allclose(_basis_set(b), [[0.0, 0.0], [0.0, 1.0]], atol=1e-12)
    b = calculus.null_space(np.array([[1.0, 1.0], [1.0, 1.0]]), 1e-8)
    v = np.array([1.0, -1.0]) / np.sqrt(2)
    np.testing.assert_allclose(_basis_set(b), np.outer(v, v), atol=1e-12)


def test_null_space_of_zero_matrix_is_everything():
    assert calculus.null_space(np.zeros((2, 3)), 1e-6).dim == 3


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, (5, 2), elements=st.floats(-3, 3)),
    arrays(np.float64, (2, 6), elements=st.floats(-3, 3)),
    st.floats(1e-9, 1e-3),
)
def test_null_space_properties(left, right, tol):
    M = left @ right  # rank at most 2 in R^6
    basis = calculus.null_space(M, tol)
    B = basis.columns
    smax = np.linalg.norm(M, 2)
    if B.size:
        np.testing.assert_allclose(B.T @ B, np.eye(B.shape[1]), atol=1e-10)
        assert np.linalg.norm(M @ B) <= 10 * tol * smax + 1e-300
    assert basis.dim >= 4


def test_projection_is_idempotent():
    basis = calculus.null_space(np.array([[0.0, 1.0, 0.0]]), 1e-8)
    v = np.array([1.0, 2.0, 3.0])
    once = basis.project(v)
    np.testing.assert_allclose(once, [1.0, 0.0, 3.0], atol=1e-14)
    np.testing.assert_allclose(basis.project(once), once, atol=1e-14)


def test_integrate_flow_exponential_decay():
    states = calculus.integrate_flow(lambda p: -p, np.array([1.0]), 0.01,
                                     stop=lambda p, t: t >= 1.0 - 1e-12, max_steps=1000)
    assert len(states) == 101
    assert abs(states[-1][0] - np.exp(-1.0)) <= 1e-8


def test_integrate_flow_fourth_order():
    errs = []
    for h in (0.1, 0.05):
        states = calculus.integrate_flow(lambda p: -p, np.array([1.0]), h,
                                         stop=lambda p, t: t >= 1.0 - 1e-12, max_steps=10_000)
        errs.append(abs(states[-1][0] - np.exp(-1.0)))
    assert np.log2(errs[0] / errs[1]) >= 3.8


def test_integrate_flow_constant_and_immediate_stop():
    p0 = np.array([0.5, -1.0])
    states = calculus.integrate_flow(lambda p: np.zeros_like(p), p0, 0.1, stop=lambda p, t: False, max_steps=5)
    assert len(states) == 6 and all(np.array_equal(s, p0) for s in states)
    states = calculus.integrate_flow(lambda p: -p, p0, 0.1, stop=lambda p, t: True, max_steps=5)
    assert len(states) == 1 and np.array_equal(states[0], p0)


def test_integrate_flow_reports_step_index():
    def field(p):
        return p if p[0] < 2.0 else np.array([np.inf])

    with pytest.raises(IntegrationError) as info:
        calculus.integrate_flow(field, np.array([1.0]), 0.5, stop=lambda p, t: False, max_steps=50)
    assert info.value.step_index is not None

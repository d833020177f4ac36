import numpy as np
import pytest

from gaitlocus.errors import InfeasibleConstraintError, InvalidSeedError
from gaitlocus.locus import MINIMIZER, classify_stationary
from gaitlocus.seed import (
    ConstrainedOptions,
    SeedOptions,
    complement_basis,
    find_max_efficiency_gait,
    solve_constrained,
)
from gaitlocus.system import FunctionalModel, quadratic_testbed
from gaitlocus.toy import ToyModel, circle_area

from oracles import scan_toy_radius

R_OPT = np.sqrt(2.0 / 3.0)


def test_toy_seed_is_the_best_circle():
    model = ToyModel()
    rep = find_max_efficiency_gait(model, model.initial_guess())
    assert rep.converged
    R = rep.p[0]
    assert abs(R - scan_toy_radius()) <= 1e-3
    assert R == pytest.approx(R_OPT, abs=1e-6)
    assert rep.p[1] == pytest.approx(R * R, abs=1e-6)


def test_seed_started_at_optimum_stops_immediately():
    model = ToyModel()
    rep = find_max_efficiency_gait(model, np.array([R_OPT, R_OPT**2]))
    assert rep.iterations <= 1 and rep.converged


def test_seed_multiplier_is_cost_over_displacement():
    model = ToyModel()
    rep = find_max_efficiency_gait(model, model.initial_guess())
    assert rep.lam == pytest.approx(rep.s / rep.g, rel=1e-4)
    assert rep.efficiency == pytest.approx(1.0 / rep.lam, rel=1e-4)


def test_seed_rejects_non_positive_displacement():
    with pytest.raises(InvalidSeedError):
        find_max_efficiency_gait(ToyModel(), np.array([2.0, 4.0]))


def test_complement_basis_is_orthonormal():
    rng = np.random.default_rng(11)
    D = rng.normal(size=(2, 6))
    Z = complement_basis(6, D)
    assert Z.shape == (6, 4)
    np.testing.assert_allclose(Z.T @ Z, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(D @ Z, 0.0, atol=1e-12)
    assert complement_basis(3, np.zeros((0, 3))).shape == (3, 3)


def test_constrained_quadratic():
    rep = solve_constrained(quadratic_testbed(), 0.4, np.array([1.0, 0.3]))
    assert rep.converged
    np.testing.assert_allclose(rep.p, [0.4, 0.0], atol=1e-6)
    assert rep.lam == pytest.approx(0.8, abs=1e-5)


def test_constrained_toy_circle():
    model = ToyModel()
    g_c = circle_area(0.5)
    rep = solve_constrained(model, g_c, np.array([0.9, 0.3]))
    assert rep.converged
    np.testing.assert_allclose(rep.p, [0.5, 0.25], atol=1e-5)
    assert rep.s == pytest.approx(np.pi, abs=1e-6)
    assert classify_stationary(model, rep.p) == MINIMIZER


def test_toy_value_function_is_increasing():
    model = ToyModel()
    levels = circle_area(np.linspace(0.3, 0.75, 5))
    costs = [solve_constrained(model, g, model.initial_guess()).s for g in levels]
    assert np.all(np.diff(costs) > 0)


def test_constrained_reports_infeasible_levels():
    # g is bounded by 1 for this model
    model = FunctionalModel(lambda p: np.tanh(p[0]), lambda p: p[0] ** 2 + p[1] ** 2, 2)
    with pytest.raises(InfeasibleConstraintError):
        solve_constrained(model, 2.0, np.array([0.5, 0.0]), ConstrainedOptions(max_outer=6))


def test_three_link_seed(three_link, three_link_seed):
    rep = three_link_seed.value
    assert rep.converged and rep.g > 0
    assert rep.lam == pytest.approx(rep.s / rep.g, rel=1e-4)
    # no nearby perturbation of the seed is more efficient
    rng = np.random.default_rng(12)
    for _ in range(20):
        q = rep.p + rng.normal(scale=0.02, size=rep.p.size)
        g, s = three_link.evaluate(q)
        assert g / s <= rep.efficiency * (1 + 1e-8)


def test_three_link_half_level_matches_trace(three_link, three_link_seed, three_link_trace):
    g_half = 0.5 * three_link_seed.value.g
    state = three_link_trace.value.at_displacement(g_half)
    assert state is not None
    rep = solve_constrained(three_link, g_half, three_link_seed.value.p)
    assert rep.converged
    assert abs(state.s - rep.s) <= 0.01 * rep.s
    assert classify_stationary(three_link, rep.p) == MINIMIZER


def test_seed_options_newton_disabled_still_improves():
    model = ToyModel()
    p0 = model.initial_guess()
    rep = find_max_efficiency_gait(model, p0, SeedOptions(newton_switch=0.0, max_iter=50))
    g0, s0 = model.evaluate(p0)
    assert rep.efficiency > g0 / s0

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import lp_w1, random_sparse

from mfgchain import (
    GridMismatchError,
    Marginal,
    MeasureFlow,
    ParameterError,
    SpecError,
    build_discretization,
    build_parametric_model,
    build_polynomial_model,
    flow_distance,
    w1_marginal,
)
from mfgchain.model import convexity_modulus

D5 = build_discretization(0.2, 1.0, 0.4, 1.0)


def test_w1_diracs():
    assert w1_marginal(Marginal.dirac(D5, 0.4), Marginal.dirac(D5, 0.6)) == pytest.approx(0.2, abs=1e-15)


def test_w1_half_gap():
    uni = Marginal(np.array([0.5, 0.5, 0, 0, 0, 0]), D5.states)
    assert w1_marginal(uni, Marginal.dirac(D5, 0.0)) == pytest.approx(0.1, abs=1e-15)


def test_w1_identity():
    eta = Marginal(np.array([0.1, 0.2, 0.3, 0.1, 0.2, 0.1]), D5.states)
    assert w1_marginal(eta, eta) == 0.0


def test_w1_against_lp():
    rng = np.random.default_rng(11)
    disc = build_discretization(0.1, 1.0, 0.4, 1.0)
    for _ in range(200):
        eta, eta2 = random_sparse(rng, disc), random_sparse(rng, disc)
        assert abs(w1_marginal(eta, eta2) - lp_w1(eta, eta2)) <= 1e-12


@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1))
def test_w1_is_a_metric(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (Marginal(rng.dirichlet(np.ones(D5.n_states)), D5.states) for _ in range(3))
    assert w1_marginal(a, b) == pytest.approx(w1_marginal(b, a), abs=1e-12)
    assert w1_marginal(a, b) >= 0.0
    assert w1_marginal(a, c) <= w1_marginal(a, b) + w1_marginal(b, c) + 1e-10


def test_marginal_validation():
    with pytest.raises(ParameterError):
        Marginal(np.array([0.5, 0.6, 0, 0, 0, -0.1]), D5.states)
    with pytest.raises(ParameterError):
        Marginal(np.array([0.5, 0.4, 0, 0, 0, 0]), D5.states)


def test_marginal_mean_and_cdf():
    eta = Marginal(np.array([0.5, 0, 0, 0, 0, 0.5]), D5.states)
    assert eta.mean == pytest.approx(0.5)
    np.testing.assert_allclose(eta.cdf(), [0.5, 0.5, 0.5, 0.5, 0.5, 1.0])


def test_flow_distance_examples():
    nu = MeasureFlow.dirac(D5, 0.4)
    assert flow_distance(nu, nu) == 0.0
    assert flow_distance(nu, MeasureFlow.dirac(D5, 0.8)) == pytest.approx(0.4)
    w = np.zeros((D5.n_time + 1, D5.n_states))
    w[:, 0] = 1.0
    w2 = w.copy()
    w2[-1] = [0, 1, 0, 0, 0, 0]
    assert flow_distance(MeasureFlow(w, D5.states, D5.delta), MeasureFlow(w2, D5.states, D5.delta)) == pytest.approx(0.2)


def test_flow_lookup_floors_time():
    w = np.zeros((D5.n_time + 1, D5.n_states))
    w[:, 0] = 1.0
    w[3] = [0, 0, 1, 0, 0, 0]
    nu = MeasureFlow(w, D5.states, D5.delta)
    assert nu.at(3 * D5.delta + 0.01).mean == pytest.approx(0.4)
    assert nu.at(3 * D5.delta - 0.01).mean == 0.0


def test_flow_grid_mismatch():
    other = build_discretization(0.1, 1.0, 0.4, 1.0)
    with pytest.raises(GridMismatchError):
        MeasureFlow.dirac(D5, 0.4).check_grid(other)


def test_preset_values(preset):
    eta = Marginal.dirac(D5, 0.4)
    assert float(preset.b(0.0, eta, 0.4, 0.25)) == pytest.approx(2.55)
    assert float(preset.f(0.0, eta, 0.5, 0.25)) == pytest.approx(0.0625)
    assert float(preset.g(eta, 0.5)) == pytest.approx(0.0)
    assert preset.r(0.0) == 15.0 and preset.r(0.3) == 15.0
    assert preset.y(0.1) == 0.0
    assert preset.c_B == pytest.approx(5.25)
    assert preset.controls == (-0.75, 0.25)


def test_zero_family_model():
    model = build_parametric_model({}, [0.0, 1.0], 1.0, 1.0, 0.4)
    eta = Marginal.dirac(D5, 0.4)
    x = D5.states
    for u in model.controls:
        np.testing.assert_array_equal(model.b(0.1, eta, x, u), 0.0)
        np.testing.assert_array_equal(model.f(0.1, eta, x, u), 0.0)
    np.testing.assert_array_equal(model.g(eta, x), 0.0)
    assert model.y(0.2) == 0.0 and model.r(0.2) == 0.0


def test_family_assembly():
    coefs = {"b1": "x", "b2": "2", "a1": "t", "a2": "1", "k": "u**2", "a3": "1", "a4": "x", "a5": "1", "c1": "0.5", "c2": "3",
             "a6": "t", "a7": "2"}
    model = build_parametric_model(coefs, [-1.0, 1.0], 1.0, 1.0, 0.4)
    eta = Marginal(np.array([0, 0.5, 0, 0.5, 0, 0]), D5.states)
    # m1 = mean = 0.4, m2 = 1
    assert float(model.b(0.0, eta, 0.6, -1.0)) == pytest.approx(0.6 - 2.0)
    assert float(model.f(0.2, eta, 0.6, 1.0)) == pytest.approx(0.2 + 1.0 + (0.5 + 0.6) * 0.4)
    assert float(model.g(eta, 0.6)) == pytest.approx(4.0)
    assert model.y(0.3) == pytest.approx(0.3) and model.r(0.3) == 2.0


def test_family_rejects_unknown_coefficient():
    with pytest.raises(SpecError):
        build_parametric_model({"b3": "x"}, [0.0], 1.0, 1.0, 0.4)
    with pytest.raises(SpecError):
        build_parametric_model({"b1": "exp(x)"}, [0.0], 1.0, 1.0, 0.4)


def test_moment_model_matches_preset(preset):
    model = build_polynomial_model(
        ["x"], "2*x + 7*u", "(4*x - 5*m1)**2 + u**2", "(4*x - 5*m1)**2", "0", "15",
        [-0.75, 0.25], 1.0, 1.0, 0.4,
    )
    rng = np.random.default_rng(3)
    disc = build_discretization(0.1, 1.0, 0.4, 1.0)
    for _ in range(20):
        eta = Marginal(rng.dirichlet(np.ones(disc.n_states)), disc.states)
        t = rng.uniform(0, 0.4)
        for u in model.controls:
            np.testing.assert_allclose(model.b(t, eta, disc.states, u), preset.b(t, eta, disc.states, u), atol=1e-13)
            np.testing.assert_allclose(model.f(t, eta, disc.states, u), preset.f(t, eta, disc.states, u), atol=1e-12)
        np.testing.assert_allclose(model.g(eta, disc.states), preset.g(eta, disc.states), atol=1e-12)
    assert model.c_B == pytest.approx(5.25)


def test_control_set_validation():
    with pytest.raises(ParameterError):
        build_parametric_model({}, [], 1.0, 1.0, 0.4)
    with pytest.raises(ParameterError):
        build_parametric_model({}, [0.1, 0.1], 1.0, 1.0, 0.4)


def test_quadratic_control_cost_is_strictly_convex():
    assert convexity_modulus("u**2", [-0.75, 0.25, 1.0]) == pytest.approx(1.0)
    assert convexity_modulus("u", [-1.0, 1.0]) == pytest.approx(0.0)

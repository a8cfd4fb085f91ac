import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from toy import make_model

from mfgchain import (
    GridMismatchError,
    Marginal,
    MeasureFlow,
    NumericalError,
    Policy,
    backward_solve,
    build_discretization,
    evaluate_cost,
    hjb_residual,
    preset_section5,
    transition_probs,
)
from mfgchain.mdp import ghost_values, hamiltonian_argmin, local_moments

PRESET = preset_section5()


def test_driftless_kernel():
    model = make_model()
    disc = model.discretize(0.1)
    p_up, p_down, clamped = transition_probs(0.1, Marginal.dirac(disc, 0.5), 0.0, 0.3, model, disc)
    assert (p_up, p_down, clamped) == (0.5, 0.5, False)


def test_preset_kernel(preset):
    disc = preset.discretize(0.2)
    eta = Marginal.dirac(disc, 0.4)
    p_up, p_down, clamped = transition_probs(0.0, eta, 0.25, 0.4, preset, disc)
    assert p_up == pytest.approx(0.755, abs=1e-15)
    assert p_down == pytest.approx(0.245, abs=1e-15)
    assert not clamped


def test_preset_kernel_clamps_at_fifth(preset):
    disc = preset.discretize(0.2)
    p_up, p_down, clamped = transition_probs(0.0, Marginal.dirac(disc, 0.4), -0.75, 0.0, preset, disc)
    assert (p_up, p_down, clamped) == (0.0, 1.0, True)


def test_ghost_values():
    model = make_model(reject=15.0)
    disc = model.discretize(0.2)
    ext = ghost_values([1.0, 0.0, 0.0, 0.0, 0.0, 2.0], 0.1, model, disc)
    assert ext[-1] == pytest.approx(5.0)
    assert ext[0] == 1.0
    idle = make_model(idle=1.0)
    ext = ghost_values(np.zeros(11), 0.1, idle, idle.discretize(0.1))
    assert ext[0] == pytest.approx(0.1)


def test_constant_running_cost_gives_time_to_go():
    model = make_model(running=1.0, drift=lambda t, m, x, u: 3 * u + x, controls=(-1.0, 0.5))
    disc = model.discretize(0.1)
    table, _ = backward_solve(model, disc, MeasureFlow.dirac(disc, 0.5))
    expected = disc.T - disc.times
    np.testing.assert_allclose(table.v, np.repeat(expected[:, None], disc.n_states, axis=1), atol=1e-13)
    assert hjb_residual(table, model, disc, MeasureFlow.dirac(disc, 0.5)) <= 1e-12


def test_one_step_linear_terminal_cost():
    h = 0.1
    model = make_model(terminal=lambda m, x: np.asarray(x, dtype=float), T=h * h)
    disc = model.discretize(h)
    table, _ = backward_solve(model, disc, MeasureFlow.dirac(disc, 0.5))
    np.testing.assert_allclose(table.v[0, 1:-1], disc.states[1:-1], atol=1e-15)
    assert table.v[0, 0] == pytest.approx(h / 2)
    # at L the ghost value is V(L) itself, so V = (L + (L - h)) / 2
    assert table.v[0, -1] == pytest.approx(1.0 - h / 2)


def test_ties_pick_smallest_control():
    model = make_model(controls=(1.0, -1.0, 0.0))
    disc = model.discretize(0.2)
    _, policy = backward_solve(model, disc, MeasureFlow.dirac(disc, 0.4))
    assert np.all(policy.theta == -1.0)


def brute_force_tables(h, nu_mean):
    """Preset backward recursion written out cell by cell."""
    L, T, controls = 1.0, 0.4, (-0.75, 0.25)
    n, steps, dt = int(round(L / h)) + 1, int(round(T / (h * h))), h * h
    xs = [k * h for k in range(n)]
    v = [[0.0] * n for _ in range(steps + 1)]
    arg = [[0.0] * n for _ in range(steps)]
    v[steps] = [(4 * x - 5 * nu_mean) ** 2 for x in xs]
    for j in range(steps - 1, -1, -1):
        nxt = v[j + 1]
        for k, x in enumerate(xs):
            up = nxt[k + 1] if k + 1 < n else nxt[k] + 15.0 * h
            down = nxt[k - 1] if k > 0 else nxt[k]
            best = None
            for u in controls:
                p = min(1.0, max(0.0, (h * (2 * x + 7 * u) + 1.0) / 2.0))
                q = dt * ((4 * x - 5 * nu_mean) ** 2 + u * u) + p * up + (1 - p) * down
                if best is None or q < best[0]:
                    best = (q, u)
            v[j][k], arg[j][k] = best
    return np.array(v), np.array(arg)


@pytest.mark.parametrize("h", [0.2, 0.1])
def test_against_brute_force_recursion(preset, h):
    disc = preset.discretize(h)
    x0 = 0.4
    table, policy = backward_solve(preset, disc, MeasureFlow.dirac(disc, x0))
    v, arg = brute_force_tables(h, x0)
    np.testing.assert_allclose(table.v, v, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(policy.theta, arg)
    assert np.isfinite(table.max_abs_grad) and table.max_abs_grad < 1e6
    if h == 0.2:
        assert table.clamp_count > 0


def test_optimal_among_all_policies():
    model = make_model(
        drift=lambda t, m, x, u: np.full(np.shape(x), u),
        running=lambda t, m, x, u: (np.asarray(x) - 0.5) ** 2 + 0.1 * u * u,
        terminal=lambda m, x: np.asarray(x, dtype=float),
        idle=1.0,
        reject=2.0,
        controls=(-1.0, 1.0),
        L=1.0,
        T=0.5,
    )
    disc = model.discretize(0.5)
    nu = MeasureFlow.dirac(disc, 0.5)
    table, best = backward_solve(model, disc, nu)
    shape = (disc.n_time, disc.n_states)
    for x0 in disc.states:
        start = Marginal.dirac(disc, x0)
        costs = [
            evaluate_cost(model, disc, nu, Policy(np.array(bits).reshape(shape), model.controls), start)
            for bits in itertools.product((0, 1), repeat=shape[0] * shape[1])
        ]
        assert min(costs) == pytest.approx(table.value_at(disc, x0), abs=1e-12)
        assert evaluate_cost(model, disc, nu, best, start) == pytest.approx(min(costs), abs=1e-12)


def test_hjb_residual_preset(solved_h01, preset):
    disc, nu, table, _ = solved_h01
    assert table.clamp_count == 0
    assert hjb_residual(table, preset, disc, nu) <= 1e-10


def test_hjb_residual_with_clamping(preset):
    disc = preset.discretize(0.2)
    nu = MeasureFlow.dirac(disc, 0.4)
    table, _ = backward_solve(preset, disc, nu)
    assert table.clamp_count > 0
    assert hjb_residual(table, preset, disc, nu) <= 1e-10


def test_feedback_policy_equivalence(solved_h01, preset):
    disc, nu, table, policy = solved_h01
    alt = hamiltonian_argmin(table, preset, disc, nu)
    assert np.mean(alt.index == policy.index) > 0.99
    disagree = np.argwhere(alt.index != policy.index)
    for j, k in disagree:
        m = preset.measure_features(nu[j])
        x = disc.states[k]
        pre = [float(preset.running_cost(j * disc.delta, m, x, u) + preset.drift(j * disc.delta, m, x, u) * table.grad[j, k])
               for u in preset.controls]
        assert abs(pre[0] - pre[1]) <= 1e-10 * (1 + max(map(abs, pre)))


@settings(max_examples=300)
@given(st.integers(0, 39), st.integers(0, 10), st.sampled_from([-0.75, 0.25]), st.integers(0, 2**32 - 1))
def test_local_consistency(j, k, u, seed):
    model = PRESET
    disc = build_discretization(0.1, 1.0, 0.4, 1.0, c_B=5.25)
    eta = Marginal(np.random.default_rng(seed).dirichlet(np.ones(disc.n_states)), disc.states)
    t, x = j * disc.delta, disc.states[k]
    p_up, p_down, clamped = transition_probs(t, eta, u, x, model, disc)
    assert not clamped
    b = float(model.b(t, eta, x, u))
    mean, var = local_moments(p_up, disc)
    assert mean == pytest.approx(b * disc.delta, abs=1e-12)
    assert var == pytest.approx(disc.sigma**2 * disc.delta - (b * disc.delta) ** 2, abs=1e-12)
    assert p_up + p_down == 1.0


def test_gradient_blow_up_raises():
    model = make_model(terminal=lambda m, x: 1e9 * np.asarray(x, dtype=float))
    disc = model.discretize(0.1)
    with pytest.raises(NumericalError):
        backward_solve(model, disc, MeasureFlow.dirac(disc, 0.5))


def test_flow_on_other_grid_rejected(preset):
    nu = MeasureFlow.dirac(preset.discretize(0.2), 0.4)
    with pytest.raises(GridMismatchError):
        backward_solve(preset, preset.discretize(0.1), nu)

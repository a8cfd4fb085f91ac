"""Acceptance criteria for the reflected queue-control game.

Each test prints one ``PASS``/``FAIL`` line; the terminal summary repeats
them all. Run ``python tests/test_acceptance.py`` for the lines alone.
"""

import time

import numpy as np
import pytest
from oracles import lp_w1, random_sparse
from toy import make_model

from mfgchain import (
    Marginal,
    MeasureFlow,
    RunConfig,
    backward_solve,
    coupled_transition,
    estimate_contraction,
    hjb_residual,
    picard_flow,
    preset_section5,
    propagate_marginals,
    simulate_path,
    simulate_paths,
    solve_from_dirac,
    solve_skorohod,
    transition_probs,
    value_identity_gaps,
    w1_marginal,
)
from mfgchain.mdp import local_moments
from mfgchain.runs import run_check

H_LIST = (1 / 5, 1 / 10, 1 / 15, 1 / 20, 1 / 25)
X0 = 0.5
SEED = 2024

RESULTS = []


def verdict(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def model():
    return preset_section5()


@pytest.fixture(scope="module")
def picard_runs(model):
    t0 = time.perf_counter()
    runs = {h: solve_from_dirac(model, h, X0, max_iters=15, stop_at_threshold=False) for h in H_LIST}
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def optimal_h01(picard_runs):
    """Solution flow at h=0.1 with its value table and optimal policy."""
    report = picard_runs[0][1 / 10]
    return report.solution, report.solution_table, report.solution_policy


@pytest.fixture(scope="module")
def paths_h01(model, optimal_h01):
    nu, _, policy = optimal_h01
    disc = model.discretize(0.1)
    t0 = time.perf_counter()
    seeds = np.random.SeedSequence(SEED).spawn(1000)
    paths = [simulate_path(s, model, disc, nu, policy, X0) for s in seeds]
    return paths, time.perf_counter() - t0


def test_01_local_consistency(model):
    disc = model.discretize(0.1)
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        t = rng.integers(disc.n_time) * disc.delta
        eta = Marginal(rng.dirichlet(np.ones(disc.n_states)), disc.states)
        x = disc.states[rng.integers(disc.n_states)]
        u = model.controls[rng.integers(len(model.controls))]
        p_up, _, _ = transition_probs(t, eta, u, x, model, disc)
        b = float(model.b(t, eta, x, u))
        mean, var = local_moments(p_up, disc)
        worst = max(worst, abs(mean - b * disc.delta), abs(var - (disc.sigma**2 * disc.delta - (b * disc.delta) ** 2)))
    elapsed = time.perf_counter() - t0
    verdict(1, "local consistency", worst <= 1e-12 and elapsed < 1.0, f"max error {worst:.2e}, {elapsed:.2f}s")


def test_02_hjb_residual(model):
    disc = model.discretize(0.1)
    t0 = time.perf_counter()
    worst = 0.0
    for nu in (MeasureFlow.dirac(disc, X0), picard_flow(model, disc, X0, 1)):
        table, _ = backward_solve(model, disc, nu)
        worst = max(worst, hjb_residual(table, model, disc, nu))
    elapsed = time.perf_counter() - t0
    verdict(2, "HJB residual", worst <= 1e-10 and elapsed < 1.0, f"max residual {worst:.2e}, {elapsed:.2f}s")


def test_03_pathwise_value_identity(model, optimal_h01, paths_h01):
    nu, table, policy = optimal_h01
    paths, sim_seconds = paths_h01
    disc = model.discretize(0.1)
    t0 = time.perf_counter()
    gaps = np.abs(value_identity_gaps(paths, table, model, disc, nu, policy))
    elapsed = sim_seconds + time.perf_counter() - t0
    verdict(3, "pathwise value identity", gaps.max() <= 1e-9 and elapsed < 5.0,
            f"max gap {gaps.max():.2e} over {len(paths)} paths, {elapsed:.2f}s")


def test_04_skorohod_representation(model, paths_h01):
    paths, _ = paths_h01
    disc = model.discretize(0.1)
    worst = 0.0
    for p in paths:
        phi, y, r = solve_skorohod(p.x0 + p.at_nodes("F") + disc.sigma * p.at_nodes("B"), disc.L)
        worst = max(worst, *(float(np.abs(a - b).max()) for a, b in
                             ((phi, p.at_nodes("states")), (y, p.at_nodes("Y")), (r, p.at_nodes("R")))))
    verdict(4, "Skorohod representation", worst <= 1e-10, f"max error {worst:.2e} over {len(paths)} paths")


def test_05_coupling_marginal_laws():
    rng = np.random.default_rng(SEED)
    rate = make_model(drift=lambda t, m, x, u: np.full(np.shape(x), u), controls=(0.0,))
    worst = 0.0
    for h in (1 / 10, 1 / 5):
        disc = rate.discretize(h)
        eta = Marginal.dirac(disc, X0)
        for b1, b2 in rng.uniform(-1.5 / h, 1.5 / h, (5000, 2)):
            p1, q1, _ = transition_probs(0.0, eta, b1, X0, rate, disc)
            p2, q2, _ = transition_probs(0.0, eta, b2, X0, rate, disc)
            uu, ud, du, dd, _ = coupled_transition(b1, b2, disc)
            worst = max(worst, abs(uu + ud - p1), abs(du + dd - q1), abs(uu + du - p2), abs(ud + dd - q2))
    verdict(5, "coupling marginal laws", worst <= 1e-14, f"max error {worst:.2e} over 10000 drift pairs")


def test_06_wasserstein_oracle(model):
    disc = model.discretize(0.1)
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(200):
        eta, eta2 = random_sparse(rng, disc), random_sparse(rng, disc)
        worst = max(worst, abs(w1_marginal(eta, eta2) - lp_w1(eta, eta2)))
    verdict(6, "W1 vs transport LP", worst <= 1e-12, f"max disagreement {worst:.2e} over 200 pairs")


def test_07_picard_reproduction(picard_runs):
    runs, elapsed = picard_runs
    problems = []
    for h, rep in runs.items():
        d = np.asarray(rep.distances)
        if rep.n_iters != 15:
            problems.append(f"h={h:.4g}: {rep.n_iters} iterations")
        if np.any(d[2:] > d[1]):
            problems.append(f"h={h:.4g}: d_m > d_2")
        if any(q >= 1 for q in rep.ratios[1:]):
            problems.append(f"h={h:.4g}: q_hat >= 1")
    h = 1 / 25
    final = runs[h].distances[-1]
    if final**2 > 4 * h * h:
        problems.append(f"h=1/25: final d^2 {final**2:.3g} > 4h^2")
    if elapsed >= 10.0:
        problems.append(f"runtime {elapsed:.2f}s")
    max_q = max(max(rep.ratios[1:], default=0.0) for rep in runs.values())
    verdict(7, "Picard reproduction", not problems,
            "; ".join(problems) or f"15 maps at 5 grids in {elapsed:.2f}s, max q_hat {max_q:.3f}")


def test_08_refinement_trend(picard_runs):
    runs, _ = picard_runs
    values = [runs[h].final_value for h in H_LIST]
    gaps = np.abs(np.diff(values))
    # a gap counts when it does not exceed its predecessor; the first has none
    holding = 1 + int(np.sum(gaps[1:] <= gaps[:-1]))
    verdict(8, "h-refinement trend", holding >= 3,
            f"V = {', '.join(f'{v:.4f}' for v in values)}; gaps {', '.join(f'{g:.3f}' for g in gaps)}; {holding}/4 hold")


def test_09_means_increase(model, picard_runs):
    runs, _ = picard_runs
    disc = model.discretize(1 / 25)
    means = runs[1 / 25].solution.means()
    tail = means[disc.times >= 2 * disc.T / 3 - 1e-12]
    steps = np.diff(tail)
    verdict(9, "means increase over last third", bool(np.all(steps > 0)),
            f"{len(tail)} nodes, mean {tail[0]:.4f} -> {tail[-1]:.4f}, smallest step {steps.min():.2e}")


def test_10_monte_carlo_vs_propagation(model, optimal_h01):
    nu, _, policy = optimal_h01
    disc = model.discretize(0.1)
    t0 = time.perf_counter()
    exact = propagate_marginals(model, disc, nu, policy, Marginal.dirac(disc, X0)).flow[disc.n_time].mean
    batch = simulate_paths(SEED, 100_000, model, disc, nu, policy, X0)
    end = batch.X[:, -1]
    se = end.std(ddof=1) / np.sqrt(end.size)
    elapsed = time.perf_counter() - t0
    z = abs(end.mean() - exact) / se
    verdict(10, "Monte Carlo vs propagation", z <= 3 and elapsed < 10.0,
            f"E X(T) exact {exact:.5f}, sample {end.mean():.5f} ({z:.2f} SE), {elapsed:.2f}s")


def test_11_almost_contraction(model):
    disc = model.discretize(0.1)
    t0 = time.perf_counter()
    nu = MeasureFlow.dirac(disc, X0)
    nu2 = picard_flow(model, disc, X0, 1)
    est = estimate_contraction(SEED, 100_000, model, disc, nu, nu2, X0)
    elapsed = time.perf_counter() - t0
    verdict(11, "almost-contraction", est.q_hat_ci_high < 1.0 and elapsed < 30.0,
            f"q_hat {est.q_hat:.4f}, 95% upper {est.q_hat_ci_high:.4f}, {elapsed:.2f}s")


def test_12_positivity_diagnostic():
    _, report = run_check(RunConfig(h_list=(1 / 5, 1 / 10), seed=SEED, check_paths=200))
    clamp = {h: next(r for r in results if r.name == "no clamping") for h, results in report}
    ok = not clamp[1 / 5].passed and clamp[1 / 10].passed
    verdict(12, "positivity diagnostic", ok, f"h=1/5: {clamp[1 / 5].detail}; h=1/10: {clamp[1 / 10].detail}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))

"""Invariant suite behind ``mfgchain check``.

Every check returns a :class:`CheckResult`; none of them raise on a failed
property, so one report covers the whole suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coupling import coupled_transition
from .fixedpoint import picard_flow
from .forward import evaluate_cost, simulate_path, value_identity_gaps
from .grid import Discretization
from .mdp import GRAD_SANITY_BOUND, backward_solve, hamiltonian_argmin, hjb_residual, kernel_up, local_moments
from .model import Marginal, MeasureFlow, MfgModel, w1_marginal
from .skorohod import solve_skorohod

MOMENT_TOL = 1e-12
HJB_TOL = 1e-10
IDENTITY_TOL = 1e-9
SKOROHOD_TOL = 1e-10
COUPLING_TOL = 1e-14
W1_TOL = 1e-12


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _random_marginal(rng, disc: Discretization, max_atoms: int | None = None) -> Marginal:
    n = disc.n_states
    w = np.zeros(n)
    if max_atoms is None:
        w[:] = rng.dirichlet(np.ones(n))
    else:
        atoms = rng.choice(n, size=rng.integers(1, min(max_atoms, n) + 1), replace=False)
        w[atoms] = rng.dirichlet(np.ones(len(atoms)))
    return Marginal(w / w.sum(), disc.states)


def check_local_consistency(model: MfgModel, disc: Discretization, rng, n_draws: int = 1000) -> CheckResult:
    """One-step mean b*delta and variance sigma^2*delta - (b*delta)^2 on random (t, eta, x, u)."""
    worst = 0.0
    clipped = 0
    for _ in range(n_draws):
        j = int(rng.integers(disc.n_time))
        k = int(rng.integers(disc.n_states))
        u = model.controls[int(rng.integers(len(model.controls)))]
        eta = _random_marginal(rng, disc)
        b = float(np.asarray(model.b(j * disc.delta, eta, disc.states[k : k + 1], u)).reshape(-1)[0])
        p, clip = kernel_up(b, disc)
        if clip:
            clipped += 1
            continue
        mean, var = local_moments(p, disc)
        bd = b * disc.delta
        worst = max(worst, abs(float(mean) - bd), abs(float(var) - (disc.sigma**2 * disc.delta - bd * bd)))
    detail = f"max moment error {worst:.3g} over {n_draws - clipped} draws"
    if clipped:
        detail += f" ({clipped} clipped draws skipped)"
    return CheckResult("local consistency", worst <= MOMENT_TOL, detail)


def check_kernel_normalization(model: MfgModel, disc: Discretization, nu: MeasureFlow) -> CheckResult:
    worst = 0.0
    for j in range(disc.n_time):
        m = model.measure_features(nu[j])
        for u in model.controls:
            drift = np.broadcast_to(model.drift(j * disc.delta, m, disc.states, u), (disc.n_states,))
            p, _ = kernel_up(drift, disc)
            q = 1.0 - p
            bad = np.minimum(p, q).min()
            worst = max(worst, float(np.abs(p + q - 1.0).max()), -float(bad))
    return CheckResult("kernel normalization", worst <= COUPLING_TOL, f"max violation {worst:.3g}")


def check_no_clamping(model: MfgModel, disc: Discretization, nu: MeasureFlow) -> CheckResult:
    count = 0
    for j in range(disc.n_time):
        m = model.measure_features(nu[j])
        for u in model.controls:
            drift = np.broadcast_to(model.drift(j * disc.delta, m, disc.states, u), (disc.n_states,))
            count += int(kernel_up(drift, disc)[1].sum())
    bound = disc.sigma**2 / disc.c_B if disc.c_B else float("inf")
    detail = f"{count} clipped kernel evaluations (h={disc.h:.6g}, sigma^2/c_B={bound:.6g})"
    return CheckResult("no clamping", count == 0, detail)


def check_hjb(table, model: MfgModel, disc: Discretization, nu: MeasureFlow) -> CheckResult:
    res = hjb_residual(table, model, disc, nu)
    return CheckResult("HJB residual", res <= HJB_TOL, f"max residual {res:.3g}")


def check_feedback(table, policy, model: MfgModel, disc: Discretization, nu: MeasureFlow) -> CheckResult:
    """The DP argmin and the pre-Hamiltonian argmin pick equally good controls."""
    alt = hamiltonian_argmin(table, model, disc, nu)
    worst = 0.0
    for j in range(disc.n_time):
        m = model.measure_features(nu[j])
        cols = np.arange(disc.n_states)
        pre = []
        for u in model.controls:
            drift = np.broadcast_to(model.drift(j * disc.delta, m, disc.states, u), (disc.n_states,))
            cost = np.broadcast_to(model.running_cost(j * disc.delta, m, disc.states, u), (disc.n_states,))
            p, _ = kernel_up(drift, disc)
            pre.append(cost + (2.0 * p - 1.0) * disc.h / disc.delta * table.grad[j])
        pre = np.asarray(pre)
        gap = np.abs(pre[policy.index[j], cols] - pre[alt.index[j], cols])
        scale = 1.0 + np.abs(pre).max(axis=0)
        worst = max(worst, float((gap / scale).max()))
    agree = float(np.mean(policy.index == alt.index))
    return CheckResult("feedback policy", worst <= 1e-10, f"pre-Hamiltonian gap {worst:.3g}, {agree:.1%} identical")


def check_gradient_bound(table) -> CheckResult:
    c_d = table.max_abs_grad
    ok = bool(np.isfinite(c_d)) and c_d <= GRAD_SANITY_BOUND
    return CheckResult("gradient bound", ok, f"empirical c_d = {c_d:.6g}")


def check_dp_cost(table, policy, model: MfgModel, disc: Discretization, nu: MeasureFlow, x0: float) -> CheckResult:
    """V(0, x0) equals the expected cost of the optimal policy computed forward."""
    v = table.value_at(disc, x0)
    cost = evaluate_cost(model, disc, nu, policy, Marginal.dirac(disc, x0))
    err = abs(v - cost)
    return CheckResult("value equals forward cost", err <= IDENTITY_TOL * max(1.0, abs(v)), f"V={v:.10g}, error {err:.3g}")


def check_skorohod_identities(rng, L: float, n_paths: int = 200, n_steps: int = 60) -> CheckResult:
    worst = 0.0
    for _ in range(n_paths):
        psi = np.cumsum(np.concatenate(([rng.uniform(0, L)], rng.uniform(-L / 2, L / 2, n_steps))))
        phi, z1, z2 = solve_skorohod(psi, L)
        dz1, dz2 = np.diff(z1), np.diff(z2)
        worst = max(
            worst,
            float(np.abs(phi - (psi + z1 - z2)).max()),
            float(max(0.0, -phi.min(), phi.max() - L)),
            float(max(0.0, -dz1.min(), -dz2.min())),
            float(np.abs(dz1 * phi[1:]).max()),
            float(np.abs(dz2 * (L - phi[1:])).max()),
        )
    return CheckResult("Skorohod identities", worst <= SKOROHOD_TOL * max(1.0, L), f"max violation {worst:.3g}")


def check_representation(paths, disc: Discretization) -> CheckResult:
    worst = 0.0
    for p in paths:
        psi = p.x0 + p.at_nodes("F") + disc.sigma * p.at_nodes("B")
        phi, z1, z2 = solve_skorohod(psi, disc.L)
        worst = max(
            worst,
            float(np.abs(phi - p.at_nodes("states")).max()),
            float(np.abs(z1 - p.at_nodes("Y")).max()),
            float(np.abs(z2 - p.at_nodes("R")).max()),
        )
    return CheckResult("Skorohod representation", worst <= SKOROHOD_TOL, f"max error {worst:.3g} over {len(paths)} paths")


def check_pathwise_identity(paths, table, model, disc, nu, policy) -> CheckResult:
    gaps = np.abs(value_identity_gaps(paths, table, model, disc, nu, policy))
    return CheckResult("pathwise value identity", gaps.max() <= IDENTITY_TOL, f"max gap {gaps.max():.3g} over {len(gaps)} paths")


def check_coupling_marginals(disc: Discretization, rng, n_pairs: int = 10_000) -> CheckResult:
    span = 1.5 * max(disc.c_B or 0.0, disc.sigma**2 / disc.h)
    b1 = rng.uniform(-span, span, n_pairs)
    b2 = rng.uniform(-span, span, n_pairs)
    probs = coupled_transition(b1, b2, disc)
    p1, _ = kernel_up(b1, disc)
    p2, _ = kernel_up(b2, disc)
    table = np.stack(probs[:4])
    worst = max(
        float(np.abs(probs.up_up + probs.up_down - p1).max()),
        float(np.abs(probs.down_up + probs.down_down - (1.0 - p1)).max()),
        float(np.abs(probs.up_up + probs.down_up - p2).max()),
        float(np.abs(probs.up_down + probs.down_down - (1.0 - p2)).max()),
        float(max(0.0, -table.min())),
    )
    return CheckResult("coupling marginal laws", worst <= COUPLING_TOL, f"max error {worst:.3g} over {n_pairs} pairs")


def monotone_transport_cost(eta: Marginal, eta2: Marginal) -> float:
    """W1 by greedily matching sorted atoms, the optimal plan on the line."""
    a = [[x, w] for x, w in zip(eta.states, eta.weights) if w > 0]
    b = [[x, w] for x, w in zip(eta2.states, eta2.weights) if w > 0]
    i = j = 0
    cost = 0.0
    while i < len(a) and j < len(b):
        moved = min(a[i][1], b[j][1])
        cost += moved * abs(a[i][0] - b[j][0])
        a[i][1] -= moved
        b[j][1] -= moved
        if a[i][1] <= 0:
            i += 1
        if b[j][1] <= 0:
            j += 1
    return cost


def check_w1_oracle(disc: Discretization, rng, n_pairs: int = 200) -> CheckResult:
    worst = 0.0
    for _ in range(n_pairs):
        eta = _random_marginal(rng, disc, max_atoms=5)
        eta2 = _random_marginal(rng, disc, max_atoms=5)
        worst = max(worst, abs(w1_marginal(eta, eta2) - monotone_transport_cost(eta, eta2)))
    return CheckResult("W1 oracle", worst <= W1_TOL, f"max disagreement {worst:.3g} over {n_pairs} pairs")


def run_suite(model: MfgModel, disc: Discretization, x0: float, seed: int, n_paths: int = 1000) -> list:
    """All checks for one discretization; the frozen flow is the first Picard image."""
    ss = np.random.SeedSequence(seed)
    rng_local, rng_sk, rng_cp, rng_w1, path_ss = [np.random.default_rng(s) for s in ss.spawn(4)] + ss.spawn(1)
    nu = picard_flow(model, disc, x0, 1)
    table, policy = backward_solve(model, disc, nu)
    paths = [simulate_path(s, model, disc, nu, policy, x0) for s in path_ss.spawn(n_paths)]
    results = [
        check_local_consistency(model, disc, rng_local),
        check_kernel_normalization(model, disc, nu),
        check_no_clamping(model, disc, nu),
        check_hjb(table, model, disc, nu),
        check_feedback(table, policy, model, disc, nu),
        check_gradient_bound(table),
        check_dp_cost(table, policy, model, disc, nu, x0),
        check_skorohod_identities(rng_sk, disc.L),
        check_representation(paths, disc),
        check_pathwise_identity(paths, table, model, disc, nu, policy),
        check_coupling_marginals(disc, rng_cp),
        check_w1_oracle(disc, rng_w1),
    ]
    return results

"""Forward evolution of the controlled chain under a feedback policy.

Marginals are pushed forward exactly. Mass that lands on a ghost state is
returned to the boundary within the same time step, and the matching
expected idleness (at 0) or rejection (at L) grows by h times that mass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError
from .grid import Discretization
from .mdp import Policy, ValueTable, kernel_up
from .model import Marginal, MeasureFlow, MfgModel


@dataclass(frozen=True)
class ForwardResult:
    flow: MeasureFlow
    expected_Y: np.ndarray
    expected_R: np.ndarray
    clamp_count: int = 0

    @property
    def mean_flow(self) -> np.ndarray:
        return self.flow.means()


def _check(disc: Discretization, nu: MeasureFlow, policy: Policy, initial: Marginal | None = None):
    nu.check_grid(disc)
    if policy.index.shape != (disc.n_time, disc.n_states):
        raise GridMismatchError("policy does not match the discretization")
    if initial is not None and initial.weights.shape != (disc.n_states,):
        raise GridMismatchError("initial marginal does not match the discretization")


def policy_drift(model: MfgModel, disc: Discretization, nu: MeasureFlow, policy: Policy) -> np.ndarray:
    """Drift b(t_j, nu(t_j), x_k, theta[j, k]) for every node j < I and state k."""
    theta = policy.theta
    out = np.empty((disc.n_time, disc.n_states))
    for j in range(disc.n_time):
        m = model.measure_features(nu[j])
        out[j] = np.broadcast_to(model.drift(j * disc.delta, m, disc.states, theta[j]), (disc.n_states,))
    return out


def propagate_marginals(
    model: MfgModel,
    disc: Discretization,
    nu_in: MeasureFlow,
    policy: Policy,
    initial: Marginal,
) -> ForwardResult:
    _check(disc, nu_in, policy, initial)
    I, h = disc.n_time, disc.h
    p_all, clip = kernel_up(policy_drift(model, disc, nu_in, policy), disc)
    mu = np.empty((I + 1, disc.n_states))
    ey = np.zeros(I + 1)
    er = np.zeros(I + 1)
    mu[0] = initial.weights
    for j in range(I):
        cur, p = mu[j], p_all[j]
        up = cur * p
        down = cur * (1.0 - p)
        nxt = np.zeros_like(cur)
        nxt[1:] += up[:-1]
        nxt[:-1] += down[1:]
        nxt[0] += down[0]
        nxt[-1] += up[-1]
        mu[j + 1] = nxt
        ey[j + 1] = ey[j] + h * down[0]
        er[j + 1] = er[j] + h * up[-1]
    flow = MeasureFlow(mu, disc.states, disc.delta)
    return ForwardResult(flow, ey, er, clamp_count=int(clip.sum()))


def evaluate_cost(
    model: MfgModel,
    disc: Discretization,
    nu: MeasureFlow,
    policy: Policy,
    initial: Marginal,
) -> float:
    """Expected total cost of ``policy`` started from ``initial`` against the flow ``nu``."""
    res = propagate_marginals(model, disc, nu, policy, initial)
    mu = res.flow.weights
    theta = policy.theta
    total = 0.0
    for j in range(disc.n_time):
        t = j * disc.delta
        m = model.measure_features(nu[j])
        f = np.broadcast_to(model.running_cost(t, m, disc.states, theta[j]), (disc.n_states,))
        total += disc.delta * float(mu[j] @ f)
        t_next = (j + 1) * disc.delta
        total += model.y(t_next) * (res.expected_Y[j + 1] - res.expected_Y[j])
        total += model.r(t_next) * (res.expected_R[j + 1] - res.expected_R[j])
    g = np.broadcast_to(model.terminal_cost(model.measure_features(nu[disc.n_time]), disc.states), (disc.n_states,))
    total += float(mu[disc.n_time] @ g)
    return total


# --------------------------------------------------------------------------
# path simulation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SimulatedPath:
    """Step-level record of one chain path, ghost visits included.

    Index n holds the time instant t_n, the state X_n, the control used for
    step n (NaN on ghost states and on the final record), and the processes
    F, B, Y, R accumulated over steps 0..n-1. ``node_index[j]`` is the last
    step whose time instant equals j * delta.
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    F: np.ndarray
    B: np.ndarray
    Y: np.ndarray
    R: np.ndarray
    node_index: np.ndarray
    state_index: np.ndarray

    def at_nodes(self, name: str) -> np.ndarray:
        return getattr(self, name)[self.node_index]

    @property
    def x0(self) -> float:
        return float(self.states[0])


def simulate_path(
    rng_seed,
    model: MfgModel,
    disc: Discretization,
    nu: MeasureFlow,
    policy: Policy,
    x0: float,
) -> SimulatedPath:
    """Sample one path of the chain, stepping through ghost states explicitly."""
    _check(disc, nu, policy)
    rng = np.random.default_rng(rng_seed)
    h, sigma, I, top = disc.h, disc.sigma, disc.n_time, disc.n_states - 1
    p_all, _ = kernel_up(policy_drift(model, disc, nu, policy), disc)
    theta = policy.theta

    k = disc.state_index(x0)
    j = 0
    F = B = Y = R = 0.0
    times, states, controls = [0.0], [k], []
    rec_F, rec_B, rec_Y, rec_R = [0.0], [0.0], [0.0], [0.0]
    node_index = np.zeros(I + 1, dtype=int)
    while j < I or k < 0 or k > top:
        if k < 0:
            controls.append(np.nan)
            k, Y = 0, Y + h
        elif k > top:
            controls.append(np.nan)
            k, R = top, R + h
        else:
            p = p_all[j, k]
            controls.append(theta[j, k])
            mean = (2.0 * p - 1.0) * h
            step = h if rng.random() < p else -h
            F += mean
            B += (step - mean) / sigma
            k += 1 if step > 0 else -1
            j += 1
        times.append(j * disc.delta)
        states.append(k)
        rec_F.append(F)
        rec_B.append(B)
        rec_Y.append(Y)
        rec_R.append(R)
        node_index[j] = len(states) - 1
    controls.append(np.nan)
    with_ghosts = np.concatenate(([disc.ghost_low], disc.states, [disc.ghost_high]))
    states = np.asarray(states)
    return SimulatedPath(
        times=np.asarray(times),
        states=with_ghosts[states + 1],
        controls=np.asarray(controls),
        F=np.asarray(rec_F),
        B=np.asarray(rec_B),
        Y=np.asarray(rec_Y),
        R=np.asarray(rec_R),
        node_index=node_index,
        state_index=states,
    )


@dataclass(frozen=True)
class PathBatch:
    """Node-level samples of many paths; arrays have shape (n_paths, n_time + 1)."""

    X: np.ndarray
    Y: np.ndarray
    R: np.ndarray
    F: np.ndarray
    B: np.ndarray
    state_index: np.ndarray


def simulate_paths(
    rng_seed,
    n_paths: int,
    model: MfgModel,
    disc: Discretization,
    nu: MeasureFlow,
    policy: Policy,
    x0: float,
) -> PathBatch:
    """Vectorised sampler: reflections are folded into the step that caused them."""
    _check(disc, nu, policy)
    rng = np.random.default_rng(rng_seed)
    h, sigma, I, top = disc.h, disc.sigma, disc.n_time, disc.n_states - 1
    p_all, _ = kernel_up(policy_drift(model, disc, nu, policy), disc)
    k = np.full((n_paths, I + 1), disc.state_index(x0), dtype=int)
    Y = np.zeros((n_paths, I + 1))
    R = np.zeros_like(Y)
    F = np.zeros_like(Y)
    B = np.zeros_like(Y)
    for j in range(I):
        p = p_all[j, k[:, j]]
        up = rng.random(n_paths) < p
        mean = (2.0 * p - 1.0) * h
        step = np.where(up, h, -h)
        F[:, j + 1] = F[:, j] + mean
        B[:, j + 1] = B[:, j] + (step - mean) / sigma
        z = k[:, j] + np.where(up, 1, -1)
        Y[:, j + 1] = Y[:, j] + h * (z < 0)
        R[:, j + 1] = R[:, j] + h * (z > top)
        k[:, j + 1] = np.clip(z, 0, top)
    return PathBatch(X=disc.states[k], Y=Y, R=R, F=F, B=B, state_index=k)


def policy_running_cost(model: MfgModel, disc: Discretization, nu: MeasureFlow, policy: Policy) -> np.ndarray:
    """Running cost f(t_j, nu(t_j), x_k, theta[j, k]) on the (n_time, n_states) grid."""
    theta = policy.theta
    out = np.empty((disc.n_time, disc.n_states))
    for j in range(disc.n_time):
        m = model.measure_features(nu[j])
        out[j] = np.broadcast_to(model.running_cost(j * disc.delta, m, disc.states, theta[j]), (disc.n_states,))
    return out


def value_identity_gaps(
    paths,
    table: ValueTable,
    model: MfgModel,
    disc: Discretization,
    nu: MeasureFlow,
    policy: Policy,
) -> np.ndarray:
    """Per-path difference between the two sides of the pathwise value identity.

    Left: V(0, X(0)) + sigma * sum_s D_x V(s, X(s)) (B(s + delta) - B(s)).
    Right: g(X(T)) + sum f delta + sum y dY + sum r dR along the path.

    ``paths`` is a :class:`PathBatch` or a sequence of :class:`SimulatedPath`.
    """
    if isinstance(paths, PathBatch):
        k, B, Y, R = paths.state_index, paths.B, paths.Y, paths.R
    else:
        paths = list(paths)
        k = np.stack([p.at_nodes("state_index") for p in paths])
        B, Y, R = (np.stack([p.at_nodes(name) for p in paths]) for name in ("B", "Y", "R"))
    I = disc.n_time
    cols = np.arange(I)
    f = policy_running_cost(model, disc, nu, policy)
    t_next = (cols + 1) * disc.delta
    y = np.array([model.y(t) for t in t_next])
    r = np.array([model.r(t) for t in t_next])
    m_T = model.measure_features(nu[I])
    g = np.broadcast_to(model.terminal_cost(m_T, disc.states), (disc.n_states,))

    lhs = table.v[0, k[:, 0]] + disc.sigma * np.sum(table.grad[cols, k[:, :-1]] * np.diff(B, axis=1), axis=1)
    rhs = (
        g[k[:, -1]]
        + disc.delta * np.sum(f[cols, k[:, :-1]], axis=1)
        + np.diff(Y, axis=1) @ y
        + np.diff(R, axis=1) @ r
    )
    return lhs - rhs

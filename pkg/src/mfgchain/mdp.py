"""Backward dynamic programming for the chain with a frozen measure flow.

Rate-control kernel from an interior state x under control u::

    p_up = (h b + sigma^2) / (2 sigma^2),   p_down = 1 - p_up

Probabilities outside [0, 1] (possible when h >= sigma^2 / c_B) are clipped
and counted. Ghost states -h and L+h reflect instantly and cost y h and r h.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .grid import Discretization
from .model import Marginal, MeasureFlow, MfgModel

GRAD_SANITY_BOUND = 1e6


def kernel_up(drift, disc: Discretization) -> tuple[np.ndarray, np.ndarray]:
    """Clipped up-probabilities and a mask of the entries that needed clipping."""
    s2 = disc.sigma * disc.sigma
    raw = (disc.h * np.asarray(drift, dtype=float) + s2) / (2.0 * s2)
    clipped = np.clip(raw, 0.0, 1.0)
    return clipped, clipped != raw


def effective_drift(p_up, disc: Discretization) -> np.ndarray:
    """Drift actually realised by the kernel: E[step] / delta.

    Equals ``b`` whenever ``p_up`` was not clipped.
    """
    return (2.0 * np.asarray(p_up) - 1.0) * disc.h / disc.delta


def transition_probs(t: float, eta: Marginal, u: float, x: float, model: MfgModel, disc: Discretization):
    """Return ``(p_up, p_down, clamped)`` for one interior state."""
    b = float(np.asarray(model.b(t, eta, np.asarray([x]), u)).reshape(-1)[0])
    p, clamped = kernel_up(b, disc)
    p = float(p)
    return p, 1.0 - p, bool(clamped)


def ghost_values(v_next_row, t_next: float, model: MfgModel, disc: Discretization) -> np.ndarray:
    """Extend a value row with V(-h) = y h + V(0) and V(L+h) = r h + V(L)."""
    row = np.asarray(v_next_row, dtype=float)
    low = model.y(t_next) * disc.h + row[0]
    high = model.r(t_next) * disc.h + row[-1]
    return np.concatenate(([low], row, [high]))


@dataclass(frozen=True)
class ValueTable:
    """Values ``v[j, k]`` at node j and state k, and centred gradients ``grad[j, k]``.

    ``grad`` has one row per non-terminal node and is built from row j+1.
    ``clamped[j, k]`` flags cells where some control's kernel was clipped.
    """

    v: np.ndarray
    grad: np.ndarray
    clamped: np.ndarray

    @property
    def clamp_count(self) -> int:
        return int(self.clamped.sum())

    @property
    def max_abs_grad(self) -> float:
        """Empirical gradient bound over the table."""
        return float(np.max(np.abs(self.grad), initial=0.0))

    def value_at(self, disc: Discretization, x: float, t: float = 0.0) -> float:
        return float(self.v[disc.time_index(t), disc.state_index(x)])


@dataclass(frozen=True)
class Policy:
    """Feedback control ``theta[j, k]`` with entries in U, stored as indices."""

    index: np.ndarray
    controls: tuple

    @property
    def theta(self) -> np.ndarray:
        return np.asarray(self.controls)[self.index]

    @classmethod
    def constant(cls, disc: Discretization, controls, u: float) -> "Policy":
        controls = tuple(controls)
        idx = np.full((disc.n_time, disc.n_states), controls.index(u), dtype=int)
        return cls(idx, controls)


def _node_terms(model: MfgModel, disc: Discretization, nu: MeasureFlow, j: int):
    t = j * disc.delta
    m = model.measure_features(nu[j])
    x = disc.states
    drift = np.empty((len(model.controls), disc.n_states))
    cost = np.empty_like(drift)
    for i, u in enumerate(model.controls):
        drift[i] = np.broadcast_to(model.drift(t, m, x, u), x.shape)
        cost[i] = np.broadcast_to(model.running_cost(t, m, x, u), x.shape)
    return t, m, drift, cost


def backward_solve(model: MfgModel, disc: Discretization, nu: MeasureFlow) -> tuple[ValueTable, Policy]:
    """Solve the finite-horizon MDP for the frozen flow ``nu``.

    Ties in the minimisation go to the smallest control.
    """
    nu.check_grid(disc)
    I, n = disc.n_time, disc.n_states
    v = np.empty((I + 1, n))
    grad = np.empty((I, n))
    clamped = np.zeros((I, n), dtype=bool)
    index = np.empty((I, n), dtype=int)

    m_T = model.measure_features(nu[I])
    v[I] = np.broadcast_to(model.terminal_cost(m_T, disc.states), (n,))
    for j in range(I - 1, -1, -1):
        _, _, drift, cost = _node_terms(model, disc, nu, j)
        ext = ghost_values(v[j + 1], (j + 1) * disc.delta, model, disc)
        p, clip = kernel_up(drift, disc)
        q = disc.delta * cost + p * ext[2:] + (1.0 - p) * ext[:-2]
        index[j] = np.argmin(q, axis=0)
        v[j] = q[index[j], np.arange(n)]
        grad[j] = (ext[2:] - ext[:-2]) / (2.0 * disc.h)
        clamped[j] = clip.any(axis=0)

    table = ValueTable(v, grad, clamped)
    if not np.isfinite(table.max_abs_grad) or table.max_abs_grad > GRAD_SANITY_BOUND:
        raise NumericalError(f"value gradient blew up: max |grad| = {table.max_abs_grad:g}")
    return table, Policy(index, model.controls)


def hamiltonian_argmin(table: ValueTable, model: MfgModel, disc: Discretization, nu: MeasureFlow) -> Policy:
    """Policy minimising f + b p with p the finite-difference gradient.

    ``b`` is the kernel's effective drift, so clipped cells stay consistent
    with the dynamic-programming step.
    """
    index = np.empty_like(table.grad, dtype=int)
    for j in range(disc.n_time):
        _, _, drift, cost = _node_terms(model, disc, nu, j)
        p, _ = kernel_up(drift, disc)
        index[j] = np.argmin(cost + effective_drift(p, disc) * table.grad[j], axis=0)
    return Policy(index, model.controls)


def hjb_residual(table: ValueTable, model: MfgModel, disc: Discretization, nu: MeasureFlow) -> float:
    """Max over the grid of |D_t V + H(D_x V) + sigma^2/2 D_xx V|."""
    worst = 0.0
    h, dt = disc.h, disc.delta
    for j in range(disc.n_time):
        _, _, drift, cost = _node_terms(model, disc, nu, j)
        ext = ghost_values(table.v[j + 1], (j + 1) * dt, model, disc)
        p, _ = kernel_up(drift, disc)
        d_t = (table.v[j + 1] - table.v[j]) / dt
        d_x = (ext[2:] - ext[:-2]) / (2.0 * h)
        d_xx = (ext[2:] - 2.0 * ext[1:-1] + ext[:-2]) / (h * h)
        ham = np.min(cost + effective_drift(p, disc) * d_x, axis=0)
        res = np.abs(d_t + ham + 0.5 * disc.sigma**2 * d_xx)
        worst = max(worst, float(res.max()))
    return worst


def local_moments(p_up, disc: Discretization) -> tuple[np.ndarray, np.ndarray]:
    """One-step mean and variance of the rate-control step."""
    p_up = np.asarray(p_up, dtype=float)
    h = disc.h
    mean = p_up * h + (1.0 - p_up) * (-h)
    var = p_up * (h - mean) ** 2 + (1.0 - p_up) * (-h - mean) ** 2
    return mean, var

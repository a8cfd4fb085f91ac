"""Two-sided Skorohod map on [0, L] for discrete-time paths.

Given an unconstrained path ``psi`` with ``psi[0]`` in [0, L], the map returns
``(phi, zeta1, zeta2)`` with ``phi = psi + zeta1 - zeta2`` confined to [0, L].
``zeta1`` pushes up from 0 and ``zeta2`` pushes down from L. Each one grows
only at steps where ``phi`` sits on its barrier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IncrementError, ParameterError, RangeError


@dataclass(frozen=True)
class SkorohodTriple:
    phi: np.ndarray
    zeta1: np.ndarray
    zeta2: np.ndarray

    def __iter__(self):
        return iter((self.phi, self.zeta1, self.zeta2))


def solve_skorohod(psi, L: float, atol: float = 1e-12) -> SkorohodTriple:
    """Solve the Skorohod problem for a step path by one-step projection.

    ``psi`` may be 1-d (a single path) or 2-d with one path per row; the
    last axis indexes steps. Increments must not exceed ``L`` in magnitude,
    which is the regime where the projection recursion is exact.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.ndim not in (1, 2) or psi.shape[-1] == 0:
        raise ParameterError("psi must be a non-empty 1-d or 2-d array")
    start = psi[..., 0]
    if np.any(start < -atol) or np.any(start > L + atol):
        raise RangeError("psi[0] must lie in [0, L]")
    increments = np.diff(psi, axis=-1)
    if np.any(np.abs(increments) > L * (1 + 1e-12)):
        raise IncrementError("path increments must not exceed L in magnitude")

    phi = np.empty_like(psi)
    zeta1 = np.zeros_like(psi)
    zeta2 = np.zeros_like(psi)
    phi[..., 0] = np.clip(start, 0.0, L)
    for n in range(increments.shape[-1]):
        z = phi[..., n] + increments[..., n]
        low = np.maximum(0.0, -z)
        high = np.maximum(0.0, z - L)
        phi[..., n + 1] = np.minimum(L, np.maximum(0.0, z))
        zeta1[..., n + 1] = zeta1[..., n] + low
        zeta2[..., n + 1] = zeta2[..., n] + high
    return SkorohodTriple(phi, zeta1, zeta2)


def sup_norm(path) -> float:
    """Uniform norm over the step index (last axis)."""
    return float(np.max(np.abs(np.asarray(path, dtype=float)), initial=0.0))


def lipschitz_ratio(omega, omega_tilde, L: float) -> float:
    """Measured ratio sum_i |Gamma_i(omega) - Gamma_i(omega~)|_T / |omega - omega~|_T.

    Returns 0.0 for identical inputs.
    """
    denom = sup_norm(np.asarray(omega, float) - np.asarray(omega_tilde, float))
    if denom == 0.0:
        return 0.0
    a = solve_skorohod(omega, L)
    b = solve_skorohod(omega_tilde, L)
    num = sum(sup_norm(x - y) for x, y in zip(a, b))
    return num / denom

"""Space-time discretization of [0, L] x [0, T].

The spatial step ``h`` fixes the time step through ``delta = h**2 / sigma**2``.
Both ``L / h`` and ``T / delta`` have to be integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivisibilityError, ParameterError, RangeError

DIVISIBILITY_RTOL = 1e-9


def _snap_ratio(num: float, den: float, what: str) -> int:
    ratio = num / den
    n = round(ratio)
    if n < 1 or abs(ratio - n) > DIVISIBILITY_RTOL * max(1.0, abs(ratio)):
        raise DivisibilityError(f"{what} = {ratio!r} is not an integer")
    return int(n)


@dataclass(frozen=True)
class Discretization:
    h: float
    L: float
    T: float
    sigma: float
    delta: float
    n_time: int
    n_states: int
    c_B: float | None = None
    positivity_ok: bool | None = None
    states: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def interior_states(self) -> np.ndarray:
        return self.states

    @property
    def ghost_low(self) -> float:
        return -self.h

    @property
    def ghost_high(self) -> float:
        return self.L + self.h

    @property
    def times(self) -> np.ndarray:
        """All time nodes 0, delta, ..., T (``n_time + 1`` entries)."""
        return np.arange(self.n_time + 1) * self.delta

    def time_index(self, t: float) -> int:
        """Index of the node floor(t / delta) * delta, clipped to [0, n_time]."""
        j = math.floor(t / self.delta + 1e-9)
        return min(max(j, 0), self.n_time)

    def state_index(self, x: float) -> int:
        """Index of the grid state floor(x / h) * h."""
        if not 0.0 <= x <= self.L * (1 + 1e-12):
            raise RangeError(f"state {x!r} outside [0, {self.L}]")
        k = math.floor(x / self.h + 1e-9)
        return min(k, self.n_states - 1)

    def floor_to_grid(self, x: float) -> float:
        return float(self.states[self.state_index(x)])

    def same_grid(self, other: "Discretization") -> bool:
        return (
            self.n_states == other.n_states
            and self.n_time == other.n_time
            and math.isclose(self.h, other.h, rel_tol=1e-12)
        )


def build_discretization(
    h: float, L: float, T: float, sigma: float, c_B: float | None = None
) -> Discretization:
    """Validate ``(h, L, T, sigma)`` and build the grid bundle.

    When the drift bound ``c_B`` is supplied, ``positivity_ok`` records
    whether ``h < sigma**2 / c_B`` (all kernel probabilities positive).
    """
    for name, value in (("h", h), ("L", L), ("T", T), ("sigma", sigma)):
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            raise ParameterError(f"{name} must be a positive finite number, got {value!r}")
    if c_B is not None and (not math.isfinite(c_B) or c_B < 0):
        raise ParameterError(f"c_B must be a finite nonnegative number, got {c_B!r}")

    h, L, T, sigma = float(h), float(L), float(T), float(sigma)
    n_cells = _snap_ratio(L, h, "L/h")
    delta = h * h / (sigma * sigma)
    n_time = _snap_ratio(T, delta, "T/delta")
    states = np.arange(n_cells + 1) * h
    states[-1] = L
    states.setflags(write=False)

    positivity_ok = None
    if c_B is not None:
        positivity_ok = c_B == 0 or h < sigma * sigma / c_B

    return Discretization(
        h=h,
        L=L,
        T=T,
        sigma=sigma,
        delta=delta,
        n_time=n_time,
        n_states=n_cells + 1,
        c_B=None if c_B is None else float(c_B),
        positivity_ok=positivity_ok,
        states=states,
    )


def floor_to_grid(x: float, disc: Discretization) -> float:
    """Map a state in [0, L] to the grid point floor(x / h) * h."""
    return disc.floor_to_grid(x)

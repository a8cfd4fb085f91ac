"""Problem data, measure flows on the state grid, and Wasserstein-1 distances.

Coefficient callables use the signatures

    drift(t, m, x, u), running_cost(t, m, x, u), terminal_cost(m, x),
    idleness_cost(t), rejection_cost(t)

where ``m`` is the tuple of measure features of the current marginal (by
default the moments ``sum_x a_j(x) eta(x)``), ``x`` is an array of states and
``u`` a control value or array broadcastable against ``x``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np

from .coefficients import Coefficient, parse_number
from .errors import GridMismatchError, ParameterError, SpecError
from .grid import Discretization, build_discretization

MASS_TOL = 1e-12


# --------------------------------------------------------------------------
# measures
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Marginal:
    """Probability vector over the grid states."""

    weights: np.ndarray
    states: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        s = np.asarray(self.states, dtype=float)
        if w.ndim != 1 or w.shape != s.shape:
            raise GridMismatchError("weights and states must be 1-d arrays of equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > MASS_TOL:
            raise ParameterError("marginal weights must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "states", s)

    @classmethod
    def dirac(cls, disc: Discretization, x: float) -> "Marginal":
        w = np.zeros(disc.n_states)
        w[disc.state_index(x)] = 1.0
        return cls(w, disc.states)

    @property
    def mean(self) -> float:
        return float(self.weights @ self.states)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.weights)


@dataclass(frozen=True)
class MeasureFlow:
    """One marginal per time node 0, delta, ..., T.

    ``weights`` has shape ``(n_time + 1, n_states)``.
    """

    weights: np.ndarray
    states: np.ndarray = field(repr=False)
    delta: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[1] != len(self.states):
            raise GridMismatchError("flow weights must have shape (n_nodes, n_states)")
        if np.any(w < 0) or np.any(np.abs(w.sum(axis=1) - 1.0) > MASS_TOL):
            raise ParameterError("every marginal must be nonnegative and sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def constant(cls, disc: Discretization, marginal: Marginal) -> "MeasureFlow":
        w = np.tile(marginal.weights, (disc.n_time + 1, 1))
        return cls(w, disc.states, disc.delta)

    @classmethod
    def dirac(cls, disc: Discretization, x: float) -> "MeasureFlow":
        """Constant-in-time Dirac flow at floor(x / h) * h."""
        return cls.constant(disc, Marginal.dirac(disc, x))

    def __len__(self) -> int:
        return self.weights.shape[0]

    def __getitem__(self, j: int) -> Marginal:
        return Marginal(self.weights[j], self.states)

    def at(self, t: float) -> Marginal:
        """Marginal at the node floor(t / delta) * delta."""
        j = int(np.floor(t / self.delta + 1e-9))
        return self[min(max(j, 0), len(self) - 1)]

    def means(self) -> np.ndarray:
        return self.weights @ self.states

    def check_grid(self, disc: Discretization) -> None:
        if self.weights.shape != (disc.n_time + 1, disc.n_states):
            raise GridMismatchError(
                f"flow has shape {self.weights.shape}, grid needs "
                f"{(disc.n_time + 1, disc.n_states)}"
            )


def _cdf_gaps(states: np.ndarray) -> np.ndarray:
    return np.diff(states)


def w1_marginal(eta: Marginal, eta2: Marginal, disc: Discretization | None = None) -> float:
    """Exact W1 between two marginals on the same grid (L1 distance of CDFs)."""
    if eta.weights.shape != eta2.weights.shape or not np.allclose(eta.states, eta2.states):
        raise GridMismatchError("marginals live on different grids")
    if disc is not None and eta.weights.shape[0] != disc.n_states:
        raise GridMismatchError("marginal does not match the discretization")
    diff = np.cumsum(eta.weights - eta2.weights)[:-1]
    return float(np.abs(diff) @ _cdf_gaps(eta.states))


def flow_distance(nu: MeasureFlow, nu2: MeasureFlow, disc: Discretization | None = None) -> float:
    """Surrogate W1 between flows: sup over time nodes of the marginal W1."""
    if nu.weights.shape != nu2.weights.shape:
        raise GridMismatchError("flows have different shapes")
    if disc is not None:
        nu.check_grid(disc)
    diff = np.cumsum(nu.weights - nu2.weights, axis=1)[:, :-1]
    return float(np.max(np.abs(diff) @ _cdf_gaps(nu.states)))


# --------------------------------------------------------------------------
# model
# --------------------------------------------------------------------------


def _moment_features(moments):
    def features(states, weights):
        return tuple(float(np.asarray(a(states), dtype=float) @ weights) for a in moments)

    return features


@dataclass(frozen=True, eq=False)
class MfgModel:
    drift: Callable
    running_cost: Callable
    terminal_cost: Callable
    idleness_cost: Callable
    rejection_cost: Callable
    controls: tuple
    sigma: float
    L: float
    T: float
    moments: tuple = ()
    features: Callable | None = None
    name: str = "custom"

    def __post_init__(self):
        controls = tuple(sorted(float(u) for u in self.controls))
        if not controls:
            raise ParameterError("control set U must be nonempty")
        if len(set(controls)) != len(controls):
            raise ParameterError("control set U has duplicate entries")
        object.__setattr__(self, "controls", controls)
        for name in ("sigma", "L", "T"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if self.features is None:
            object.__setattr__(self, "features", _moment_features(self.moments))

    # measure-aware evaluation --------------------------------------------

    def measure_features(self, eta: Marginal) -> tuple:
        return tuple(self.features(eta.states, eta.weights))

    def b(self, t, eta: Marginal, x, u):
        return self.drift(t, self.measure_features(eta), x, u)

    def f(self, t, eta: Marginal, x, u):
        return self.running_cost(t, self.measure_features(eta), x, u)

    def g(self, eta: Marginal, x):
        return self.terminal_cost(self.measure_features(eta), x)

    def y(self, t):
        return float(self.idleness_cost(t))

    def r(self, t):
        return float(self.rejection_cost(t))

    # drift bound ------------------------------------------------------------

    def drift_bound(self, states: Sequence[float] | None = None, n_times: int = 11) -> float:
        """sup |b| over states x U x sampled times, with Dirac measures at the states."""
        states = np.linspace(0.0, self.L, 201) if states is None else np.asarray(states, float)
        times = np.linspace(0.0, self.T, n_times)
        eye = np.eye(len(states))
        feats = {tuple(self.features(states, eye[i])) for i in range(len(states))}
        bound = 0.0
        for m in feats:
            for t in times:
                for u in self.controls:
                    vals = np.asarray(self.drift(t, m, states, u), dtype=float)
                    bound = max(bound, float(np.max(np.abs(vals))))
        return bound

    @cached_property
    def c_B(self) -> float:
        return self.drift_bound()

    def discretize(self, h: float) -> Discretization:
        return build_discretization(h, self.L, self.T, self.sigma, c_B=self.c_B)


# --------------------------------------------------------------------------
# presets and builders
# --------------------------------------------------------------------------


def _mean(x):
    return x


def _queue_drift(t, m, x, u):
    return 2.0 * np.asarray(x, dtype=float) + 7.0 * np.asarray(u, dtype=float)


def _queue_running(t, m, x, u):
    return (4.0 * np.asarray(x, dtype=float) - 5.0 * m[0]) ** 2 + np.asarray(u, dtype=float) ** 2


def _queue_terminal(m, x):
    return (4.0 * np.asarray(x, dtype=float) - 5.0 * m[0]) ** 2


def _zero(t):
    return 0.0


def _fifteen(t):
    return 15.0


def preset_section5() -> MfgModel:
    """Queueing example: L=1, T=0.4, sigma=1, U={-0.75, 0.25}.

    b = 2x + 7u, f = (4x - 5 mean)^2 + u^2, g = (4x - 5 mean)^2, y = 0, r = 15.
    """
    return MfgModel(
        drift=_queue_drift,
        running_cost=_queue_running,
        terminal_cost=_queue_terminal,
        idleness_cost=_zero,
        rejection_cost=_fifteen,
        controls=(-0.75, 0.25),
        sigma=1.0,
        L=1.0,
        T=0.4,
        moments=(_mean,),
        name="section5",
    )


AFFINE_KEYS = {
    "b1": ("t", "x"),
    "b2": ("t",),
    "a1": ("t", "x"),
    "a2": ("t", "x"),
    "a3": ("t",),
    "a4": ("x",),
    "a5": ("x",),
    "a6": ("t",),
    "a7": ("t",),
    "k": ("u",),
}
AFFINE_CONSTANTS = ("c1", "c2")


def _coef(spec, variables, name) -> Coefficient:
    if isinstance(spec, Coefficient):
        return spec
    if isinstance(spec, (int, float)):
        spec = repr(float(spec))
    if not isinstance(spec, str):
        raise SpecError(f"{name}: expected a specification string, got {type(spec).__name__}")
    return Coefficient(spec, variables, name=name)


def _number(spec, name) -> float:
    if isinstance(spec, (int, float)):
        return float(spec)
    if isinstance(spec, str):
        try:
            return parse_number(spec)
        except SpecError as exc:
            raise SpecError(f"{name}: {exc}") from exc
    raise SpecError(f"{name}: expected a number")


class _AffineControlModel:
    """Callables for b = b1 + b2 u, f = a1 + a2 k(u) + a3 (c1 + a4) m1, g = (c2 + a5) m2."""

    def __init__(self, coef: dict, c1: float, c2: float):
        self.c = coef
        self.c1, self.c2 = c1, c2

    def drift(self, t, m, x, u):
        return self.c["b1"](t, x) + self.c["b2"](t) * np.asarray(u, dtype=float)

    def running_cost(self, t, m, x, u):
        c = self.c
        return c["a1"](t, x) + c["a2"](t, x) * c["k"](u) + c["a3"](t) * (self.c1 + c["a4"](x)) * m[0]

    def terminal_cost(self, m, x):
        return (self.c2 + self.c["a5"](x)) * m[1]

    def idleness_cost(self, t):
        return self.c["a6"](t)

    def rejection_cost(self, t):
        return self.c["a7"](t)


def build_parametric_model(
    coefficients: Mapping[str, object],
    controls: Sequence[float],
    sigma: float,
    L: float,
    T: float,
) -> MfgModel:
    """Affine-in-control family with linear moment interaction.

    ``coefficients`` maps ``b1, b2, a1..a7, k`` to piecewise-polynomial
    specifications (see :mod:`mfgchain.coefficients`) and ``c1, c2`` to
    numbers. Missing entries default to zero. The measure enters through
    ``m1 = sum a4(x) eta(x)`` and ``m2 = sum a5(x) eta(x)``.
    """
    unknown = set(coefficients) - set(AFFINE_KEYS) - set(AFFINE_CONSTANTS)
    if unknown:
        raise SpecError(f"unknown coefficients {sorted(unknown)}")
    coef = {
        key: _coef(coefficients.get(key, "0"), variables, key)
        for key, variables in AFFINE_KEYS.items()
    }
    c1 = _number(coefficients.get("c1", 0.0), "c1")
    c2 = _number(coefficients.get("c2", 0.0), "c2")
    impl = _AffineControlModel(coef, c1, c2)
    return MfgModel(
        drift=impl.drift,
        running_cost=impl.running_cost,
        terminal_cost=impl.terminal_cost,
        idleness_cost=impl.idleness_cost,
        rejection_cost=impl.rejection_cost,
        controls=tuple(controls),
        sigma=sigma,
        L=L,
        T=T,
        moments=(coef["a4"], coef["a5"]),
        name="affine",
    )


class _PolynomialModel:
    def __init__(self, b, f, g, y, r, n_moments):
        self.b, self.fc, self.g, self.y, self.r = b, f, g, y, r
        self.n = n_moments

    def drift(self, t, m, x, u):
        return self.b(t, x, u, *m[: self.n])

    def running_cost(self, t, m, x, u):
        return self.fc(t, x, u, *m[: self.n])

    def terminal_cost(self, m, x):
        return self.g(x, *m[: self.n])

    def idleness_cost(self, t):
        return self.y(t)

    def rejection_cost(self, t):
        return self.r(t)


def build_polynomial_model(
    moments: Sequence[str],
    b: str,
    f: str,
    g: str,
    y: str,
    r: str,
    controls: Sequence[float],
    sigma: float,
    L: float,
    T: float,
) -> MfgModel:
    """Model whose coefficients are polynomials in t, x, u and moments m1..mk.

    ``moments[j]`` is a piecewise polynomial ``a_j(x)`` defining
    ``m{j+1} = sum a_j(x) eta(x)``. ``y`` and ``r`` may depend on ``t`` only.
    """
    mom = tuple(_coef(spec, ("x",), f"m{j + 1}") for j, spec in enumerate(moments))
    mnames = tuple(f"m{j + 1}" for j in range(len(mom)))
    model = _PolynomialModel(
        _coef(b, ("t", "x", "u") + mnames, "b"),
        _coef(f, ("t", "x", "u") + mnames, "f"),
        _coef(g, ("x",) + mnames, "g"),
        _coef(y, ("t",), "y"),
        _coef(r, ("t",), "r"),
        len(mom),
    )
    return MfgModel(
        drift=model.drift,
        running_cost=model.running_cost,
        terminal_cost=model.terminal_cost,
        idleness_cost=model.idleness_cost,
        rejection_cost=model.rejection_cost,
        controls=tuple(controls),
        sigma=sigma,
        L=L,
        T=T,
        moments=mom,
        name="polynomial",
    )


def convexity_modulus(k: Coefficient | str, controls: Sequence[float]) -> float:
    """Largest c with k(u') - k(u) - (u' - u) k'(u) >= c (u' - u)^2 over pairs in U.

    A positive value certifies the strict-convexity requirement on the
    control cost over the finite control set.
    """
    k = _coef(k, ("u",), "k")
    dk = k.derivative("u")
    best = np.inf
    for u, v in itertools.permutations(sorted(set(float(c) for c in controls)), 2):
        gap = k(v) - k(u) - (v - u) * dk(u)
        best = min(best, gap / (v - u) ** 2)
    return float(best)

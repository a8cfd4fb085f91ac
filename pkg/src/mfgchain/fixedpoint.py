"""Picard iteration of the induced-measure map on measure flows.

``phi_map(nu)`` solves the MDP against ``nu`` and returns the marginal flow
of the optimally controlled chain. ``iterate`` applies it repeatedly and
stops once the squared surrogate W1 distance between a flow and its image
drops below ``stop_factor * h**2``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .forward import ForwardResult, propagate_marginals
from .grid import Discretization
from .mdp import Policy, ValueTable, backward_solve
from .model import Marginal, MeasureFlow, MfgModel, flow_distance

log = logging.getLogger(__name__)

DEFAULT_STOP_FACTOR = 4.0
DISTANCE_LABEL = "surrogate W1 (sup over time nodes of marginal W1)"


@dataclass(frozen=True)
class MapResult:
    flow: MeasureFlow
    table: ValueTable
    policy: Policy
    forward: ForwardResult


def apply_phi(model: MfgModel, disc: Discretization, nu: MeasureFlow, x0: float) -> MapResult:
    """Solve against ``nu`` and push the start Dirac forward under the optimal policy."""
    table, policy = backward_solve(model, disc, nu)
    fw = propagate_marginals(model, disc, nu, policy, Marginal.dirac(disc, x0))
    return MapResult(fw.flow, table, policy, fw)


def phi_map(model: MfgModel, disc: Discretization, nu: MeasureFlow, x0: float) -> MeasureFlow:
    return apply_phi(model, disc, nu, x0).flow


@dataclass
class IterationReport:
    """Trace of a Picard run.

    ``flows[m]`` is the (m+1)-th flow, so ``flows[0]`` is the starting flow.
    ``distances[m - 1]`` is d_m = W(flows[m], flows[m - 1]) and
    ``ratios[m - 1] = d_{m+1}^2 / (h^2 + d_m^2)``.
    """

    h: float
    x0: float
    stop_factor: float
    flows: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    value_trace: list = field(default_factory=list)
    mean_traces: list = field(default_factory=list)
    tables: list = field(default_factory=list)
    policies: list = field(default_factory=list)
    clamp_counts: list = field(default_factory=list)
    max_abs_grads: list = field(default_factory=list)
    stop_reason: str = "max_iters"
    k_h: int | None = None
    distance_label: str = DISTANCE_LABEL

    @property
    def n_iters(self) -> int:
        return len(self.distances)

    @property
    def ratios(self) -> list:
        d = self.distances
        return [d[m + 1] ** 2 / (self.h**2 + d[m] ** 2) for m in range(len(d) - 1)]

    @property
    def flagged_ratios(self) -> list:
        """1-based indices m with q_m >= 1 (no observed contraction)."""
        return [m + 1 for m, q in enumerate(self.ratios) if q >= 1.0]

    @property
    def solution_index(self) -> int:
        """1-based index of the reported flow: the last flow the MDP was solved against.

        Equals ``k_h`` when the run halted on the threshold.
        """
        return self.n_iters

    @property
    def solution(self) -> MeasureFlow:
        return self.flows[self.solution_index - 1]

    @property
    def image(self) -> MeasureFlow:
        """The induced flow of ``solution``."""
        return self.flows[self.solution_index]

    @property
    def solution_table(self) -> ValueTable:
        return self.tables[-1]

    @property
    def solution_policy(self) -> Policy:
        return self.policies[-1]

    @property
    def final_value(self) -> float:
        return self.value_trace[-1]


def iterate(
    model: MfgModel,
    disc: Discretization,
    nu1: MeasureFlow,
    x0: float,
    max_iters: int = 15,
    stop_factor: float = DEFAULT_STOP_FACTOR,
    stop_at_threshold: bool = True,
) -> IterationReport:
    """Run the Picard iteration from ``nu1``.

    The threshold is checked from the second map on, so at least two maps
    run before a threshold stop. With ``stop_at_threshold=False`` all
    ``max_iters`` maps run and ``k_h`` still records the first hit.
    """
    if max_iters < 1:
        raise ParameterError("max_iters must be at least 1")
    if not stop_factor > 0:
        raise ParameterError("stop_factor must be positive")
    nu1.check_grid(disc)
    report = IterationReport(h=disc.h, x0=disc.floor_to_grid(x0), stop_factor=stop_factor, flows=[nu1])
    k0 = disc.state_index(x0)
    threshold = stop_factor * disc.h**2
    for m in range(1, max_iters + 1):
        res = apply_phi(model, disc, report.flows[-1], x0)
        d = flow_distance(res.flow, report.flows[-1])
        report.flows.append(res.flow)
        report.distances.append(d)
        report.value_trace.append(float(res.table.v[0, k0]))
        report.mean_traces.append(res.forward.mean_flow)
        report.tables.append(res.table)
        report.policies.append(res.policy)
        report.clamp_counts.append(res.table.clamp_count + res.forward.clamp_count)
        report.max_abs_grads.append(res.table.max_abs_grad)
        log.debug("h=%g iteration %d: d=%.6g V=%.6g", disc.h, m, d, report.value_trace[-1])
        if report.k_h is None and m >= 2 and d * d <= threshold:
            report.k_h = m
            if stop_at_threshold:
                report.stop_reason = "threshold"
                break
    if report.flagged_ratios:
        log.warning("h=%g: contraction ratio >= 1 at iterations %s", disc.h, report.flagged_ratios)
    return report


def solve_from_dirac(
    model: MfgModel,
    h: float,
    x0: float,
    max_iters: int = 15,
    stop_factor: float = DEFAULT_STOP_FACTOR,
    stop_at_threshold: bool = True,
) -> IterationReport:
    """Picard run started from the constant Dirac flow at floor(x0 / h) * h."""
    disc = model.discretize(h)
    return iterate(
        model,
        disc,
        MeasureFlow.dirac(disc, x0),
        x0,
        max_iters=max_iters,
        stop_factor=stop_factor,
        stop_at_threshold=stop_at_threshold,
    )


def picard_flow(model: MfgModel, disc: Discretization, x0: float, k: int) -> MeasureFlow:
    """The k-th Picard image of the Dirac start flow (k = 0 is the start itself)."""
    nu = MeasureFlow.dirac(disc, x0)
    for _ in range(k):
        nu = phi_map(model, disc, nu, x0)
    return nu


def max_ratio(report: IterationReport) -> float:
    return float(np.max(report.ratios)) if report.ratios else 0.0

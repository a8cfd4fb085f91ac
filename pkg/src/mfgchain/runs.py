"""Experiment orchestration: solve, couple and check for every h in a config.

Each h writes into its own subdirectory of ``output_dir``, so per-h runs
can execute in separate processes without sharing files.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .checks import run_suite
from .coefficients import parse_number
from .config import RunConfig, build_model
from .coupling import estimate_contraction
from .errors import ConfigError
from .fixedpoint import DISTANCE_LABEL, iterate, picard_flow
from .grid import Discretization
from .model import MeasureFlow, MfgModel

log = logging.getLogger(__name__)

NUMBER_FORMAT = "%.17g"


def h_dirname(h: float) -> str:
    return f"h_{h:.10g}"


def _num(x) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    return NUMBER_FORMAT % x


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_num(v) for v in row])


def read_csv(path) -> tuple[list, np.ndarray]:
    """Header and float array of a table written by :func:`write_csv` (blank cells become NaN)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) if v else np.nan for v in row] for row in reader]
    return header, np.asarray(rows, dtype=float).reshape(len(rows), len(header))


def _grid_rows(disc: Discretization, values: np.ndarray):
    for j, row in enumerate(values):
        t = j * disc.delta
        for x, v in zip(disc.states, row):
            yield t, x, v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2) + "\n")


# --------------------------------------------------------------------------
# solve
# --------------------------------------------------------------------------


def solve_one(cfg: RunConfig, h: float) -> dict:
    """Picard run for one h; writes the tables and returns the summary."""
    model = build_model(cfg)
    disc = model.discretize(h)
    out = Path(cfg.output_dir) / h_dirname(h)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    report = iterate(
        model,
        disc,
        MeasureFlow.dirac(disc, cfg.x0),
        cfg.x0,
        max_iters=cfg.max_iters,
        stop_factor=cfg.stop_factor,
        stop_at_threshold=cfg.stop_at_threshold,
    )
    solve_seconds = time.perf_counter() - t0

    t1 = time.perf_counter()
    table, policy, flow = report.solution_table, report.solution_policy, report.solution
    write_csv(out / "value.csv", ("t", "x", "V"), _grid_rows(disc, table.v))
    write_csv(out / "policy.csv", ("t", "x", "u"), _grid_rows(disc, policy.theta))
    write_csv(out / "gradient.csv", ("t", "x", "grad"), _grid_rows(disc, table.grad))
    write_csv(out / "marginals.csv", ("t", "x", "weight"), _grid_rows(disc, flow.weights))
    write_csv(out / "means.csv", ("t", "mean"), zip(disc.times, flow.means()))
    ratios = report.ratios + [None]
    write_csv(
        out / "iterations.csv",
        ("m", "d_m", "q_hat_m", "V_at_origin"),
        ((m + 1, d, q, v) for m, (d, q, v) in enumerate(zip(report.distances, ratios, report.value_trace))),
    )
    write_seconds = time.perf_counter() - t1

    summary = {
        "h": h,
        "L": disc.L,
        "T": disc.T,
        "sigma": disc.sigma,
        "delta": disc.delta,
        "n_time": disc.n_time,
        "x0": cfg.x0,
        "x0_grid": report.x0,
        "k_h": report.k_h,
        "stop_reason": report.stop_reason,
        "n_iters": report.n_iters,
        "solution_index": report.solution_index,
        "stop_factor": cfg.stop_factor,
        "final_value": report.final_value,
        "final_distance": report.distances[-1],
        "distance_label": report.distance_label,
        "flagged_ratios": report.flagged_ratios,
        "clamp_counts": report.clamp_counts,
        "clamp_total": int(sum(report.clamp_counts)),
        "c_B": disc.c_B,
        "positivity_ok": disc.positivity_ok,
        "empirical_c_d": max(report.max_abs_grads),
        "runtime_seconds": {"solve": solve_seconds, "write": write_seconds},
    }
    write_json(out / "summary.json", summary)
    log.info("h=%g: %d iterations, V=%.10g, stop=%s", h, report.n_iters, report.final_value, report.stop_reason)
    return summary


def _per_h(func, cfg: RunConfig, parallel: bool) -> list:
    if parallel and len(cfg.h_list) > 1:
        with ProcessPoolExecutor(max_workers=len(cfg.h_list)) as pool:
            return list(pool.map(func, [cfg] * len(cfg.h_list), cfg.h_list))
    return [func(cfg, h) for h in cfg.h_list]


def run_solve(cfg: RunConfig, parallel: bool = False) -> list:
    """Solve every h in the config; returns the per-h summaries in h_list order."""
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    return _per_h(solve_one, cfg, parallel)


# --------------------------------------------------------------------------
# couple
# --------------------------------------------------------------------------


def resolve_flow(spec: str, model: MfgModel, disc: Discretization, x0: float) -> MeasureFlow:
    """``dirac`` (at x0), ``dirac:X`` or ``picard:K`` (K-th image of the Dirac flow at x0)."""
    kind, _, arg = spec.strip().lower().partition(":")
    if kind == "dirac":
        return MeasureFlow.dirac(disc, parse_number(arg) if arg else x0)
    if kind == "picard" and arg.isdigit():
        return picard_flow(model, disc, x0, int(arg))
    raise ConfigError(f"bad flow spec {spec!r}")


def couple_one(cfg: RunConfig, h: float) -> dict:
    model = build_model(cfg)
    disc = model.discretize(h)
    out = Path(cfg.output_dir) / h_dirname(h)
    out.mkdir(parents=True, exist_ok=True)
    nu = resolve_flow(cfg.nu, model, disc, cfg.x0)
    nu2 = resolve_flow(cfg.nu2, model, disc, cfg.x0)
    t0 = time.perf_counter()
    est = estimate_contraction(cfg.seed, cfg.mc_samples, model, disc, nu, nu2, cfg.x0)
    payload = est.as_dict()
    payload.update(
        nu=cfg.nu,
        nu2=cfg.nu2,
        seed=cfg.seed,
        x0=cfg.x0,
        distance_label=DISTANCE_LABEL,
        runtime_seconds=time.perf_counter() - t0,
    )
    write_json(out / "contraction.json", payload)
    return payload


def run_couple(cfg: RunConfig, parallel: bool = False) -> list:
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    return _per_h(couple_one, cfg, parallel)


# --------------------------------------------------------------------------
# check
# --------------------------------------------------------------------------


def check_one(cfg: RunConfig, h: float) -> list:
    model = build_model(cfg)
    return run_suite(model, model.discretize(h), cfg.x0, cfg.seed, n_paths=cfg.check_paths)


def run_check(cfg: RunConfig, parallel: bool = False) -> tuple[bool, list]:
    """Returns ``(all_passed, [(h, [CheckResult, ...]), ...])``."""
    per_h = _per_h(check_one, cfg, parallel)
    report = list(zip(cfg.h_list, per_h))
    ok = all(r.passed for _, results in report for r in results)
    return ok, report

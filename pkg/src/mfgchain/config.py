"""Run configuration: INI file <-> :class:`RunConfig`.

Example::

    [run]
    L = 1
    T = 0.4
    sigma = 1
    h_list = 1/5, 1/10, 1/15, 1/20, 1/25
    x0 = 0.5
    max_iters = 15
    stop_factor = 4
    stop_at_threshold = false
    seed = 2024
    mc_samples = 100000
    output_dir = out

    [model]
    kind = section5
    controls = -0.75, 0.25

    [couple]
    nu = dirac
    nu2 = picard:1

``kind = affine`` reads the coefficients b1, b2, a1..a7, k, c1, c2 from the
``[model]`` section; ``kind = polynomial`` reads ``moments`` (comma
separated) and b, f, g, y, r. Coefficient values use the piecewise
polynomial syntax of :mod:`mfgchain.coefficients`.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import re
from dataclasses import dataclass, field
from pathlib import Path

from .coefficients import parse_number
from .errors import ConfigError, MfgChainError
from .grid import build_discretization
from .model import (
    AFFINE_CONSTANTS,
    AFFINE_KEYS,
    MfgModel,
    build_parametric_model,
    build_polynomial_model,
    preset_section5,
)

MODEL_KINDS = ("section5", "affine", "polynomial")
POLY_KEYS = ("moments", "b", "f", "g", "y", "r")
_FLOW_SPEC = re.compile(r"^(dirac(:[^:]+)?|picard:\d+)$")

DEFAULT_H_LIST = (1 / 5, 1 / 10, 1 / 15, 1 / 20, 1 / 25)


@dataclass
class RunConfig:
    model_kind: str = "section5"
    model_params: dict = field(default_factory=dict)
    controls: tuple | None = None
    L: float = 1.0
    T: float = 0.4
    sigma: float = 1.0
    h_list: tuple = DEFAULT_H_LIST
    x0: float = 0.5
    max_iters: int = 15
    stop_factor: float = 4.0
    stop_at_threshold: bool = True
    seed: int = 2024
    mc_samples: int = 100_000
    check_paths: int = 1000
    output_dir: str = "out"
    nu: str = "dirac"
    nu2: str = "picard:1"

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _locate(text: str) -> dict:
    """Map (section, key) to 1-based line numbers."""
    where = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.match(r"^\[([^\]]+)\]$", stripped)
        if m:
            section = m.group(1).strip().lower()
            where[(section, None)] = lineno
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", stripped)
        if m and section is not None:
            where[(section, m.group(1).strip().lower())] = lineno
    return where


def _numbers(text: str) -> tuple:
    return tuple(parse_number(tok) for tok in text.split(",") if tok.strip())


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}", line=getattr(exc, "lineno", None)) from exc
    where = _locate(text)
    cfg = RunConfig()

    def fail(section, key, message):
        raise ConfigError(message, field=f"{section}.{key}", line=where.get((section, key)))

    known_sections = {"run", "model", "couple"}
    for section in parser.sections():
        if section.lower() not in known_sections:
            raise ConfigError(f"unknown section [{section}]", line=where.get((section.lower(), None)))

    def get(section, key, conv, default):
        if not parser.has_option(section, key):
            return default
        raw = parser.get(section, key)
        try:
            return conv(raw)
        except (MfgChainError, ValueError) as exc:
            fail(section, key, f"bad value {raw!r}: {exc}")

    def boolean(raw):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected true/false")

    run_keys = {
        "l": ("L", parse_number),
        "t": ("T", parse_number),
        "sigma": ("sigma", parse_number),
        "h_list": ("h_list", _numbers),
        "x0": ("x0", parse_number),
        "max_iters": ("max_iters", int),
        "stop_factor": ("stop_factor", parse_number),
        "stop_at_threshold": ("stop_at_threshold", boolean),
        "seed": ("seed", int),
        "mc_samples": ("mc_samples", int),
        "check_paths": ("check_paths", int),
        "output_dir": ("output_dir", str.strip),
    }
    if parser.has_section("run"):
        for key in parser.options("run"):
            if key not in run_keys:
                fail("run", key, "unknown key")
            attr, conv = run_keys[key]
            setattr(cfg, attr, get("run", key, conv, getattr(cfg, attr)))

    if parser.has_section("model"):
        params = {}
        for key in parser.options("model"):
            if key == "kind":
                cfg.model_kind = parser.get("model", key).strip().lower()
            elif key == "controls":
                cfg.controls = get("model", key, _numbers, None)
            else:
                params[key] = parser.get("model", key).strip()
        cfg.model_params = params

    if parser.has_section("couple"):
        for key in parser.options("couple"):
            if key not in ("nu", "nu2"):
                fail("couple", key, "unknown key")
            setattr(cfg, key, parser.get("couple", key).strip().lower())

    validate(cfg, where)
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def validate(cfg: RunConfig, where: dict | None = None) -> None:
    """Raise :class:`ConfigError` naming the first offending field."""
    where = where or {}

    def fail(section, key, message):
        raise ConfigError(message, field=f"{section}.{key}", line=where.get((section, key.lower())))

    if cfg.model_kind not in MODEL_KINDS:
        fail("model", "kind", f"unknown model kind {cfg.model_kind!r}; expected one of {MODEL_KINDS}")
    if not cfg.h_list:
        fail("run", "h_list", "h_list must not be empty")
    if cfg.max_iters < 1:
        fail("run", "max_iters", "max_iters must be at least 1")
    if not cfg.stop_factor > 0:
        fail("run", "stop_factor", "stop_factor must be positive")
    if cfg.mc_samples < 1:
        fail("run", "mc_samples", "mc_samples must be at least 1")
    if cfg.check_paths < 1:
        fail("run", "check_paths", "check_paths must be at least 1")
    if cfg.controls is not None and len(cfg.controls) == 0:
        fail("model", "controls", "control set must not be empty")
    for key in ("nu", "nu2"):
        spec = getattr(cfg, key)
        if not _FLOW_SPEC.match(spec):
            fail("couple", key, f"bad flow spec {spec!r}; use dirac, dirac:X or picard:K")
        if spec.startswith("dirac:"):
            try:
                x = parse_number(spec[6:])
            except MfgChainError as exc:
                fail("couple", key, str(exc))
            if not 0 <= x <= cfg.L:
                fail("couple", key, f"Dirac location {x!r} outside [0, L]")
    for h in cfg.h_list:
        try:
            build_discretization(h, cfg.L, cfg.T, cfg.sigma)
        except MfgChainError as exc:
            fail("run", "h_list", f"h={h!r}: {exc}")
    if not 0 <= cfg.x0 <= cfg.L:
        fail("run", "x0", f"x0={cfg.x0!r} outside [0, L]")
    try:
        build_model(cfg)
    except MfgChainError as exc:
        if isinstance(exc, ConfigError):
            raise
        fail("model", "kind", str(exc))


def build_model(cfg: RunConfig) -> MfgModel:
    params = dict(cfg.model_params)
    if cfg.model_kind == "section5":
        if params:
            raise ConfigError(f"section5 preset takes no coefficients, got {sorted(params)}", field="model")
        model = preset_section5()
        changes = dict(L=cfg.L, T=cfg.T, sigma=cfg.sigma)
        if cfg.controls is not None:
            changes["controls"] = cfg.controls
        return dataclasses.replace(model, **changes)
    controls = cfg.controls
    if controls is None:
        raise ConfigError("controls are required for this model kind", field="model.controls")
    if cfg.model_kind == "affine":
        allowed = set(AFFINE_KEYS) | set(AFFINE_CONSTANTS)
        for key in params:
            if key not in allowed:
                raise ConfigError(f"unknown coefficient {key!r}", field=f"model.{key}")
        return build_parametric_model(params, controls, cfg.sigma, cfg.L, cfg.T)
    missing = [k for k in POLY_KEYS if k not in params]
    extra = [k for k in params if k not in POLY_KEYS]
    if missing or extra:
        raise ConfigError(f"polynomial model needs exactly {POLY_KEYS}", field=f"model.{(missing or extra)[0]}")
    moments = [m.strip() for m in params["moments"].split(",") if m.strip()]
    return build_polynomial_model(
        moments, params["b"], params["f"], params["g"], params["y"], params["r"],
        controls, cfg.sigma, cfg.L, cfg.T,
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def dump_config(cfg: RunConfig) -> str:
    """Serialize to INI text; ``parse_config(dump_config(c)) == c``."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["run"] = {
        "L": _fmt(cfg.L),
        "T": _fmt(cfg.T),
        "sigma": _fmt(cfg.sigma),
        "h_list": ", ".join(_fmt(h) for h in cfg.h_list),
        "x0": _fmt(cfg.x0),
        "max_iters": str(cfg.max_iters),
        "stop_factor": _fmt(cfg.stop_factor),
        "stop_at_threshold": str(cfg.stop_at_threshold).lower(),
        "seed": str(cfg.seed),
        "mc_samples": str(cfg.mc_samples),
        "check_paths": str(cfg.check_paths),
        "output_dir": cfg.output_dir,
    }
    model = {"kind": cfg.model_kind}
    if cfg.controls is not None:
        model["controls"] = ", ".join(_fmt(u) for u in cfg.controls)
    model.update(cfg.model_params)
    parser["model"] = model
    parser["couple"] = {"nu": cfg.nu, "nu2": cfg.nu2}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()

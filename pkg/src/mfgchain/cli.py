"""Command line entry point: ``mfgchain {solve,couple,check}``."""

from __future__ import annotations

import argparse
import logging
import sys

from .coefficients import parse_number
from .config import RunConfig, load_config, validate
from .errors import MfgChainError
from .runs import run_check, run_couple, run_solve


def _h_values(text: str) -> tuple:
    return tuple(parse_number(tok) for tok in text.split(",") if tok.strip())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="INI config file (default: the built-in preset)")
    common.add_argument("--h", dest="h_list", type=_h_values, help="comma separated grid steps, e.g. 1/10,1/20")
    common.add_argument("--iters", dest="max_iters", type=int)
    common.add_argument("--stop-factor", dest="stop_factor", type=parse_number)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", dest="output_dir")
    common.add_argument("--parallel", action="store_true", help="run each h in its own process")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mfgchain", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", parents=[common], help="Picard iteration and table output")
    solve.add_argument("--all-iters", action="store_true", help="run max_iters maps even after the threshold is hit")

    couple = sub.add_parser("couple", parents=[common], help="Monte Carlo contraction estimate")
    couple.add_argument("--nu", help="first flow: dirac, dirac:X or picard:K")
    couple.add_argument("--nu2", help="second flow")
    couple.add_argument("--mc-samples", dest="mc_samples", type=int)

    check = sub.add_parser("check", parents=[common], help="run the invariant suite")
    check.add_argument("--paths", dest="check_paths", type=int, help="sampled paths for path-level checks")
    return parser


def config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for name in ("h_list", "max_iters", "stop_factor", "seed", "output_dir", "nu", "nu2", "mc_samples", "check_paths"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "all_iters", False):
        overrides["stop_at_threshold"] = False
    cfg = cfg.replace(**overrides)
    validate(cfg)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "solve":
            for s in run_solve(cfg, parallel=args.parallel):
                print(
                    f"h={s['h']:.6g}  iterations={s['n_iters']}  k_h={s['k_h']}  "
                    f"V(0,x0)={s['final_value']:.10g}  d={s['final_distance']:.3g}  clamps={s['clamp_total']}"
                )
            print(f"tables written to {cfg.output_dir}")
            return 0
        if args.command == "couple":
            for p in run_couple(cfg, parallel=args.parallel):
                print(
                    f"h={p['h']:.6g}  estimate={p['estimate']:.6g}  "
                    f"CI=[{p['ci_low']:.6g}, {p['ci_high']:.6g}]  q_hat={p['q_hat']:.6g} (upper {p['q_hat_ci_high']:.6g})"
                )
            return 0
        ok, report = run_check(cfg, parallel=args.parallel)
        for h, results in report:
            print(f"h={h:.6g}")
            for r in results:
                print(f"  {r.line()}")
        print("all checks passed" if ok else "some checks FAILED")
        return 0 if ok else 1
    except (MfgChainError, OSError) as exc:
        print(f"mfgchain: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point ``occlab``."""
from __future__ import annotations

import argparse
import logging
import sys

from occlab.runner.config import ConfigError, load_config

SUBCOMMANDS = {
    "simulate": None,
    "bounds": ("bounds",),
    "rates": ("bounds", "rates"),
    "scaling": ("scaling",),
    "audit": ("audit",),
    "run": None,
    "selftest": None,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="occlab", description="Occupation-functional Monte Carlo laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "sample normalized functionals and their distance to N(0, 1)",
        "bounds": "compare the distance with the moment bounds",
        "rates": "bounds plus decay-rate checks across horizons",
        "scaling": "variance growth exponent",
        "audit": "step-halving and window-doubling audits",
        "run": "every task listed in the scenario file",
        "selftest": "quick checks against exact values",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=name != "selftest", help="scenario TOML file")
        p.add_argument("--seed", type=int, help="override the master seed of the file")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", help="output directory (default: run.output_dir of the file)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _summary(bundle) -> str:
    lines = [f"{bundle.name} [{bundle.config_hash}] seed={bundle.seed}"]
    for r, b in bundle.bounds.items():
        lines.append(
            f"  r={r:g}: dw={b.dw_hat:.4g}+-{b.dw_se:.2g}  sqrt2*m3={b.rhs_m3:.4g}  "
            f"sigma2={b.moments.sigma2:.6g}  var(A)={b.a_var:.6g}"
        )
    if bundle.scaling is not None:
        s = bundle.scaling
        lines.append(f"  variance slope {s.exponent_fitted.slope:.4f} vs {s.exponent_theory:.4f}")
    for r, a in bundle.audits.items():
        w = "n/a" if a.window_drift is None else f"{a.window_drift:+.4f}"
        lines.append(f"  audit r={r:g}: dt drift {a.dt_drift:+.5f}, window drift {w}")
    for key, ok in bundle.verdicts().items():
        lines.append(f"  {'PASS' if ok else 'FAIL'} {key}")
    if bundle.partial:
        lines.append(f"  partial results: {bundle.error}")
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.workers < 1:
        print("--workers must be positive", file=sys.stderr)
        return 2
    if args.command == "selftest":
        from occlab.runner.selftest import run_selftest

        return 0 if run_selftest(sys.stdout) else 1
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    out = args.out or cfg.output_dir
    from occlab.runner.scenario import run_scenario, simulate_scenario

    if args.command == "simulate":
        for r, dw in simulate_scenario(cfg, args.workers, out).items():
            print(f"r={r:g}: dw={dw:.6g}")
        return 0
    bundle = run_scenario(cfg, args.workers, out, SUBCOMMANDS[args.command])
    print(_summary(bundle))
    return 0 if bundle.passed else 1


if __name__ == "__main__":
    sys.exit(main())

# main.py
"""
chemlab command line.

    python main.py steady   --N 3
    python main.py lambda1  --N 3 --m 2.0 [--a-grid 0.1:0.95:0.05]
    python main.py evolve   --N 2 --m 1 --t_end 30 [--config my.cfg]
    python main.py rate     runs/evolve_N2_m1
    python main.py sweep    --N 3 --m-list 0.5,1,2
    python main.py validate [--full]

Exit codes: 0 ok, 1 validation failure, 2 bad configuration,
3 numerical failure, 4 supercritical run under --expect-subcritical.
"""
import argparse
import math
import sys
from typing import Any, Dict, List, Optional

from cli import validate as validation
from cli.commands import DEFAULT_WORKERS, cmd_evolve, cmd_lambda1, cmd_rate, cmd_steady
from cli.config import config_keys, load_config
from cli.sweep import cmd_sweep, parse_m_list
from core.errors import ChemLabError, ConfigError
from core.logger import configure_logging, get_logger

log = get_logger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_SUPERCRITICAL = 4


def _print_summary(title: str, summary: Dict[str, Any]) -> None:
    print(f"---- {title} ----")
    for key, value in summary.items():
        if isinstance(value, float):
            value = f"{value:.10g}"
        elif isinstance(value, list) and value and isinstance(value[0], float):
            value = ", ".join(f"{v:.6g}" for v in value)
        print(f"  {key:<16} {value}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chemlab", description="Degenerate chemotaxis PDE lab")
    parser.add_argument("--debug", action="store_true", help="verbose logging (or CHEMLAB_DEBUG=1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("steady", help="integrate the unit steady profile")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out")

    p = sub.add_parser("lambda1", help="smallest eigenvalue of the linearized operator")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--m", type=float)
    p.add_argument("--a", type=float)
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--grading", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out")
    p.add_argument("--a-grid", dest="a_grid", help="start:stop:step as fractions of A")
    p.add_argument("--workers", type=int, default=DEFAULT_WORKERS)

    p = sub.add_parser("evolve", help="evolve initial data and record norms")
    p.add_argument("--config", help="key = value file layered over the defaults")
    p.add_argument("--expect-subcritical", dest="expect_subcritical", action="store_true")
    for key in config_keys():
        p.add_argument(f"--{key}", dest=key, type=str, default=None)

    p = sub.add_parser("rate", help="fit the decay rate of a finished run")
    p.add_argument("run_dir")
    p.add_argument("--lambda-frac", dest="lambda_frac", type=float)

    p = sub.add_parser("sweep", help="evolve and fit over several masses")
    p.add_argument("--config")
    p.add_argument("--m-list", dest="m_list", required=True)
    p.add_argument("--workers", type=int, default=DEFAULT_WORKERS)
    for key in config_keys():
        if key != "m":
            p.add_argument(f"--{key}", dest=key, type=str, default=None)

    p = sub.add_parser("validate", help="run the invariant suite")
    p.add_argument("--full", action="store_true", help="acceptance sizes (slow)")
    p.add_argument("--only", nargs="*", choices=list(validation.GROUPS), default=None)
    p.add_argument("--inject", choices=validation.INJECTIONS, default=None,
                   help="deliberately break one invariant to check the suite catches it")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Optional[str]]:
    return {k: getattr(args, k, None) for k in config_keys() if hasattr(args, k)}


def _run_validate(args: argparse.Namespace) -> int:
    results = validation.cmd_validate(full=args.full, only=args.only, inject=args.inject)
    print(f"{'group':<18} {'result':<6} {'secs':>7}  detail")
    for r in results:
        level = "PASS" if r.passed else ("WARN" if r.warning_only else "FAIL")
        print(f"{r.name:<18} {level:<6} {r.seconds:7.1f}  {r.detail}")
    bad = validation.failed(results)
    return EXIT_VALIDATION if bad else EXIT_OK


def dispatch(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    configure_logging(True if args.debug else None)
    try:
        if args.command == "steady":
            _print_summary("steady", cmd_steady(args.N, args.tol, args.out))
        elif args.command == "lambda1":
            _print_summary("lambda1", cmd_lambda1(args.N, args.m, args.a, args.n, args.grading, args.tol,
                                                  args.out, args.a_grid, args.workers))
        elif args.command == "evolve":
            cfg = load_config(args.config, _overrides(args))
            result = cmd_evolve(cfg)
            _print_summary("evolve", result)
            if result["status"] == "unstable":
                return EXIT_NUMERIC
            if result["status"] == "supercritical-detected" and args.expect_subcritical:
                return EXIT_SUPERCRITICAL
        elif args.command == "rate":
            if args.lambda_frac is not None and not 0 <= args.lambda_frac < 1:
                raise ConfigError(f"--lambda-frac must lie in [0, 1), got {args.lambda_frac}")
            _print_summary("rate", cmd_rate(args.run_dir, args.lambda_frac))
        elif args.command == "sweep":
            base = load_config(args.config, _overrides(args))
            result = cmd_sweep(base, parse_m_list(args.m_list), args.workers)
            print(f"sweep written to {result['dir']}")
            for row in result["runs"]:
                slope = row["slope_L"]
                print(f"  m={row['m']:<8g} {row['status']:<24} slope_L="
                      f"{'nan' if math.isnan(slope) else f'{slope:.6g}'}")
        elif args.command == "validate":
            return _run_validate(args)
    except ConfigError as e:
        log.error("configuration error: %s", e)
        return EXIT_CONFIG
    except ChemLabError as e:
        log.error("%s: %s", type(e).__name__, e)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(dispatch())

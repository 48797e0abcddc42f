"""Command line: ``shuffle-agg params|sweep|attack|run``.

Exit codes: 0 success, 2 configuration error, 3 infeasible parameters or a
refused attack budget.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time

from .attacks import BudgetExceeded
from .config import ConfigError, ExperimentConfig, load_config, to_record
from .experiments import attack_report, json_report, params_table, run_report, run_sweep, sweep_csv
from .single_message import InfeasibleParams

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def cmd_params(args) -> int:
    cfg = _config(args) if args.config else ExperimentConfig()
    eps = args.eps if args.eps is not None else cfg.eps
    delta = args.delta if args.delta is not None else cfg.delta
    n = args.n if args.n is not None else cfg.n
    d = args.d if args.d is not None else cfg.d
    table, feasible = params_table(eps, delta, n, d)
    _emit(table, args.out)
    return EXIT_OK if feasible else EXIT_INFEASIBLE


def cmd_sweep(args) -> int:
    rows = run_sweep(_config(args), threads=args.threads)
    _emit(sweep_csv(rows), args.out)
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg = _config(args)
    start = time.perf_counter()
    body = {"config": to_record(cfg), "report": attack_report(cfg)}
    _emit(json_report(body, time.perf_counter() - start), args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    start = time.perf_counter()
    body = run_report(cfg, threads=args.threads)
    _emit(json_report(body, time.perf_counter() - start), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shuffle-agg", description="Shuffle-model private vector aggregation")
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {"params": cmd_params, "sweep": cmd_sweep, "attack": cmd_attack, "run": cmd_run}
    helps = {
        "params": "print protocol parameters for (eps, delta, n, d)",
        "sweep": "estimate errors over a parameter grid and write CSV",
        "attack": "run a reconstruction or poisoning experiment and write JSON",
        "run": "estimate the error at one config point and write JSON",
    }
    for name, handler in handlers.items():
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", help="TOML or JSON experiment config")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        if name == "params":
            p.add_argument("--eps", type=float)
            p.add_argument("--delta", type=float)
            p.add_argument("--n", type=int)
            p.add_argument("--d", type=int)
        p.set_defaults(handler=handler)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.handler(args)
    except (InfeasibleParams, BudgetExceeded) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

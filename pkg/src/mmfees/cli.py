"""Command-line entry point: ``mmfees matrix | run | sweep``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .game import analyze, build_reward_matrix, format_matrix
from .harness import SWEEPS, csv_row, rows_to_csv, run_experiment, run_sweep, write_csv
from .market import FeeSchedule

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3


def _fees(cfg, args):
    if args.beta is None and args.eta is None:
        return cfg.fees
    beta = cfg.fees.beta if args.beta is None else args.beta
    eta = FeeSchedule.with_margin(beta).eta if args.eta is None else args.eta
    return FeeSchedule(beta, eta)


def cmd_matrix(args) -> int:
    cfg = load_config(args.config)
    fees = _fees(cfg, args)
    matrix = build_reward_matrix(cfg.market, fees)
    report = analyze(matrix)
    print(f"# beta={fees.beta:g} eta={fees.eta:g} sigma={cfg.market.sigma:g} xi={cfg.market.xi:g}")
    if matrix.n_agents == 2:
        for agent in range(2):
            print(format_matrix(matrix, agent))
            print()
    fmt = lambda ps: " ".join("(" + ",".join(map(str, p)) + ")" for p in ps) or "none"
    print("pure nash:", fmt(report.pure_nash))
    print("cooperative:", fmt(report.cooperative))
    print(f"max joint profit: {report.joint_profit.max():.4f}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.instances is not None:
        overrides["n_instances"] = args.instances
    if overrides:
        cfg = cfg.replace(**overrides)
    res = run_experiment(cfg, workers=args.workers)
    sys.stdout.write(rows_to_csv([csv_row("run", res)]))
    return EXIT_OK if res.all_converged else EXIT_NONCONVERGED


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(base_seed=args.seed)
    if args.instances is not None:
        cfg = cfg.replace(n_instances=args.instances)
    rows, results = run_sweep(args.table, cfg, workers=args.workers, on_row=lambda r: logging.info("row %s", r))
    if args.out:
        write_csv(rows, args.out)
    else:
        sys.stdout.write(rows_to_csv(rows))
    return EXIT_OK if all(r.all_converged for r in results) else EXIT_NONCONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmfees", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("matrix", help="exact one-period reward matrix and equilibria")
    p.add_argument("--config")
    p.add_argument("--beta", type=float)
    p.add_argument("--eta", type=float)
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("run", help="one experiment over all instances")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--instances", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="reproduce one results table as CSV")
    p.add_argument("--table", type=int, choices=sorted(SWEEPS), required=True)
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--instances", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

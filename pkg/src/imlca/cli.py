"""Command line: ``run`` batches, ``optimum`` for one instance, ``report`` over a results directory."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .domain import brute_force_optimum, generate_instance
from .experiments import (
    AGGREGATE_FILE,
    ROWS_FILE,
    aggregate,
    format_table,
    load_config,
    read_rows,
    run_batch,
)
from .mechanism import VARIANTS

# CLI flag -> (section, field) in the experiment config.
DOMAIN_FLAGS = {"bidders": "n", "items": "m", "interest_size": "interest_size"}
MECHANISM_FLAGS = {
    "qinit": "q_init",
    "qmax": "q_max",
    "qround": "q_round",
    "mu": "mu",
    "alpha": "alpha",
    "omega_stop": "omega_stop",
    "max_refine_rounds": "max_refine_rounds",
}


def parse_seeds(text: str) -> list[int]:
    """``"101..150"`` (inclusive range) or a comma-separated list."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError("no seeds given")
    return seeds


def _add_domain_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with 'domain' and 'mechanism' sections")
    p.add_argument("--domain", default="synthetic", choices=["synthetic"])
    p.add_argument("--bidders", type=int)
    p.add_argument("--items", type=int)
    p.add_argument("--interest-size", type=int)


def _apply_overrides(cfg, args):
    dom = {f: getattr(args, k) for k, f in DOMAIN_FLAGS.items() if getattr(args, k, None) is not None}
    mech = {f: getattr(args, k) for k, f in MECHANISM_FLAGS.items() if getattr(args, k, None) is not None}
    return dataclasses.replace(cfg, domain=dataclasses.replace(cfg.domain, **dom),
                               mechanism=dataclasses.replace(cfg.mechanism, **mech))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imlca", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a seeded batch of auctions")
    _add_domain_args(run)
    run.add_argument("--qinit", type=int)
    run.add_argument("--qmax", type=int)
    run.add_argument("--qround", type=int)
    run.add_argument("--mu", type=float)
    run.add_argument("--alpha", type=float)
    run.add_argument("--omega-stop", type=float)
    run.add_argument("--max-refine-rounds", type=int)
    run.add_argument("--variant", action="append", choices=VARIANTS,
                     help="repeatable; default: all variants")
    run.add_argument("--seeds", type=parse_seeds, default=parse_seeds("101..150"))
    run.add_argument("--out", required=True)
    run.add_argument("--trace", choices=["none", "json"], default="none")
    run.add_argument("--workers", type=int, help="overrides IMLCA_WORKERS")

    opt = sub.add_parser("optimum", help="efficient allocation of one instance")
    _add_domain_args(opt)
    opt.add_argument("--instance-seed", type=int, required=True)

    rep = sub.add_parser("report", help="aggregate table of a results directory")
    rep.add_argument("--in", dest="indir", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        rows = read_rows(Path(args.indir) / ROWS_FILE)
        print(format_table(aggregate(rows)))
        return 1 if any(r.error for r in rows) else 0

    cfg = _apply_overrides(load_config(args.config), args)
    if args.command == "optimum":
        instance = generate_instance(dataclasses.replace(cfg.domain, seed=args.instance_seed))
        a, value = brute_force_optimum(instance)
        print(json.dumps({"seed": args.instance_seed, "allocation": [str(b) for b in a],
                          "value": value}))
        return 0

    variants = args.variant or list(VARIANTS)
    result = run_batch(cfg, args.seeds, variants, out_dir=args.out, trace=args.trace,
                       workers=args.workers)
    print(format_table(result.aggregates))
    print(f"rows: {Path(args.out) / ROWS_FILE}\naggregates: {Path(args.out) / AGGREGATE_FILE}")
    return 1 if result.failed else 0


if __name__ == "__main__":
    sys.exit(main())

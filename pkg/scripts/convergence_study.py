"""How quickly the convergence bound reaches its threshold in the refinement-only phase.

Prints, per seed, the bound after each refinement round, then the share of
seeds reaching the threshold within the round cap.

    python scripts/convergence_study.py --seeds 101..200
"""
import argparse
import dataclasses
import sys
from pathlib import Path

from imlca.cli import parse_seeds
from imlca.domain import generate_instance
from imlca.experiments import load_config, mechanism_for
from imlca.mechanism import run_auction

HERE = Path(__file__).parent


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default=str(HERE / "desk_scale.json"))
    ap.add_argument("--seeds", type=parse_seeds, default=parse_seeds("101..200"))
    ap.add_argument("--variant", default="imlca", choices=["imlca", "imlca-sp"])
    args = ap.parse_args()

    cfg = load_config(args.config)
    reached = 0
    for seed in args.seeds:
        instance = generate_instance(dataclasses.replace(cfg.domain, seed=seed))
        mech = mechanism_for(cfg, args.variant, seed)
        _, trace = run_auction(instance, mech)
        path = [r.omega for r in trace.rounds_in("convergence")]
        ok = trace.final_omega >= mech.omega_stop
        reached += ok
        flags = " stalled" if trace.stalled else ""
        print(f"{seed}\trounds={len(path)}\tfinal={trace.final_omega:.4f}{flags}\t"
              + " ".join(f"{w:.3f}" for w in path))
    n = len(args.seeds)
    print(f"\nreached {cfg.mechanism.omega_stop} on {reached}/{n} seeds ({reached / n:.0%})")
    return 0


if __name__ == "__main__":
    sys.exit(main())

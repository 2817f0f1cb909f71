"""Paired comparison of MRPAR refinement counts: effort-reduction prices vs simple unique prices.

Each seed runs both price procedures on the same instance with the same bidder
random streams, so per-seed differences isolate the price objective.

    python scripts/price_ablation.py --seeds 101..150
"""
import argparse
import sys
from pathlib import Path

import numpy as np

from imlca.cli import parse_seeds
from imlca.experiments import load_config, run_batch

HERE = Path(__file__).parent


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default=str(HERE / "desk_scale.json"))
    ap.add_argument("--seeds", type=parse_seeds, default=parse_seeds("101..150"))
    ap.add_argument("--out", default="results/ablation")
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()

    result = run_batch(load_config(args.config), args.seeds, ["imlca", "imlca-sp"],
                       out_dir=args.out, workers=args.workers)
    rows = {(r.seed, r.variant): r for r in result.rows if not r.error}
    seeds = [s for s in args.seeds if (s, "imlca") in rows and (s, "imlca-sp") in rows]
    effort = np.array([rows[s, "imlca"].mrpar_refinements for s in seeds], dtype=float)
    simple = np.array([rows[s, "imlca-sp"].mrpar_refinements for s in seeds], dtype=float)
    diff = effort - simple

    print("seed\teffort\tsimple\tdiff")
    for s, e, p, d in zip(seeds, effort, simple, diff):
        print(f"{s}\t{e:.0f}\t{p:.0f}\t{d:+.0f}")
    se = diff.std(ddof=1) / np.sqrt(len(diff)) if len(diff) > 1 else 0.0
    print(f"\nmean MRPAR refinements: effort {effort.mean():.2f}, simple {simple.mean():.2f}")
    print(f"mean paired difference {diff.mean():+.2f} (se {se:.2f}); "
          f"non-increasing on {np.mean(diff <= 0):.0%} of {len(seeds)} seeds")
    return 1 if result.failed else 0


if __name__ == "__main__":
    sys.exit(main())

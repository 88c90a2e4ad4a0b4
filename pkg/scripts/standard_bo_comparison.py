"""Proximity MFBO against single-fidelity BO from the same HF initial points.

    python3 scripts/standard_bo_comparison.py --problem bohachevsky --seeds 30 --out results/sbo
"""
import argparse

import numpy as np

from mfbo.harness import ExperimentConfig, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--problem", default="bohachevsky")
    ap.add_argument("--ratio", type=float, default=0.2)
    ap.add_argument("--seeds", type=int, default=30)
    ap.add_argument("--iters", type=int, default=30)
    ap.add_argument("--beta", default="3")
    ap.add_argument("--out", default="results/standard_bo")
    args = ap.parse_args()
    cfg = ExperimentConfig(problem=args.problem, strategies=("proximity", "standard_bo"),
                           betas=(args.beta,), ratios=(args.ratio,), seeds=args.seeds, iters=args.iters)
    summary = run_sweep(cfg, args.out)
    for c in summary.cells:
        hf = [r.counts["high"] for r in summary.results if r.cell[0] == c.strategy]
        print(f"{c.strategy:12s} median regret {np.nanmedian(c.regret):.4g}  "
              f"mean HF evaluations {np.mean(hf):.2f}  hit rate {c.hit_rate:.2f}")


if __name__ == "__main__":
    main()

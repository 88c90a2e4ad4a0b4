"""HF usage against the cost ratio for one problem and strategy.

Runs the default ratio grid (or ``--ratios``), writes the harness CSVs and
prints mean usage per ratio with the Spearman rank correlation.

    python3 scripts/cost_ratio_sweep.py bohachevsky proximity --seeds 20 --out results/sweep
"""
import argparse

import numpy as np
from scipy.stats import spearmanr

from mfbo.harness import ExperimentConfig, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("problem")
    ap.add_argument("strategy")
    ap.add_argument("--ratios", help="comma-separated; default is the strategy's grid")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--iters", type=int, default=30)
    ap.add_argument("--beta", default="3")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/cost_ratio")
    args = ap.parse_args()
    ratios = tuple(float(r) for r in args.ratios.split(",")) if args.ratios else None
    cfg = ExperimentConfig(problem=args.problem, strategies=(args.strategy,), betas=(args.beta,),
                           ratios=ratios, seeds=args.seeds, iters=args.iters, workers=args.workers)
    summary = run_sweep(cfg, args.out)
    lam = np.array([c.ratio for c in summary.cells])
    usage = np.array([np.nanmean(c.usage) for c in summary.cells])
    for c, u in zip(summary.cells, usage):
        q = c.usage_quartiles()
        print(f"ratio {c.ratio:7.4f}  mean usage {u:.3f}  quartiles {q[1]:.2f}/{q[2]:.2f}/{q[3]:.2f}")
    if len(lam) > 2:
        print(f"Spearman(ratio, usage) = {spearmanr(lam, usage).statistic:.3f}")


if __name__ == "__main__":
    main()

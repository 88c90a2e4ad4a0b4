"""Global-optimum hit rates on Forrester for each strategy and beta.

Seed i runs at cost ratio ``grid[i % 10]`` of the strategy's default grid,
so a column pools the whole ratio range. Writes ``hit_rates.csv``.

    python3 scripts/table2_hit_rates.py --seeds 40 --betas 3,adaptive --out results/table2
"""
import argparse
import time
from pathlib import Path

import numpy as np

from mfbo.harness import ExperimentConfig, csv_text, default_ratio_grid, is_hit, run_task
from mfbo.objectives import make_problem

STRATEGIES = ("fidelity_weighted", "mf_ucb", "proximity")


def hit_rate(strategy, beta, seeds, iters, master_seed):
    cfg = ExperimentConfig(problem="forrester", strategies=(strategy,), betas=(beta,), seeds=seeds,
                           iters=iters, master_seed=master_seed).validate()
    grid = default_ratio_grid(strategy)
    prob = make_problem("forrester")
    hits = [is_hit(run_task((cfg, (strategy, cfg.betas[0], grid[i % len(grid)]), i)).record, prob)
            for i in range(seeds)]
    return float(np.mean(hits))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=40)
    ap.add_argument("--iters", type=int, default=30)
    ap.add_argument("--betas", default="3")
    ap.add_argument("--master-seed", type=int, default=0)
    ap.add_argument("--out", default="results/table2")
    args = ap.parse_args()
    betas = [b.strip() for b in args.betas.split(",")]
    rows = []
    for s in STRATEGIES:
        t0 = time.perf_counter()
        row = [s, *(hit_rate(s, b, args.seeds, args.iters, args.master_seed) for b in betas)]
        rows.append(row)
        print(f"{s:18s} " + " ".join(f"beta={b}: {v:.3f}" for b, v in zip(betas, row[1:]))
              + f"  ({time.perf_counter() - t0:.0f} s)", flush=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "hit_rates.csv").write_text(csv_text(["strategy", *[f"beta={b}" for b in betas]], rows))


if __name__ == "__main__":
    main()

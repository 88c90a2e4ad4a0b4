"""|Re lambda| of the Oregonator steady state over the (T, f) box at both
fidelities, for locating the Hopf curve. Writes ``heatmap.csv`` with one row
per grid point; failed steady-state solves are left blank.

    python3 scripts/oregonator_heatmap.py --n 41 --out results/oregonator
"""
import argparse
from pathlib import Path

import numpy as np

from mfbo.harness import csv_text
from mfbo.objectives import ObjectiveError, oregonator_spectrum, hopf_measure


def measure(T, f, fidelity):
    try:
        _, lam = oregonator_spectrum(T, f, fidelity)
    except ObjectiveError:
        return np.nan, np.nan
    return hopf_measure(lam), float(np.max(lam.real))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=41, help="grid points per axis")
    ap.add_argument("--out", default="results/oregonator")
    args = ap.parse_args()
    rows = []
    for T in np.linspace(350, 500, args.n):
        for f in np.linspace(0.5, 2.5, args.n):
            low, low_max = measure(T, f, "low")
            high, high_max = measure(T, f, "high")
            rows.append([T, f, low, low_max, high, high_max])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = ["T", "f", "hopf_low", "max_re_low", "hopf_high", "max_re_high"]
    (out / "heatmap.csv").write_text(csv_text(header, rows))
    unstable = sum(r[5] > 0 for r in rows)
    print(f"{len(rows)} points, {unstable} with an unstable full-model steady state")


if __name__ == "__main__":
    main()

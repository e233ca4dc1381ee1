#!/usr/bin/env python3
"""Render the averaged convergence curves of a finished experiment.

Usage: scripts/plot_curves.py <experiment-dir> [output.png]

Reads <experiment-dir>/figure2.csv (written by `stravg report`) and draws
one curve per method. Purely auxiliary; all checks run on the data files.
"""

import csv
import sys
from collections import defaultdict


def main() -> int:
    if len(sys.argv) < 2:
        print(__doc__.strip(), file=sys.stderr)
        return 2
    run_dir = sys.argv[1]
    out_path = sys.argv[2] if len(sys.argv) > 2 else f"{run_dir}/figure2.png"

    curves = defaultdict(list)
    with open(f"{run_dir}/figure2.csv", newline="") as f:
        for row in csv.DictReader(f):
            curves[row["method"]].append((int(row["k"]), float(row["mean_log10_ratio"])))

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 5))
    for method in sorted(curves):
        points = sorted(curves[method])
        ax.plot([k for k, _ in points], [v for _, v in points], label=method, lw=1.2)
    ax.set_xlabel("iteration $k$")
    ax.set_ylabel(r"$\log_{10}\,\max_i d(x^k, C_i)\,/\,\max_i d(x^0, C_i)$")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    print(f"wrote {out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Plot accuracy-vs-epsilon curves from sweep CSVs.

Usage: python scripts/plot_sweeps.py runs/paper_desk/fgsm_sweep.csv [more.csv ...]

Needs matplotlib (not a package dependency; the CLI's `show-report` emits
plot-ready long-format data if you would rather use something else).
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from melstorm.harness import read_report_csv


def main(paths):
    if not paths:
        print(__doc__)
        return 1
    fig, ax = plt.subplots(figsize=(6, 4))
    for path in paths:
        rows = read_report_csv(path)
        ax.plot([r["eps"] for r in rows], [r["accuracy"] for r in rows], marker="o", label=rows[0]["attack"])
    ax.set_xlabel("epsilon")
    ax.set_ylabel("adversarial accuracy")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend()
    out = Path(paths[0]).with_suffix(".png")
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))

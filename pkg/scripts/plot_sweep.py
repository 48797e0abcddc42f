"""Render a sweep CSV as MSE against n on log-log axes, one line per (protocol, d).

    shuffle-agg sweep --config configs/single_scaling.toml --out sweep.csv
    python scripts/plot_sweep.py sweep.csv --out sweep.png

Needs matplotlib (``pip install -e .[plot]``).
"""

import argparse
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from shuffle_agg.experiments import read_sweep_csv  # noqa: E402


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv")
    parser.add_argument("--out", default="sweep.png")
    args = parser.parse_args()

    with open(args.csv, encoding="utf-8") as fh:
        rows = [r for r in read_sweep_csv(fh.read()) if not r["error"]]
    series = defaultdict(list)
    for r in rows:
        series[(r["protocol"], int(r["d"]))].append((int(r["n"]), float(r["mse_mean"]), float(r["mse_ci95"])))
    fig, ax = plt.subplots(figsize=(5, 4))
    for (protocol, d), pts in sorted(series.items()):
        pts.sort()
        ns, mse, ci = zip(*pts)
        ax.errorbar(ns, mse, yerr=ci, marker="o", capsize=3, label=f"{protocol} d={d}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("MSE")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()

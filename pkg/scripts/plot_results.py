#!/usr/bin/env python3
"""Plot the experiment CSVs produced by scripts/run_experiments.sh.

Not part of acceptance; needs matplotlib (pip install tightbox[plots]).
"""

import argparse
import csv
from pathlib import Path


def read_csv(path):
    with open(path) as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, data = rows[0], rows[1:]
    cols = {name: [float(r[i]) for r in data] for i, name in enumerate(header) if name != "category"}
    return cols


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--results", default="results", help="directory with experiment CSVs")
    parser.add_argument("--out", default="results/plots", help="output directory for PNGs")
    args = parser.parse_args()
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    results = Path(args.results)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def save(fig, name):
        fig.tight_layout()
        fig.savefig(out / name, dpi=150)
        plt.close(fig)
        print("wrote", out / name)

    width = results / "init_width.csv"
    if width.exists():
        cols = read_csv(width)
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.loglog(cols["d1"], cols["tau_analytic"], "-", label="closed form")
        ax.errorbar(cols["d1"], cols["tau_mc"], yerr=cols["stderr"], fmt="o", ms=4, label="Monte-Carlo")
        ax.set_xlabel("inner width")
        ax.set_ylabel("tightness at init")
        ax.legend()
        save(fig, "init_width.png")

    depth = results / "init_depth.csv"
    if depth.exists():
        cols = read_csv(depth)
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.semilogy(cols["depth"], cols["tau_mc"], "o-", label="Monte-Carlo")
        ax.semilogy(cols["depth"], cols["tau_bound"], "--", label="upper bound")
        ax.set_xlabel("depth")
        ax.set_ylabel("tightness at init")
        ax.legend()
        save(fig, "init_depth.png")

    recon = results / "reconstruction.csv"
    if recon.exists():
        cols = read_csv(recon)
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.plot(cols["k"], cols["layerwise_growth"], "o-", label="layerwise")
        ax.plot(cols["k"], cols["optimal_growth"], "s-", label="optimal")
        ax.plot(cols["k"], cols["theory_optimal"], "--", label="optimal (large-d)")
        ax.set_xlabel("bottleneck width k")
        ax.set_ylabel("box growth per unit radius")
        ax.legend()
        save(fig, "reconstruction.png")

    sabr = results / "sabr_xi.csv"
    if sabr.exists():
        cols = read_csv(sabr)
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.semilogx(cols["xi"], cols["mean_tightness"], "o")
        ax.set_xlabel("propagated region size")
        ax.set_ylabel("mean local tightness")
        save(fig, "sabr_xi.png")

    for name in ("train_ibp01.csv", "train_pgd01.csv"):
        path = results / name
        if path.exists():
            cols = read_csv(path)
            fig, ax = plt.subplots(figsize=(4, 3))
            ax.plot(cols["epoch"], cols["std_acc"], "o-", label="accuracy")
            ax.plot(cols["epoch"], cols["cert_acc"], "s-", label="certified")
            ax.plot(cols["epoch"], cols["mean_tightness"], "^-", label="tightness")
            ax.set_xlabel("epoch")
            ax.legend()
            save(fig, name.replace(".csv", ".png"))


if __name__ == "__main__":
    main()

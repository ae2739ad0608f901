"""Plot the CSVs written by ``figure_data.py`` (needs matplotlib).

    python scripts/plot_figures.py --outdir results
"""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def col(rows, name):
    return [float(r[name]) for r in rows]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--outdir", type=Path, default=Path("results"))
    out = p.parse_args(argv).outdir

    rows = read(out / "fig1.csv")
    t = col(rows, "t")
    fig, ax = plt.subplots()
    for name, label in (("V", "V(x(t))"), ("Q", "Q(t)"), ("VplusQ", "V + Q")):
        ax.plot(t, col(rows, name), label=label)
    ax.set_xlabel("t")
    ax.legend()
    ax.set_title("Lyapunov and spacing functions over one period")
    fig.savefig(out / "fig1.png", dpi=150)

    rows = read(out / "fig2.csv")
    fig, ax = plt.subplots()
    ax.plot(col(rows, "t"), col(rows, "x1"))
    ax.set_xlabel("t")
    ax.set_ylabel("x(t)")
    ax.set_title("State over 30 sampling periods")
    fig.savefig(out / "fig2.png", dpi=150)

    paths = defaultdict(list)
    for r in read(out / "fig3.csv"):
        paths[r["start"]].append((float(r["x1"]), float(r["x2"])))
    fig, ax = plt.subplots()
    for pts in paths.values():
        xs, ys = zip(*pts)
        ax.plot(xs, ys, lw=0.8)
        ax.plot(xs[0], ys[0], "k.", ms=3)
    ax.plot([0, -1, -2], [0, -1, -2], "rx", label="equilibria")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.legend()
    ax.set_title("Sampled-data trajectories, second example")
    fig.savefig(out / "fig3.png", dpi=150)
    print(f"wrote fig1.png, fig2.png, fig3.png to {out}")


if __name__ == "__main__":
    main()

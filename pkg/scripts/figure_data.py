"""CSV data behind the three trajectory figures.

* ``fig1.csv`` - V, Q and V + Q over one sampling period for Example 1 with a
  degree-8 certificate at T = 1.8 (V dips and rises again inside the
  interval while V + Q keeps falling).
* ``fig2.csv`` - x(t) for Example 1 over 30 sampling periods at T = 1.8.
* ``fig3.csv`` - Example 2 phase-plane trajectories at T = 0.4 from a ring of
  initial states. No global certificate exists for this system (it has three
  equilibria), so no level set is emitted; trajectories are tagged by start.

    python scripts/figure_data.py --outdir results
"""

import argparse
import csv
import math
from dataclasses import dataclass
from pathlib import Path

from sampcert.cli import bundled_system_path
from sampcert.expr import parse_system
from sampcert.simulate import SamplingSchedule, simulate, trace_functionals, write_trace_csv
from sampcert.stability import StabilityQuery, certify


@dataclass
class FigureConfig:
    outdir: Path = Path("results")
    T: float = 1.8
    degree: int = 8
    fig1_x0: float = 0.6  # a start whose first interval shows V rising
    x0: float = 1.0
    periods: int = 30
    ex2_T: float = 0.4
    ex2_radius: float = 2.0
    ex2_starts: int = 12
    ex2_periods: int = 40


def figure1(cfg: FigureConfig, ex1):
    res = certify(StabilityQuery(ex1, cfg.degree, T=cfg.T))
    if not res.certified:
        raise SystemExit(f"no certificate at T={cfg.T}, N={cfg.degree}: {res.status} {res.message}")
    cert = res.certificate
    cert.save(cfg.outdir / "fig1_certificate.json")
    tr = simulate(ex1, [cfg.fig1_x0], SamplingSchedule.fixed(cfg.T), periods=1)
    write_trace_csv(cfg.outdir / "fig1.csv", tr, trace_functionals(tr, cert))


def figure2(cfg: FigureConfig, ex1):
    tr = simulate(ex1, [cfg.x0], SamplingSchedule.fixed(cfg.T), periods=cfg.periods)
    write_trace_csv(cfg.outdir / "fig2.csv", tr)


def figure3(cfg: FigureConfig, ex2):
    with open(cfg.outdir / "fig3.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["start", "t", "x1", "x2", "status"])
        for j in range(cfg.ex2_starts):
            a = 2 * math.pi * j / cfg.ex2_starts
            x0 = [cfg.ex2_radius * math.cos(a), cfg.ex2_radius * math.sin(a)]
            tr = simulate(ex2, x0, SamplingSchedule.fixed(cfg.ex2_T), periods=cfg.ex2_periods)
            for t, z in zip(tr.times, tr.states):
                w.writerow([j, repr(float(t)), repr(float(z[0])), repr(float(z[1])), tr.status])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--outdir", type=Path, default=Path("results"))
    p.add_argument("--T", type=float, default=1.8)
    p.add_argument("--degree", type=int, default=8)
    a = p.parse_args(argv)
    cfg = FigureConfig(outdir=a.outdir, T=a.T, degree=a.degree)
    cfg.outdir.mkdir(parents=True, exist_ok=True)
    ex1 = parse_system(bundled_system_path("ex1"))
    ex2 = parse_system(bundled_system_path("ex2"))
    figure1(cfg, ex1)
    figure2(cfg, ex1)
    figure3(cfg, ex2)
    print(f"wrote fig1.csv, fig2.csv, fig3.csv to {cfg.outdir}")


if __name__ == "__main__":
    main()

"""Maximum certifiable sampling periods by degree (Examples 1-3).

Writes ``results/max_periods.csv`` and prints a markdown table. Degrees 8 and 10
take minutes each; pass ``--max-degree 6`` for a quick run.

    python scripts/max_periods.py --max-degree 10
"""

import argparse
import csv
import time
from dataclasses import dataclass
from pathlib import Path

from sampcert.cli import bundled_system_path
from sampcert.expr import parse_system
from sampcert.stability import ASYNC, SYNC, max_sampling_period

# reference values reported for the original experiments
REFERENCE = {
    ("ex1", SYNC): {2: None, 4: 0.7901, 6: 1.5449, 8: 1.8192, 10: 1.8411},
    ("ex3", ASYNC): {2: None, 4: 0.7891, 6: 1.542},
}


@dataclass
class TableConfig:
    max_degree: int = 10
    max_async_degree: int = 6
    resolution: float = 1e-3
    T_hi: float = 5.0
    include_ex2: bool = True
    out: Path = Path("results/max_periods.csv")


def rows(cfg: TableConfig):
    runs = [("ex1", SYNC, cfg.max_degree), ("ex3", ASYNC, cfg.max_async_degree)]
    if cfg.include_ex2:
        runs.append(("ex2", SYNC, min(cfg.max_degree, 6)))
    for name, mode, top in runs:
        system = parse_system(bundled_system_path(name))
        for N in range(2, top + 1, 2):
            t0 = time.perf_counter()
            res = max_sampling_period(system, N, mode=mode, T_hi=cfg.T_hi, resolution=cfg.resolution)
            secs = time.perf_counter() - t0
            ref = REFERENCE.get((name, mode), {}).get(N)
            yield {"system": name, "mode": mode, "degree": N,
                   "T_star": "" if res.T_star is None else f"{res.T_star:.4f}",
                   "reference": "" if ref is None else ref, "seconds": f"{secs:.1f}"}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--max-degree", type=int, default=10)
    p.add_argument("--max-async-degree", type=int, default=6)
    p.add_argument("--resolution", type=float, default=1e-3)
    p.add_argument("--skip-ex2", action="store_true")
    p.add_argument("--out", type=Path, default=Path("results/max_periods.csv"))
    a = p.parse_args(argv)
    cfg = TableConfig(a.max_degree, a.max_async_degree, a.resolution, include_ex2=not a.skip_ex2, out=a.out)

    cfg.out.parent.mkdir(parents=True, exist_ok=True)
    fields = ["system", "mode", "degree", "T_star", "reference", "seconds"]
    print("| " + " | ".join(fields) + " |")
    print("|" + "---|" * len(fields))
    with open(cfg.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in rows(cfg):
            w.writerow(row)
            fh.flush()
            print("| " + " | ".join(str(row[f]) or "none" for f in fields) + " |", flush=True)


if __name__ == "__main__":
    main()

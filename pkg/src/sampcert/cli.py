"""Command-line front end: ``sampcert certify | max-t | simulate | verify``.

Exit codes: 0 success/certified, 1 infeasible/not certified (or a diverging
simulation), 2 usage or input error, 3 inconclusive.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .expr import SystemDef, SystemFileError, parse_system
from .simulate import (OK, SamplingSchedule, SimulationError, simulate, trace_functionals,
                       write_trace_csv)
from .stability import (ASYNC, CERTIFIED, INCONCLUSIVE, SYNC, Certificate, StabilityQuery,
                        certify, max_sampling_period, verify_certificate)

EXIT_OK = 0
EXIT_NOT_CERTIFIED = 1
EXIT_USAGE = 2
EXIT_INCONCLUSIVE = 3

TOL_ENV = "SAMPCERT_SOLVER_TOL"

log = logging.getLogger("sampcert")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Validated command-line parameters."""

    command: str
    system: SystemDef | None = None
    system_path: str | None = None
    mode: str = SYNC
    T: float | None = None
    T_min: float | None = None
    T_max: float | None = None
    degree: int = 4
    alpha: float = 0.0
    mu1: float = 1e-2
    eps: float = 1e-6
    resolution: float = 1e-3
    periods: int = 30
    x0: tuple[float, ...] | None = None
    seed: int = 0
    out: str | None = None
    certificate: str | None = None
    solver_tol: float = 1e-8

    def search_params(self) -> dict:
        return {"alpha": self.alpha, "mu1": self.mu1, "eps": self.eps}


def bundled_system_path(name: str) -> Path | None:
    """Path of a shipped example system (``ex1``, ``ex2.json``, ...), if any."""
    stem = Path(name).name
    if not stem.endswith(".json"):
        stem += ".json"
    ref = resources.files("sampcert") / "systems" / stem
    return Path(str(ref)) if ref.is_file() else None


def load_system(path: str) -> SystemDef:
    p = Path(path)
    if not p.exists():
        bundled = bundled_system_path(path)
        if bundled is None:
            raise UsageError(f"--system: file not found: {path}")
        p = bundled
    return parse_system(p)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--system", help="JSON system file (or a bundled name: ex1, ex2, ex3)")
    common.add_argument("--mode", choices=[SYNC, ASYNC], default=SYNC)
    common.add_argument("--T", type=float, help="sampling period (synchronous)")
    common.add_argument("--Tmin", type=float, help="lower bound on the sampling interval")
    common.add_argument("--Tmax", type=float, help="upper bound on the sampling interval")
    common.add_argument("--degree", type=int, default=4, help="degree N of V and F (even)")
    common.add_argument("--alpha", type=float, default=0.0)
    common.add_argument("--mu1", type=float, default=1e-2)
    common.add_argument("--eps", type=float, default=1e-6)
    common.add_argument("--out", help="output path")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="sampcert",
                                 description="Stability certificates for polynomial sampled-data systems.")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("certify", parents=[common], help="search for a certificate at fixed T or [Tmin, Tmax]")
    mt = sub.add_parser("max-t", parents=[common], help="bisection for the largest certifiable period")
    mt.add_argument("--resolution", type=float, default=1e-3)
    sim = sub.add_parser("simulate", parents=[common], help="integrate a sampled-data trajectory")
    sim.add_argument("--periods", type=int, default=30)
    sim.add_argument("--x0", help="initial state, comma separated")
    sim.add_argument("--seed", type=int, default=0, help="seed for random periods in [Tmin, Tmax]")
    sim.add_argument("--certificate", help="certificate file; adds V, Q and V+Q columns")
    ver = sub.add_parser("verify", help="re-check a certificate file")
    ver.add_argument("certificate", help="certificate JSON file")
    ver.add_argument("-v", "--verbose", action="store_true")
    return ap


def _solver_tol() -> float:
    raw = os.environ.get(TOL_ENV)
    if raw is None:
        return 1e-8
    try:
        tol = float(raw)
    except ValueError:
        raise UsageError(f"{TOL_ENV}: not a number: {raw!r}") from None
    if not tol > 0:
        raise UsageError(f"{TOL_ENV}: must be positive")
    return tol


def make_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=args.command, solver_tol=_solver_tol())
    if args.command == "verify":
        cfg.certificate = args.certificate
        return cfg
    if not args.system:
        raise UsageError("--system is required")
    cfg.system_path = args.system
    cfg.system = load_system(args.system)
    cfg.mode, cfg.T, cfg.T_min, cfg.T_max = args.mode, args.T, args.Tmin, args.Tmax
    if args.degree < 2 or args.degree % 2:
        raise UsageError(f"--degree: must be an even integer >= 2, got {args.degree}")
    cfg.degree = args.degree
    cfg.alpha, cfg.mu1, cfg.eps, cfg.out = args.alpha, args.mu1, args.eps, args.out

    if args.command == "certify":
        if cfg.mode == SYNC and cfg.T is None:
            raise UsageError("--T is required in synchronous mode")
        if cfg.mode == ASYNC and (cfg.T_max is None):
            raise UsageError("--Tmax is required in asynchronous mode")
        if cfg.mode == ASYNC and cfg.T_min is None:
            cfg.T_min = 0.0
    elif args.command == "max-t":
        cfg.resolution = args.resolution
        if cfg.T_min is None:
            cfg.T_min = 0.0
    elif args.command == "simulate":
        cfg.periods, cfg.seed, cfg.certificate = args.periods, args.seed, args.certificate
        if args.x0 is None:
            raise UsageError("--x0 is required")
        try:
            cfg.x0 = tuple(float(v) for v in args.x0.split(","))
        except ValueError:
            raise UsageError(f"--x0: not a comma-separated list of numbers: {args.x0!r}") from None
        if len(cfg.x0) != cfg.system.n:
            raise UsageError(f"--x0: expected {cfg.system.n} values, got {len(cfg.x0)}")
        if cfg.T is None and (cfg.T_min is None or cfg.T_max is None):
            raise UsageError("simulate needs --T, or --Tmin and --Tmax for random periods")
    return cfg


def _query(cfg: RunConfig) -> StabilityQuery:
    if cfg.mode == SYNC:
        return StabilityQuery(cfg.system, cfg.degree, SYNC, T=cfg.T, **cfg.search_params())
    return StabilityQuery(cfg.system, cfg.degree, ASYNC, T_min=cfg.T_min, T_max=cfg.T_max,
                          **cfg.search_params())


def cmd_certify(cfg: RunConfig) -> int:
    res = certify(_query(cfg), tol=cfg.solver_tol)
    print(f"status: {res.status}")
    if res.margin is not None:
        print(f"margin: {res.margin:.3e}")
    if res.message:
        print(f"note: {res.message}")
    if res.status == CERTIFIED:
        out = cfg.out or "certificate.json"
        res.certificate.save(out)
        print(f"certificate: {out}")
        print(res.report.summary())
        return EXIT_OK
    if res.report is not None:
        print(res.report.summary())
    return EXIT_INCONCLUSIVE if res.status == INCONCLUSIVE else EXIT_NOT_CERTIFIED


def cmd_max_t(cfg: RunConfig) -> int:
    T_hi = cfg.T_max if cfg.T_max is not None else 5.0
    res = max_sampling_period(cfg.system, cfg.degree, mode=cfg.mode, T_lo=cfg.T_min if cfg.mode == ASYNC else 0.0,
                              T_hi=T_hi, resolution=cfg.resolution, T_min=cfg.T_min,
                              tol=cfg.solver_tol, **cfg.search_params())
    value = f"{res.T_star:.4f}" if res.found else "none"
    label = "Maximum Asynchronous T" if cfg.mode == ASYNC else "Maximum Synchronous T"
    print(f"T_star: {value}")
    print(f"{cfg.system.name} | {label} | N={cfg.degree} | {value} | "
          f"bracket [{res.bracket[0]:.6g}, {res.bracket[1]:.6g}] | probes {len(res.probes)}")
    if res.message:
        print(f"note: {res.message}")
    if res.found and cfg.out:
        res.certificate.save(cfg.out)
        print(f"certificate: {cfg.out}")
    return EXIT_OK if res.found else EXIT_NOT_CERTIFIED


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.T is not None:
        schedule = SamplingSchedule.fixed(cfg.T)
    else:
        schedule = SamplingSchedule.random_uniform(cfg.T_min, cfg.T_max, cfg.seed)
    trace = simulate(cfg.system, cfg.x0, schedule, periods=cfg.periods)
    fn = None
    if cfg.certificate:
        fn = trace_functionals(trace, _load_certificate(cfg.certificate))
    out = cfg.out or "trace.csv"
    write_trace_csv(out, trace, fn)
    print(f"status: {trace.status}")
    if trace.status != OK:
        print(f"overflow at t = {trace.overflow_time:.6g}")
    print(f"final state: {','.join(f'{v:.6g}' for v in trace.states[-1])}")
    print(f"trace: {out}")
    return EXIT_OK if trace.status == OK else EXIT_NOT_CERTIFIED


def _load_certificate(path: str) -> Certificate:
    try:
        return Certificate.load(path)
    except FileNotFoundError:
        raise UsageError(f"certificate: file not found: {path}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"certificate: malformed file {path}: {exc}") from None


def cmd_verify(cfg: RunConfig) -> int:
    report = verify_certificate(_load_certificate(cfg.certificate))
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_NOT_CERTIFIED


COMMANDS = {"certify": cmd_certify, "max-t": cmd_max_t, "simulate": cmd_simulate, "verify": cmd_verify}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors itself
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
        return COMMANDS[cfg.command](cfg)
    except (UsageError, SystemFileError, SimulationError, ValueError) as exc:
        print(f"sampcert: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

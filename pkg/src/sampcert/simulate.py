"""Sampled-data trajectories, Lyapunov functionals along them, linear oracles.

A trajectory of ``dz/dt = f(z, x_k)`` is integrated with classical RK4 on
each interval ``[t_k, t_k + T_k]`` with the held sample ``x_k = z(t_k)``
frozen; the last substep of every interval is shortened so the grid lands
exactly on the next sampling instant.

For linear systems ``dz/dt = A0 z + A1 x_k`` the flow map over one interval
is available in closed form and gives an exact stability oracle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .expr import SystemDef

OK = "ok"
OVERFLOW = "overflow"

#: ``|x|`` beyond which a trajectory is declared divergent.
OVERFLOW_LIMIT = 1e9
#: Default number of RK4 steps per sampling interval.
STEPS_PER_PERIOD = 200


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class SamplingSchedule:
    """Sequence of sampling intervals ``T_k``.

    Build with :meth:`fixed`, :meth:`sequence` or :meth:`random_uniform`;
    the random kind is reproducible from its seed.
    """

    kind: str
    T: float | None = None
    values: tuple[float, ...] = ()
    T_min: float | None = None
    T_max: float | None = None
    seed: int | None = None

    @classmethod
    def fixed(cls, T: float) -> "SamplingSchedule":
        if not T > 0:
            raise SimulationError("sampling period must be positive")
        return cls("fixed", T=float(T))

    @classmethod
    def sequence(cls, values: Sequence[float]) -> "SamplingSchedule":
        vals = tuple(float(v) for v in values)
        if not vals or min(vals) <= 0:
            raise SimulationError("a schedule needs at least one positive period")
        return cls("sequence", values=vals)

    @classmethod
    def random_uniform(cls, T_min: float, T_max: float, seed: int = 0) -> "SamplingSchedule":
        if not (0 <= T_min < T_max):
            raise SimulationError("need 0 <= T_min < T_max")
        return cls("random-uniform", T_min=float(T_min), T_max=float(T_max), seed=int(seed))

    def periods(self, count: int) -> np.ndarray:
        """The first ``count`` intervals ``T_0 .. T_{count-1}``."""
        if count < 1:
            raise SimulationError("need at least one period")
        if self.kind == "fixed":
            return np.full(count, self.T)
        if self.kind == "sequence":
            if count > len(self.values):
                raise SimulationError(f"schedule has {len(self.values)} periods, {count} requested")
            return np.array(self.values[:count])
        rng = np.random.default_rng(self.seed)
        out = rng.uniform(self.T_min, self.T_max, size=count)
        # uniform draws may hit T_min = 0 exactly; an empty interval is meaningless
        return np.where(out > 0, out, self.T_max)


@dataclass
class SimTrace:
    """Integrated trajectory.

    ``times``/``states`` hold one row per integration point, strictly
    increasing in time; ``interval[i]`` is the sampling interval the row
    belongs to (the row at ``t_k`` opens interval ``k``; the very last row
    closes the final interval). ``sample_instants`` has one more entry than
    ``schedule``.
    """

    times: np.ndarray
    states: np.ndarray
    interval: np.ndarray
    sample_instants: np.ndarray
    held_samples: np.ndarray
    schedule: np.ndarray
    status: str = OK
    overflow_time: float | None = None

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def samples(self) -> np.ndarray:
        """States at the sampling instants that were reached."""
        idx = np.searchsorted(self.times, self.sample_instants[: len(self.held_samples) + 1])
        idx = idx[idx < len(self.times)]
        return self.states[idx]


def _rk4_step(f, z, x, h):
    k1 = f(z, x)
    k2 = f(z + 0.5 * h * k1, x)
    k3 = f(z + 0.5 * h * k2, x)
    k4 = f(z + h * k3, x)
    return z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _substeps(T: float, step: float) -> list[float]:
    m = max(1, math.ceil(T / step - 1e-9))
    return [step] * (m - 1) + [T - step * (m - 1)]


def simulate(system: SystemDef, x0: Sequence[float], schedule: SamplingSchedule,
             periods: int = 30, step: float | None = None) -> SimTrace:
    """Integrate ``periods`` sampling intervals from ``x0``.

    ``step`` defaults to ``T_k / 200`` on each interval; an explicit step must
    not exceed a tenth of the shortest interval.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != system.n:
        raise SimulationError(f"x0 has {x0.size} entries, system has {system.n} states")
    Ts = schedule.periods(periods)
    if step is not None and not (0 < step <= Ts.min() / 10):
        raise SimulationError(f"step must lie in (0, min T_k / 10 = {Ts.min() / 10:.3g}]")
    f = system.rhs()

    instants = np.empty(periods + 1)
    instants[0] = 0.0
    for k, T in enumerate(Ts):
        instants[k + 1] = instants[k] + T

    times = [0.0]
    states = [x0.copy()]
    interval = [0]
    held = []
    z = x0.copy()
    status, t_over = OK, None
    for k, T in enumerate(Ts):
        xk = z.copy()
        held.append(xk)
        h = step if step is not None else T / STEPS_PER_PERIOD
        subs = _substeps(T, h)
        t0 = instants[k]
        for j, hj in enumerate(subs):
            z = _rk4_step(f, z, xk, hj)
            t = instants[k + 1] if j == len(subs) - 1 else t0 + (j + 1) * h
            if not np.all(np.isfinite(z)) or np.linalg.norm(z) > OVERFLOW_LIMIT:
                status, t_over = OVERFLOW, float(t)
                break
            times.append(t)
            states.append(z.copy())
            interval.append(k + 1 if j == len(subs) - 1 and k + 1 < periods else k)
        if status != OK:
            break

    return SimTrace(np.array(times), np.array(states), np.array(interval, dtype=int),
                    instants, np.array(held).reshape(-1, system.n), Ts[: len(held)],
                    status, t_over)


# -- V and Q along a trajectory ---------------------------------------------

@dataclass
class Functionals:
    V: np.ndarray
    Q: np.ndarray
    endpoint_Q: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))

    @property
    def VplusQ(self) -> np.ndarray:
        return self.V + self.Q


def _spacing_points(cert, elapsed: np.ndarray, xk: np.ndarray, z: np.ndarray,
                    theta: np.ndarray) -> np.ndarray:
    """Rows of certificate variables; ``elapsed`` and ``theta`` in units of h.

    Certificates count time backwards from the next sample, in units of the
    horizon: ``1 - elapsed`` when synchronous, ``theta - elapsed`` otherwise.
    """
    if cert.query.mode == "async":
        remaining = theta - elapsed
    else:
        remaining = 1.0 - elapsed
    cols = [remaining[:, None], xk, z]
    if cert.query.mode == "async":
        cols.append(theta[:, None])
    return np.hstack(cols)


def trace_functionals(trace: SimTrace, cert) -> Functionals:
    """``V(x(t))``, ``Q_k(t - t_k) = F(t - t_k, x_k, x(t)[, T_k])`` and the
    endpoint pairs ``(Q_k(T_k), e^{-2 alpha h} Q_k(0))`` per completed interval."""
    n = cert.query.system.n
    if n != trace.n:
        raise SimulationError(f"certificate is for n={n}, trace has n={trace.n}")
    h = cert.time_scale
    V = cert.V.evaluate_many(trace.states)

    # rows at a sampling instant that closes interval k-1 are evaluated with
    # interval k, except the final row which closes the last interval
    k = trace.interval
    xk = trace.held_samples[np.minimum(k, len(trace.held_samples) - 1)]
    tau = (trace.times - trace.sample_instants[k]) / h
    theta = trace.schedule[np.minimum(k, len(trace.schedule) - 1)] / h
    Q = cert.F.evaluate_many(_spacing_points(cert, tau, xk, trace.states, theta))

    ends = []
    decay = math.exp(-2 * cert.query.alpha * h)
    n_done = len(trace.held_samples) if trace.status == OK else len(trace.held_samples) - 1
    for j in range(n_done):
        th = np.array([trace.schedule[j] / h])
        x = trace.held_samples[j][None, :]
        z_end = trace.states[np.searchsorted(trace.times, trace.sample_instants[j + 1])][None, :]
        q_end = cert.F.evaluate_many(_spacing_points(cert, th, x, z_end, th))[0]
        q_start = cert.F.evaluate_many(_spacing_points(cert, np.zeros(1), x, x, th))[0]
        ends.append((q_end, decay * q_start))
    return Functionals(V, Q, np.array(ends).reshape(-1, 2))


def interval_profiles(trace: SimTrace, functionals: Functionals) -> list[np.ndarray]:
    """``V + Q_k`` on each completed closed interval ``[t_k, t_{k+1}]``.

    ``Q`` resets at sampling instants (``Q_{k+1}(0)`` need not equal
    ``Q_k(T_k)``), so monotonicity is a per-interval property; the closing
    value uses interval ``k``'s own ``Q_k(T_k)``.
    """
    out = []
    W = functionals.VplusQ
    for k, (q_end, _) in enumerate(functionals.endpoint_Q):
        rows = np.flatnonzero(trace.interval == k)
        i_end = np.searchsorted(trace.times, trace.sample_instants[k + 1])
        if rows.size and rows[-1] == i_end:  # final row already belongs to interval k
            rows = rows[:-1]
        out.append(np.append(W[rows], functionals.V[i_end] + q_end))
    return out


def write_trace_csv(path: str | Path, trace: SimTrace, functionals: Functionals | None = None) -> None:
    """CSV with header ``t,x1..xn,k[,V,Q,VplusQ]``, one row per integration point."""
    header = ["t"] + [f"x{i}" for i in range(1, trace.n + 1)] + ["k"]
    if functionals is not None:
        header += ["V", "Q", "VplusQ"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, t in enumerate(trace.times):
            row = [repr(float(t))] + [repr(float(v)) for v in trace.states[i]] + [int(trace.interval[i])]
            if functionals is not None:
                row += [repr(float(functionals.V[i])), repr(float(functionals.Q[i])),
                        repr(float(functionals.VplusQ[i]))]
            w.writerow(row)


# -- linear oracles ------------------------------------------------------------

class BracketExhausted(RuntimeError):
    """Every probed period up to the bracket end is stable."""


class NoStablePeriod(RuntimeError):
    """No probed period gives a stable sampled-data system."""


def linear_flow_map(A0, A1, s: float) -> np.ndarray:
    """``Gamma(s) = e^{A0 s} + int_0^s e^{A0 (s - r)} A1 dr``.

    Read off the exponential of ``s * [[A0, A1], [0, 0]]``: its top-left block
    is ``e^{A0 s}`` and its top-right block is the integral term.
    """
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    A1 = np.atleast_2d(np.asarray(A1, dtype=float))
    if s < 0:
        raise ValueError("s must be non-negative")
    n = A0.shape[0]
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = A0
    M[:n, n:] = A1
    E = expm(M * s)
    return E[:n, :n] + E[:n, n:]


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.atleast_2d(M)))))


def linear_max_T(A0, A1, resolution: float = 1e-3, T_hi: float = 10.0) -> float:
    """Largest ``T`` with ``rho(Gamma(T)) < 1``, to ``resolution``.

    Scans ``(0, T_hi]`` for the first stable period, then bisects on the
    first stable-to-unstable transition after it.
    """
    if resolution <= 0 or T_hi <= 0:
        raise ValueError("need resolution > 0 and T_hi > 0")

    def stable(T: float) -> bool:
        return spectral_radius(linear_flow_map(A0, A1, T)) < 1.0

    grid = np.linspace(0.0, T_hi, max(2, int(math.ceil(T_hi / max(resolution, T_hi / 2000)))) + 1)[1:]
    flags = [stable(T) for T in grid]
    if not any(flags):
        raise NoStablePeriod(f"no stable period in (0, {T_hi}]")
    first = flags.index(True)
    try:
        j = flags.index(False, first)
    except ValueError:
        raise BracketExhausted(f"stable up to the bracket end T = {T_hi}") from None
    lo, hi = float(grid[j - 1]), float(grid[j])
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return lo

"""Stability certificates for polynomial sampled-data systems.

Encodes the Lyapunov/spacing-function conditions as SOS programs, solves
them with :mod:`sampcert.conic`, extracts concrete polynomials and verifies
them independently of the solver.

Variable layout: ``t`` (time *remaining* until the next sample), ``x1..xn``
(the held sample), ``z1..zn`` (the current state) and, in asynchronous mode,
``T`` (the current sampling interval). ``t`` and ``T`` are divided by the
horizon ``h`` (``T`` or ``T_max``) so that time ranges over ``[0, 1]``.

Both choices are affine changes of the time variable, so the polynomial
classes (and hence feasibility) are unchanged; they only change the monomial
basis. Scaling keeps the basis well conditioned for long periods. Counting
time backwards puts the end of the interval at ``t = 0``: there the
localizers vanish and the boundary condition removes the state from ``F``,
which forces part of ``s_0`` to vanish. At ``t = 0`` that forced face is
aligned with the monomial basis, so the structural facial reduction in
:mod:`sampcert.sosprog` removes it and the margin program stays strictly
feasible at high degree. :meth:`Certificate.F_physical` converts back to
ordinary forward time.

Feasibility is decided through a *margin* program: every Gram block is
written ``H + lam*I`` with ``H`` PSD and ``lam`` is maximised. The original
conditions are feasible iff the optimal ``lam`` is (numerically) non-negative.
Any candidate is then re-checked by :func:`verify_certificate`, so a
certificate is only ever returned after exact re-expansion of every identity.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import conic
from .expr import SystemDef, system_from_dict
from .poly import Monomial, Polynomial, VarSet, monomials_upto
from .sosprog import InfeasibleRowError, LinearForm, SosProgram, basis_touching

log = logging.getLogger(__name__)

SYNC = "sync"
ASYNC = "async"

CERTIFIED = "certified"
INFEASIBLE = "infeasible"
INCONCLUSIVE = "inconclusive"

#: Optimal margins above ``-DECISION_TOL`` are treated as feasible candidates.
DECISION_TOL = 1e-7
#: Identity and boundary residual tolerance, relative to the coefficient scale.
RESIDUAL_TOL = 1e-6
#: Minimum Gram eigenvalue accepted, relative to ``max(1, max |G_ij|)``.
PSD_TOL = 1e-8
#: Tolerances once the coefficient residual has been folded into the free SOS
#: multipliers. They sit at floating-point level, far below ``eps * h``: with
#: the looser ones above, a candidate whose margin is slightly negative can
#: hide the whole decrease margin inside the tolerance (this happens for a
#: system with several equilibria, which admits no certificate at all).
ABSORBED_PSD_TOL = 1e-12
UNREACHABLE_TOL = 1e-10
#: Extra solves allowed after pruning Gram monomials that vanish at a
#: zero-margin optimum, and the relative diagonal size counted as vanishing.
FACE_ROUNDS = 3
FACE_TOL = 1e-7


@dataclass(frozen=True)
class StabilityQuery:
    """What to certify: a system, a sampling regime and the search parameters."""

    system: SystemDef
    degree: int = 4
    mode: str = SYNC
    T: float | None = None
    T_min: float | None = None
    T_max: float | None = None
    alpha: float = 0.0
    mu1: float = 1e-2
    eps: float = 1e-6

    def __post_init__(self):
        if not isinstance(self.degree, int) or self.degree < 2 or self.degree % 2:
            raise ValueError(f"degree must be an even integer >= 2, got {self.degree!r}")
        if self.mode == SYNC:
            if self.T is None or not self.T > 0:
                raise ValueError("synchronous mode needs a sampling period T > 0")
        elif self.mode == ASYNC:
            if self.T_min is None or self.T_max is None:
                raise ValueError("asynchronous mode needs T_min and T_max")
            if not (0 <= self.T_min < self.T_max):
                raise ValueError("asynchronous mode needs 0 <= T_min < T_max "
                                 "(use synchronous mode for a single period)")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.alpha < 0 or self.mu1 <= 0 or self.eps < 0:
            raise ValueError("need alpha >= 0, mu1 > 0, eps >= 0")

    @property
    def horizon(self) -> float:
        """Longest sampling interval covered."""
        return self.T if self.mode == SYNC else self.T_max

    def to_dict(self) -> dict:
        return {
            "system": self.system.to_json(),
            "degree": self.degree,
            "mode": self.mode,
            "T": self.T,
            "T_min": self.T_min,
            "T_max": self.T_max,
            "alpha": self.alpha,
            "mu1": self.mu1,
            "eps": self.eps,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StabilityQuery":
        return cls(system=system_from_dict(data["system"]), degree=int(data["degree"]),
                   mode=data["mode"], T=data.get("T"), T_min=data.get("T_min"),
                   T_max=data.get("T_max"), alpha=float(data.get("alpha", 0.0)),
                   mu1=float(data.get("mu1", 1e-2)), eps=float(data.get("eps", 1e-6)))


def certificate_varset(n: int, mode: str) -> VarSet:
    names = ["t"] + [f"x{i}" for i in range(1, n + 1)] + [f"z{i}" for i in range(1, n + 1)]
    if mode == ASYNC:
        names.append("T")
    return VarSet(names)


def state_only_varset(n: int) -> VarSet:
    return VarSet([f"z{i}" for i in range(1, n + 1)])


# -- problem data shared by encoder and verifier ----------------------------

def _sq_norm(vs: VarSet, names: Sequence[str]) -> Polynomial:
    out = Polynomial.zero(vs)
    for z in names:
        out = out + Polynomial.var(vs, z) ** 2
    return out


def _localizers(query: StabilityQuery, vs: VarSet) -> list[Polynomial]:
    """Sets on which the decrease condition is imposed, in normalised time."""
    t = Polynomial.var(vs, "t")
    if query.mode == SYNC:
        return [t * (1.0 - t)]
    T = Polynomial.var(vs, "T")
    h = query.horizon
    return [t * (T - t), (T - query.T_min / h) * (1.0 - T)]


def _decrease_lhs(query: StabilityQuery, vs: VarSet, V: Polynomial, F: Polynomial,
                  scale=1.0) -> Polynomial:
    """h * (grad V.f + grad_z F.f + dF/dt_fwd + 2 alpha (V + F) + eps*scale*|z|^2).

    ``F`` is in normalised remaining time ``t = (t_{k+1} - t_fwd) / h``, so
    its forward time derivative is ``-dF/dt / h``; the whole expression is
    multiplied by ``h`` to keep it polynomial in the data.
    """
    n = query.system.n
    h = query.horizon
    zs = [f"z{i}" for i in range(1, n + 1)]
    f = [p.reorder(vs) for p in query.system.f]
    flow = Polynomial.zero(vs)
    for z, fi in zip(zs, f):
        flow = flow + (V.diff(z) + F.diff(z)) * fi
    if query.alpha:
        flow = flow + (V + F) * (2 * query.alpha)
    if query.eps:
        flow = flow + _sq_norm(vs, zs) * (query.eps * scale)
    return flow * h - F.diff("t")


def _boundary(query: StabilityQuery, vs: VarSet, F: Polynomial) -> Polynomial:
    """F at the end of the interval minus e^{-2 alpha h} F at its start (z = x).

    In remaining time the end is ``t = 0`` and the start is ``t = 1``
    (synchronous) or ``t = T`` (asynchronous). Must vanish identically.
    """
    n = query.system.n
    decay = math.exp(-2 * query.alpha * query.horizon)
    at_end = F.substitute({"t": 0.0})
    reset = {"t": Polynomial.var(vs, "T") if query.mode == ASYNC else 1.0}
    for i in range(1, n + 1):
        reset[f"z{i}"] = Polynomial.var(vs, f"x{i}")
    at_start = F.substitute(reset)
    return at_end - at_start * decay


# -- encoding ----------------------------------------------------------------

@dataclass
class Encoding:
    """A compiled-ready SOS program together with handles on its unknowns."""

    query: StabilityQuery
    program: SosProgram
    varset: VarSet
    V: object
    F: object
    positivity: object
    multipliers: list
    localizers: list[Polynomial]
    margin: LinearForm | None
    scale: object = None


def _encode(query: StabilityQuery, margin: bool = True,
            bases: dict[str, list[Monomial]] | None = None) -> Encoding:
    n, N = query.system.n, query.degree
    vs = certificate_varset(n, query.mode)
    xs = [f"x{i}" for i in range(1, n + 1)]
    zs = [f"z{i}" for i in range(1, n + 1)]
    zpos = [vs.index(z) for z in zs]
    spos = [vs.index(v) for v in xs + zs]
    bases = bases or {}

    def z_only(m: Monomial) -> bool:
        return sum(m) == sum(m[i] for i in zpos)

    def state_degree(m: Monomial) -> int:
        return sum(m[i] for i in spos)

    prog = SosProgram()
    lam = prog.new_scalar("margin") if margin else None

    # V(z): no constant or linear part (V >= mu1|z|^2 forces both to vanish)
    v_basis = [m for m in monomials_upto(vs, N) if z_only(m) and sum(m) >= 2]
    V = prog.new_decision_poly(vs, N, "V", basis=v_basis)
    # F vanishes where the state and the sample are both zero
    F = prog.new_decision_poly(vs, N, "F", basis=basis_touching(vs, N, xs + zs, 1))

    # kappa >= 0 multiplies the inhomogeneous margins mu1 and eps; the
    # certificate is recovered by dividing every unknown by kappa
    kappa = prog.new_sos_poly(vs, 0, "scale", basis=bases.get("scale", [(0,) * len(vs)]), shift=lam)
    k_form = kappa.poly.coefficient((0,) * len(vs))

    gram_v = [m for m in monomials_upto(vs, N // 2) if z_only(m) and sum(m) >= 1]
    sV = prog.new_sos_poly(vs, N, "positivity", basis=bases.get("positivity", gram_v), shift=lam)
    prog.assert_poly_eq(V.poly - _sq_norm(vs, zs) * (k_form * query.mu1), sV.poly, "positivity")

    localizers = _localizers(query, vs)
    lhs = _decrease_lhs(query, vs, V.poly, F.poly, scale=k_form)

    def no_constant_state(basis):
        return [m for m in basis if state_degree(m) >= 1]

    mults = prog.psatz_combine(-lhs, localizers, label="decrease",
                               basis_filter=no_constant_state, shift=lam, bases=bases)
    prog.assert_poly_eq(_boundary(query, vs, F.poly), 0.0, "boundary")

    # total Gram trace fixes the overall scale and keeps the feasible set bounded
    norm = LinearForm()
    for blk in prog.blocks:
        norm = norm + blk.trace_form()
        if lam is not None:
            norm = norm + lam * float(blk.size)
    prog.assert_linear(norm, 1.0, "normalization")
    if lam is not None:
        prog.set_objective(-lam)
    return Encoding(query, prog, vs, V, F, sV, mults, localizers, lam, kappa)


def encode_synchronous(query: StabilityQuery, **kw) -> Encoding:
    if query.mode != SYNC:
        raise ValueError("query is not synchronous")
    return _encode(query, **kw)


def encode_asynchronous(query: StabilityQuery, **kw) -> Encoding:
    if query.mode != ASYNC:
        raise ValueError("query is not asynchronous")
    return _encode(query, **kw)


def encode(query: StabilityQuery, **kw) -> Encoding:
    return _encode(query, **kw)


class StructurallyInfeasible(Exception):
    """Facial reduction forces the scale variable to zero: no certificate exists."""


def reduced_encoding(query: StabilityQuery,
                     bases: dict[str, list[Monomial]] | None = None) -> Encoding:
    """Margin encoding with Gram bases pruned by structural facial reduction.

    ``bases`` optionally restricts the starting Gram bases further.
    """
    plain = _encode(query, margin=False, bases=bases)
    bases = plain.program.facial_reduction()
    if not bases.get("scale"):
        raise StructurallyInfeasible(
            "the equality constraints force V - mu1|z|^2 and the decrease condition "
            "to hold only with zero scale")
    return _encode(query, margin=True, bases=bases)


# -- certificates ------------------------------------------------------------

@dataclass
class Multiplier:
    label: str
    basis: list[Monomial]
    gram: np.ndarray

    def poly(self, vs: VarSet) -> Polynomial:
        terms: dict[Monomial, float] = {}
        k = len(self.basis)
        for a in range(k):
            for b in range(k):
                m = tuple(x + y for x, y in zip(self.basis[a], self.basis[b]))
                terms[m] = terms.get(m, 0.0) + float(self.gram[a, b])
        return Polynomial(vs, terms)


@dataclass
class VerificationReport:
    passed: bool
    identity_residual: float
    boundary_residual: float
    positivity_residual: float
    min_gram_eigenvalue: float
    failures: list[str] = field(default_factory=list)

    def summary(self) -> str:
        head = "PASS" if self.passed else "FAIL"
        text = (f"{head}: identity residual {self.identity_residual:.2e}, boundary residual "
                f"{self.boundary_residual:.2e}, positivity residual {self.positivity_residual:.2e}, "
                f"min Gram eigenvalue {self.min_gram_eigenvalue:.2e}")
        if self.failures:
            text += "\n  " + "\n  ".join(self.failures)
        return text


@dataclass
class Certificate:
    """Concrete V, F and SOS multipliers for one query.

    ``V`` lives on ``(z1..zn)``; ``F`` and the multiplier bases on
    :func:`certificate_varset`, with ``t`` the time remaining until the next
    sample and ``t``, ``T`` measured in units of the horizon (see
    :meth:`F_physical` for ``F`` in ordinary forward time).
    ``multipliers[0]`` is the positivity block
    for ``V - mu1 |z|^2``; the rest pair with the localizers in order
    (unit localizer first).
    """

    query: StabilityQuery
    V: Polynomial
    F: Polynomial
    multipliers: list[Multiplier]
    diagnostics: dict = field(default_factory=dict)
    report: VerificationReport | None = None

    @property
    def varset(self) -> VarSet:
        return certificate_varset(self.query.system.n, self.query.mode)

    def V_full(self) -> Polynomial:
        return self.V.reorder(self.varset)

    @property
    def time_scale(self) -> float:
        return self.query.horizon

    def F_physical(self) -> Polynomial:
        """``F`` in ordinary units, ``t`` being the time elapsed since the sample.

        The stored ``F`` uses remaining time over ``h``; this substitutes
        ``t -> (T_k - t) / h`` (``T_k = h`` when synchronous, ``T`` otherwise)
        and ``T -> T / h``.
        """
        vs = self.varset
        h = self.time_scale
        t = Polynomial.var(vs, "t")
        if self.query.mode == ASYNC:
            T = Polynomial.var(vs, "T")
            return self.F.substitute({"t": (T - t) * (1.0 / h), "T": T * (1.0 / h)})
        return self.F.substitute({"t": 1.0 - t * (1.0 / h)})

    def to_dict(self) -> dict:
        vs = self.varset
        return {
            "query": self.query.to_dict(),
            "variables": list(vs.names),
            "time_scale": self.time_scale,
            "V": _terms_json(self.V),
            "V_variables": list(self.V.varset.names),
            "F": _terms_json(self.F),
            "multipliers": [
                {"label": m.label, "basis": [list(b) for b in m.basis],
                 "gram": [float(v) for v in np.asarray(m.gram).ravel()]}
                for m in self.multipliers
            ],
            "diagnostics": self.diagnostics,
            "verification": asdict(self.report) if self.report else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Certificate":
        query = StabilityQuery.from_dict(data["query"])
        vs = certificate_varset(query.system.n, query.mode)
        if list(vs.names) != list(data["variables"]):
            raise ValueError("certificate variables do not match the query")
        zvs = VarSet(data.get("V_variables", state_only_varset(query.system.n).names))
        mults = []
        for m in data["multipliers"]:
            basis = [tuple(int(e) for e in b) for b in m["basis"]]
            k = len(basis)
            gram = np.asarray(m["gram"], dtype=float)
            if gram.size != k * k:
                raise ValueError(f"multiplier {m['label']}: gram has {gram.size} entries, expected {k * k}")
            mults.append(Multiplier(m["label"], basis, gram.reshape(k, k)))
        return cls(query=query, V=_terms_from_json(zvs, data["V"]),
                   F=_terms_from_json(vs, data["F"]), multipliers=mults,
                   diagnostics=data.get("diagnostics", {}))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "Certificate":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _terms_json(p: Polynomial) -> list:
    return [[list(m), float(c)] for m, c in p.sorted_terms()]


def _terms_from_json(vs: VarSet, terms: list) -> Polynomial:
    return Polynomial(vs, {tuple(int(e) for e in m): float(c) for m, c in terms})


def _coef_scale(*polys: Polynomial) -> float:
    return max([1.0] + [abs(float(c)) for p in polys for c in p.terms.values()])


def _worst(p: Polynomial) -> tuple[float, Monomial | None]:
    if not p.terms:
        return 0.0, None
    m, c = max(p.terms.items(), key=lambda kv: abs(kv[1]))
    return abs(float(c)), m


def _monomial_text(vs: VarSet, m: Monomial) -> str:
    parts = [f"{n}^{e}" if e > 1 else n for n, e in zip(vs.names, m) if e]
    return "*".join(parts) or "1"


def _absorb(mult: Multiplier, residual: Polynomial) -> tuple[np.ndarray, Polynomial]:
    """Least-norm Gram correction ``D`` with ``Z' (G + D) Z = Z' G Z - residual``.

    Each monomial of the residual is spread evenly over the Gram entries that
    produce it. Returns the corrected Gram and the part of the residual that
    no Gram entry can reach.
    """
    k = len(mult.basis)
    pairs: dict[Monomial, list[tuple[int, int]]] = {}
    for a in range(k):
        for b in range(k):
            m = tuple(x + y for x, y in zip(mult.basis[a], mult.basis[b]))
            pairs.setdefault(m, []).append((a, b))
    G = np.array(mult.gram, dtype=float, copy=True).reshape(k, k)
    left: dict[Monomial, float] = {}
    for m, c in residual.terms.items():
        where = pairs.get(m)
        if not where:
            left[m] = c
            continue
        share = float(c) / len(where)
        for a, b in where:
            G[a, b] -= share
    return G, Polynomial(residual.varset, left)


def _check_block(label: str, G: np.ndarray, failures: list[str], tol: float = PSD_TOL) -> float:
    if G.size == 0:
        return math.inf
    if not np.allclose(G, G.T, rtol=0, atol=1e-12 * max(1.0, float(np.max(np.abs(G))))):
        failures.append(f"{label}: Gram matrix is not symmetric")
        return -math.inf
    e = float(np.linalg.eigvalsh((G + G.T) / 2)[0])
    if e < -tol * max(1.0, float(np.max(np.abs(G)))):
        failures.append(f"{label}: Gram matrix not PSD (min eigenvalue {e:.3e})")
    return e


def verify_certificate(cert: Certificate) -> VerificationReport:
    """Re-expand every identity from the certificate's numbers alone.

    Every identity must hold coefficient-wise to ``RESIDUAL_TOL`` relative to
    its coefficient scale and every Gram matrix must be PSD to ``PSD_TOL``.
    In addition, the coefficient residuals of the positivity and decrease
    identities are folded into their free SOS multiplier (``s_V`` and
    ``s_0``) and the corrected Gram matrices must still be PSD, so what is
    accepted is an exact SOS decomposition up to the eigenvalue tolerance
    rather than an approximate one. The boundary identity has no slack to
    absorb into.
    """
    q = cert.query
    vs = cert.varset
    zs = [f"z{i}" for i in range(1, q.system.n + 1)]
    failures: list[str] = []
    expected = 1 + len(_localizers(q, vs)) + 1
    if len(cert.multipliers) != expected:
        failures.append(f"expected {expected} multipliers, found {len(cert.multipliers)}")
        return VerificationReport(False, math.inf, math.inf, math.inf, -math.inf, failures)

    V = cert.V_full()
    F = cert.F
    if V.degree > q.degree:
        failures.append(f"deg V = {V.degree} exceeds N = {q.degree}")
    polys = [m.poly(vs) for m in cert.multipliers]

    # positivity: V - mu1 |z|^2 == s_V
    pos = polys[0] - (V - _sq_norm(vs, zs) * q.mu1)
    pos_scale = _coef_scale(V, polys[0])
    pos_res, pos_m = _worst(pos)
    if pos_res > RESIDUAL_TOL * pos_scale:
        failures.append(f"positivity identity violated at monomial {_monomial_text(vs, pos_m)} "
                        f"(residual {pos_res:.3e})")
    G_pos, pos_left = _absorb(cert.multipliers[0], pos)

    # decrease: lhs + s0 + sum s_i g_i == 0
    lhs = _decrease_lhs(q, vs, V, F)
    rhs = polys[1]
    for s, g in zip(polys[2:], _localizers(q, vs)):
        rhs = rhs + s * g
    ident = lhs + rhs
    id_scale = _coef_scale(lhs, rhs)
    id_res, id_m = _worst(ident)
    if id_res > RESIDUAL_TOL * id_scale:
        failures.append(f"decrease identity violated at monomial {_monomial_text(vs, id_m)} "
                        f"(residual {id_res:.3e})")
    G_s0, id_left = _absorb(cert.multipliers[1], ident)

    bnd = _boundary(q, vs, F)
    b_scale = _coef_scale(F)
    b_res, b_m = _worst(bnd)
    if b_res > RESIDUAL_TOL * b_scale:
        failures.append(f"boundary identity violated at monomial {_monomial_text(vs, b_m)} "
                        f"(residual {b_res:.3e})")

    min_eig = min([math.inf] + [_check_block(m.label, np.asarray(m.gram, dtype=float), failures)
                                for m in cert.multipliers])
    if not failures:
        for what, left, scale in (("positivity", pos_left, pos_scale), ("decrease", id_left, id_scale)):
            worst, m = _worst(left)
            if worst > UNREACHABLE_TOL * scale:
                failures.append(f"{what} residual at monomial {_monomial_text(vs, m)} ({worst:.3e}) "
                                "is outside the span of its SOS multiplier")
        for m, G in ((cert.multipliers[0], G_pos), (cert.multipliers[1], G_s0)):
            e = _check_block(m.label + " (residual absorbed)", G, failures, ABSORBED_PSD_TOL)
            min_eig = min(min_eig, e)

    return VerificationReport(
        passed=not failures,
        identity_residual=id_res / id_scale,
        boundary_residual=b_res / b_scale,
        positivity_residual=pos_res / pos_scale,
        min_gram_eigenvalue=min_eig,
        failures=failures,
    )


# -- certify -------------------------------------------------------------------

@dataclass
class CertifyResult:
    status: str
    certificate: Certificate | None
    margin: float | None
    solver_status: str
    report: VerificationReport | None = None
    message: str = ""

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED


def _psd_part(G: np.ndarray) -> np.ndarray:
    G = (G + G.T) / 2
    w, U = np.linalg.eigh(G)
    return (U * np.maximum(w, 0.0)) @ U.T


def _extract(enc: Encoding, x: np.ndarray, diagnostics: dict) -> Certificate | None:
    q = enc.query
    kappa = float(enc.scale.gram_value(x)[0, 0])
    diagnostics["scale"] = kappa
    if not kappa > 0:
        return None
    inv = 1.0 / kappa
    zvs = state_only_varset(q.system.n)
    V = (enc.V.value(x) * inv).prune(0.0).reorder(zvs)
    F = (enc.F.value(x) * inv).prune(0.0)
    mults = [Multiplier(enc.positivity.label, list(enc.positivity.basis),
                        _psd_part(enc.positivity.gram_value(x)) * inv)]
    for s in enc.multipliers:
        mults.append(Multiplier(s.label, list(s.basis), _psd_part(s.gram_value(x)) * inv))
    return Certificate(q, V, F, mults, diagnostics)


def _solve_encoding(enc: Encoding, tol: float, max_iter: int) -> tuple[CertifyResult, np.ndarray | None]:
    query = enc.query
    problem = enc.program.compile()
    sol = conic.solve(problem, tol=tol, max_iter=max_iter)
    x = enc.program.unknown_values(sol.x)
    margin = enc.margin.value(x)
    diagnostics = {
        "solver_status": sol.status,
        "iterations": sol.iterations,
        "primal_residual": sol.primal_residual,
        "dual_residual": sol.dual_residual,
        "gap": sol.gap,
        "margin": margin,
        "blocks": [b.size for b in enc.program.blocks],
        "rows": problem.n_rows,
    }
    log.info("certify %s T=%s N=%d: %s, margin %.3e", query.mode, query.horizon,
             query.degree, sol.status, margin)
    if sol.status == conic.INFEASIBLE:
        return CertifyResult(INFEASIBLE, None, None, sol.status, message=sol.message), None
    if sol.status == conic.UNBOUNDED:
        return CertifyResult(INCONCLUSIVE, None, None, sol.status, message="margin unbounded"), None

    if margin >= -DECISION_TOL:
        cert = _extract(enc, x, diagnostics)
        if cert is None:
            return CertifyResult(INCONCLUSIVE, None, margin, sol.status,
                                 message="optimal point has zero scale; no certificate recovered"), x
        report = verify_certificate(cert)
        cert.report = report
        if report.passed:
            return CertifyResult(CERTIFIED, cert, margin, sol.status, report), x
        return CertifyResult(INCONCLUSIVE, None, margin, sol.status, report,
                             "candidate failed verification"), x
    if sol.status == conic.FEASIBLE:
        return CertifyResult(INFEASIBLE, None, margin, sol.status,
                             message=f"optimal margin {margin:.3e} < 0"), x
    return CertifyResult(INCONCLUSIVE, None, margin, sol.status,
                         message=f"solver {sol.status}; margin estimate {margin:.3e}"), x


def _vanishing_pruned(enc: Encoding, x: np.ndarray) -> dict[str, list[Monomial]] | None:
    """Gram bases without the monomials whose diagonal vanishes at ``x``.

    At a zero-margin optimum an interior-point solution lies in the relative
    interior of the optimal face, so a (numerically) zero diagonal entry is
    zero on the whole face and its monomial can be dropped. Returns ``None``
    when nothing vanishes.
    """
    blocks = [enc.positivity, *enc.multipliers]
    diags = [np.diag(b.gram_value(x)) for b in blocks]
    top = max(float(d.max()) for d in diags if d.size)
    out, dropped = {}, False
    for blk, d in zip(blocks, diags):
        keep = [m for m, v in zip(blk.basis, d) if v > FACE_TOL * top]
        dropped |= len(keep) < len(blk.basis)
        out[blk.label] = keep
    return out if dropped else None


def certify(query: StabilityQuery, tol: float = 1e-8, max_iter: int = 200) -> CertifyResult:
    """Search for a certificate; return it only if it verifies.

    When the optimal margin is zero and the candidate fails verification, the
    Gram monomials that vanish at the optimum are dropped and the program is
    solved again (at most ``FACE_ROUNDS`` times). These restricted solves can
    only upgrade the answer to a verified certificate; any other outcome
    reports the first solve.
    """
    try:
        enc = reduced_encoding(query)
    except (InfeasibleRowError, StructurallyInfeasible) as exc:
        return CertifyResult(INFEASIBLE, None, None, "structural", message=str(exc))
    first, x = _solve_encoding(enc, tol, max_iter)
    result = first
    for rounds in range(1, FACE_ROUNDS + 1):
        if result.status != INCONCLUSIVE or x is None or result.margin is None \
                or result.margin < -DECISION_TOL:
            break
        bases = _vanishing_pruned(enc, x)
        if bases is None:
            break
        try:
            enc = reduced_encoding(query, bases)
        except (InfeasibleRowError, StructurallyInfeasible):
            break
        result, x = _solve_encoding(enc, tol, max_iter)
        if result.status == CERTIFIED:
            result.certificate.diagnostics["face_rounds"] = rounds
            return result
    return first


# -- maximal sampling period ------------------------------------------------

@dataclass
class Probe:
    T: float
    status: str
    margin: float | None


@dataclass
class MaxPeriodResult:
    T_star: float | None
    certificate: Certificate | None
    probes: list[Probe]
    bracket: tuple[float, float]
    message: str = ""

    @property
    def found(self) -> bool:
        return self.T_star is not None


def max_sampling_period(system: SystemDef, degree: int, mode: str = SYNC,
                        T_lo: float = 0.0, T_hi: float = 5.0, resolution: float = 1e-3,
                        T_min: float = 0.0, tol: float = 1e-8, **params) -> MaxPeriodResult:
    """Bisection for the largest certifiable period (or ``T_max`` with ``T_min`` fixed).

    Invariant: ``lo`` is certified (or is the starting value) and ``hi`` is
    not. Inconclusive probes count as not certifiable.
    """
    if not T_hi > T_lo or resolution <= 0:
        raise ValueError("need T_hi > T_lo and resolution > 0")

    def query(T: float) -> StabilityQuery:
        if mode == SYNC:
            return StabilityQuery(system, degree, SYNC, T=T, **params)
        return StabilityQuery(system, degree, ASYNC, T_min=T_min, T_max=T, **params)

    probes: list[Probe] = []
    best: Certificate | None = None

    def probe(T: float) -> bool:
        nonlocal best
        res = certify(query(T), tol=tol)
        probes.append(Probe(T, res.status, res.margin))
        if res.certified:
            best = res.certificate
        return res.certified

    lower_floor = T_min if mode == ASYNC else 0.0
    lo, hi = T_lo, T_hi
    if lo > lower_floor and not probe(lo):
        return MaxPeriodResult(None, None, probes, (lo, hi),
                               f"lower end T={lo} is not certifiable at degree {degree}")
    if probe(hi):
        return MaxPeriodResult(hi, best, probes, (hi, hi), "upper end of the bracket is certifiable")
    lo_cert = best if lo > lower_floor else None
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            lo, lo_cert = mid, best
        else:
            hi = mid
    if lo_cert is None:
        return MaxPeriodResult(None, None, probes, (lo, hi),
                               f"no certifiable period found at degree {degree}")
    return MaxPeriodResult(lo, lo_cert, probes, (lo, hi))

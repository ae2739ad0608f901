"""Sum-of-squares programs assembled by coefficient matching.

Decision polynomials are ordinary :class:`~sampcert.poly.Polynomial` objects
whose coefficients are :class:`LinearForm` values (affine functions of the
program's scalar unknowns), so all polynomial algebra carries over. Products
of two decision polynomials raise :class:`NonlinearError`.

Columns of the compiled problem: free scalars first, then the upper triangle
(row-major) of each Gram block in declaration order.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .conic import ConicProblem
from .poly import Monomial, Polynomial, VarSet, grlex_key, monomials_upto

CONST = -1
ASSEMBLY_PRUNE = 1e-14


class SosStructureError(ValueError):
    """Program construction error (odd SOS degree, bad localizer sizing, ...)."""


class NonlinearError(SosStructureError):
    """An expression depends nonlinearly on the decision unknowns."""


class InfeasibleRowError(SosStructureError):
    """A coefficient-matching row has no unknowns but a nonzero constant."""

    def __init__(self, label: str, monomial: Monomial, value: float, names: Sequence[str]):
        self.label = label
        self.monomial = monomial
        self.value = value
        text = "*".join(f"{n}^{e}" if e > 1 else n for n, e in zip(names, monomial) if e) or "1"
        super().__init__(
            f"{label}: monomial {text} has constant coefficient {value:g} that no unknown can absorb"
        )


class LinearForm:
    """Sparse affine function ``const + sum_i c_i u_i`` of the unknowns."""

    __slots__ = ("coef",)

    def __init__(self, coef: dict[int, float] | None = None):
        self.coef = coef if coef is not None else {}

    @classmethod
    def unknown(cls, idx: int, scale: float = 1.0) -> "LinearForm":
        return cls({idx: scale})

    @property
    def const(self) -> float:
        return self.coef.get(CONST, 0.0)

    def is_constant(self) -> bool:
        return all(k == CONST for k in self.coef)

    def __bool__(self) -> bool:
        return any(v != 0 for v in self.coef.values())

    def __repr__(self) -> str:
        parts = [f"{v:+g}" if k == CONST else f"{v:+g}*u{k}" for k, v in sorted(self.coef.items())]
        return "LinearForm(" + " ".join(parts or ["0"]) + ")"

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, float)):
            other = LinearForm({CONST: float(other)})
        if not isinstance(other, LinearForm):
            return NotImplemented
        a = {k: v for k, v in self.coef.items() if v}
        b = {k: v for k, v in other.coef.items() if v}
        return a == b

    __hash__ = None  # type: ignore[assignment]

    def __add__(self, other) -> "LinearForm":
        out = dict(self.coef)
        if isinstance(other, LinearForm):
            for k, v in other.coef.items():
                out[k] = out.get(k, 0.0) + v
        else:
            if other:
                out[CONST] = out.get(CONST, 0.0) + other
        return LinearForm(out)

    __radd__ = __add__

    def __neg__(self) -> "LinearForm":
        return LinearForm({k: -v for k, v in self.coef.items()})

    def __sub__(self, other) -> "LinearForm":
        return self + (-other)

    def __rsub__(self, other) -> "LinearForm":
        return (-self) + other

    def __mul__(self, other) -> "LinearForm":
        if isinstance(other, LinearForm):
            if other.is_constant():
                other = other.const
            elif self.is_constant():
                return other * self.const
            else:
                raise NonlinearError("product of two expressions that both depend on unknowns")
        return LinearForm({k: v * other for k, v in self.coef.items()})

    __rmul__ = __mul__

    def value(self, x: np.ndarray) -> float:
        return float(sum(v if k == CONST else v * x[k] for k, v in self.coef.items()))


def lift(p: Polynomial) -> Polynomial:
    """Numeric polynomial as a (constant) affine polynomial."""
    return p.map_coefficients(lambda c: LinearForm({CONST: float(c)}))


def numeric(p: Polynomial, x: np.ndarray) -> Polynomial:
    """Evaluate an affine polynomial at unknown values ``x``."""
    return Polynomial(p.varset, {m: c.value(x) if isinstance(c, LinearForm) else float(c)
                                 for m, c in p.terms.items()})


def basis_touching(varset: VarSet, d: int, names: Iterable[str] | None,
                   min_degree: int = 0) -> list[Monomial]:
    """``monomials_upto`` restricted to monomials of degree >= ``min_degree`` in ``names``."""
    monos = monomials_upto(varset, d)
    if names is None or min_degree <= 0:
        return monos
    idx = [varset.index(n) for n in names]
    return [m for m in monos if sum(m[i] for i in idx) >= min_degree]


@dataclass
class DecisionPoly:
    varset: VarSet
    degree: int
    basis: list[Monomial]
    indices: list[int]
    label: str

    @property
    def poly(self) -> Polynomial:
        return Polynomial(self.varset, {m: LinearForm.unknown(i) for m, i in zip(self.basis, self.indices)})

    def value(self, x: np.ndarray) -> Polynomial:
        return Polynomial(self.varset, {m: float(x[i]) for m, i in zip(self.basis, self.indices)})


@dataclass
class SosDecisionPoly:
    """``Z^T (G + shift*I) Z`` with ``G`` a PSD block of unknowns."""

    varset: VarSet
    half_degree: int
    basis: list[Monomial]
    gram_index: np.ndarray
    label: str
    block: int
    shift: LinearForm | None = None

    @property
    def size(self) -> int:
        return len(self.basis)

    def trace_form(self) -> LinearForm:
        """Trace of the Gram unknowns (the shift excluded)."""
        return LinearForm({int(self.gram_index[i, i]): 1.0 for i in range(self.size)})

    @property
    def is_empty(self) -> bool:
        return not self.basis

    @property
    def poly(self) -> Polynomial:
        terms: dict[Monomial, LinearForm] = {}
        k = len(self.basis)
        for a in range(k):
            ma = self.basis[a]
            for b in range(a, k):
                m = tuple(x + y for x, y in zip(ma, self.basis[b]))
                idx = int(self.gram_index[a, b])
                lf = terms.setdefault(m, LinearForm())
                lf.coef[idx] = lf.coef.get(idx, 0.0) + (1.0 if a == b else 2.0)
        if self.shift is not None:
            for ma in self.basis:
                m = tuple(2 * e for e in ma)
                terms[m] = terms[m] + self.shift
        return Polynomial(self.varset, terms)

    def gram_value(self, x: np.ndarray) -> np.ndarray:
        G = x[self.gram_index]
        if self.shift is not None:
            G = G + self.shift.value(x) * np.eye(self.size)
        return G


@dataclass
class Row:
    label: str
    monomial: Monomial
    form: LinearForm


@dataclass
class SosProgram:
    """Mutable program under construction; ``compile`` freezes it."""

    unknowns: list[tuple] = field(default_factory=list)
    free_labels: list[str] = field(default_factory=list)
    blocks: list[SosDecisionPoly] = field(default_factory=list)
    rows: list[Row] = field(default_factory=list)
    objective: LinearForm = field(default_factory=LinearForm)
    constraint_labels: list[str] = field(default_factory=list)

    # -- unknowns ---------------------------------------------------------
    def new_scalar(self, label: str = "scalar") -> LinearForm:
        idx = len(self.unknowns)
        self.unknowns.append(("free", label))
        return LinearForm.unknown(idx)

    def new_decision_poly(self, varset: VarSet, degree: int, label: str = "p",
                          basis: Sequence[Monomial] | None = None) -> DecisionPoly:
        if degree < 0:
            raise SosStructureError("degree must be non-negative")
        basis = list(basis) if basis is not None else monomials_upto(varset, degree)
        start = len(self.unknowns)
        for m in basis:
            self.unknowns.append(("free", label, m))
        return DecisionPoly(varset, degree, basis, list(range(start, start + len(basis))), label)

    def new_sos_poly(self, varset: VarSet, degree: int, label: str = "s",
                     basis: Sequence[Monomial] | None = None,
                     shift: LinearForm | None = None) -> SosDecisionPoly:
        if degree < 0 or degree % 2:
            raise SosStructureError(f"SOS polynomial degree must be even and non-negative, got {degree}")
        d = degree // 2
        explicit = basis is not None
        basis = list(basis) if explicit else monomials_upto(varset, d)
        if not basis:
            if not explicit:
                raise SosStructureError(f"{label}: empty Gram basis")
            # an explicitly emptied basis (e.g. by facial reduction): identically zero
            return SosDecisionPoly(varset, d, [], np.empty((0, 0), dtype=np.int64), label, -1, None)
        k = len(basis)
        block = len(self.blocks)
        gram_index = np.empty((k, k), dtype=np.int64)
        for a in range(k):
            for b in range(a, k):
                idx = len(self.unknowns)
                self.unknowns.append(("psd", block, a, b))
                gram_index[a, b] = gram_index[b, a] = idx
        sp = SosDecisionPoly(varset, d, basis, gram_index, label, block, shift)
        self.blocks.append(sp)
        return sp

    @property
    def n_unknowns(self) -> int:
        return len(self.unknowns)

    # -- constraints ------------------------------------------------------
    def assert_poly_eq(self, lhs: Polynomial, rhs: Polynomial | float = 0.0,
                       label: str = "identity") -> int:
        """Coefficient matching ``lhs == rhs``; returns the number of rows added."""
        diff = _affine(lhs) - (_affine(rhs) if isinstance(rhs, Polynomial) else rhs)
        names = diff.varset.names
        added = 0
        for m, form in diff.sorted_terms():
            if not isinstance(form, LinearForm):
                form = LinearForm({CONST: float(form)})
            coef = {k: v for k, v in form.coef.items() if abs(v) > ASSEMBLY_PRUNE}
            if not coef:
                continue
            if all(k == CONST for k in coef):
                raise InfeasibleRowError(label, m, coef[CONST], names)
            self.rows.append(Row(label, m, LinearForm(coef)))
            added += 1
        self.constraint_labels.append(label)
        return added

    def assert_linear(self, form: LinearForm, value: float = 0.0, label: str = "linear") -> None:
        """Scalar equality ``form == value``."""
        self.rows.append(Row(label, (), form - value))
        self.constraint_labels.append(label)

    def psatz_combine(self, target: Polynomial, localizers: Sequence[Polynomial],
                      multiplier_degrees: Sequence[int] | None = None,
                      label: str = "psatz",
                      basis_filter: Callable[[list[Monomial]], list[Monomial]] | None = None,
                      shift: LinearForm | None = None,
                      bases: dict[str, list[Monomial]] | None = None) -> list[SosDecisionPoly]:
        """Assert ``target == s0 + sum_i s_i g_i`` with fresh SOS multipliers.

        Default multiplier degrees: smallest even integer >= deg(target) for
        ``s0`` and >= deg(target) - deg(g_i) for ``s_i``.
        """
        target = _affine(target)
        vs = target.varset
        deg_t = int(max(target.degree, 0))
        if multiplier_degrees is None:
            multiplier_degrees = [_even_ceil(deg_t)]
            for g in localizers:
                multiplier_degrees.append(_even_ceil(max(deg_t - int(g.degree), 0)))
        if len(multiplier_degrees) != len(localizers) + 1:
            raise SosStructureError("need one multiplier degree for s0 and one per localizer")
        mults = []
        rhs = Polynomial.zero(vs)
        for i, deg in enumerate(multiplier_degrees):
            if deg % 2:
                raise SosStructureError(f"multiplier s{i} degree {deg} is odd")
            basis = monomials_upto(vs, deg // 2)
            if basis_filter is not None:
                basis = basis_filter(basis)
            if bases is not None and f"{label}.s{i}" in bases:
                basis = bases[f"{label}.s{i}"]
            s = self.new_sos_poly(vs, deg, label=f"{label}.s{i}", basis=basis, shift=shift)
            mults.append(s)
            term = s.poly if i == 0 else s.poly * localizers[i - 1].reorder(vs)
            rhs = rhs + term
        self.assert_poly_eq(target, rhs, label=label)
        return mults

    def facial_reduction(self, ignore: Iterable[int] = ()) -> dict[str, list[Monomial]]:
        """Drop Gram basis elements whose diagonal entry is forced to zero.

        Two deductions alternate until nothing changes: (1) rows that touch
        no surviving Gram entry are linear equations in the free unknowns,
        and any unknown they pin down is replaced by its value; (2) a row
        with zero right-hand side, no remaining free unknowns and only
        diagonal Gram entries of one sign forces those diagonals, and with
        them the whole Gram row/column, to vanish. Unknowns in ``ignore`` are
        treated as absent. Returns the surviving basis of every block.
        """
        ignore = set(ignore)
        owner: dict[int, tuple[int, int, int]] = {}
        for bi, blk in enumerate(self.blocks):
            k = blk.size
            for a in range(k):
                for b in range(a, k):
                    owner[int(blk.gram_index[a, b])] = (bi, a, b)
        dead = [set() for _ in self.blocks]
        forms = [{k: v for k, v in r.form.coef.items() if k not in ignore and v != 0}
                 for r in self.rows]
        fixed: dict[int, float] = {}

        def live_gram(coef):
            out = []
            for k, v in coef.items():
                o = owner.get(k)
                if o is not None and o[1] not in dead[o[0]] and o[2] not in dead[o[0]]:
                    out.append((o, v))
            return out

        changed = True
        while changed:
            changed = False
            # (1) pin free unknowns determined by Gram-free rows
            lin_rows = [c for c in forms if not live_gram(c)]
            fvars = sorted({k for c in lin_rows for k in c if k != CONST and k not in owner})
            if lin_rows and fvars:
                pos = {k: i for i, k in enumerate(fvars)}
                E = np.zeros((len(lin_rows), len(fvars)))
                e = np.zeros(len(lin_rows))
                for r, c in enumerate(lin_rows):
                    for k, v in c.items():
                        if k == CONST:
                            e[r] = -v
                        elif k in pos:
                            E[r, pos[k]] = v
                _, sv, vt = np.linalg.svd(E, full_matrices=True)
                rank = int(np.sum(sv > 1e-10 * max(sv[0], 1e-300))) if sv.size else 0
                sol = np.linalg.lstsq(E, e, rcond=None)[0]
                null = vt[rank:]
                for k, i in pos.items():
                    if k in fixed:
                        continue
                    if not null.size or np.max(np.abs(null[:, i])) < 1e-9:
                        fixed[k] = 0.0 if abs(sol[i]) < 1e-12 else float(sol[i])
                        changed = True
                if changed:
                    new_forms = []
                    for c in forms:
                        out = {}
                        for k, v in c.items():
                            if k in fixed:
                                if fixed[k]:
                                    out[CONST] = out.get(CONST, 0.0) + v * fixed[k]
                            else:
                                out[k] = out.get(k, 0.0) + v
                        new_forms.append(out)
                    forms = new_forms
            # (2) one-signed diagonal rows
            for coef in forms:
                if abs(coef.get(CONST, 0.0)) > 1e-12:
                    continue
                if any(k != CONST and k not in owner for k in coef):
                    continue
                live = live_gram(coef)
                if not live or any(a != b for (_, a, b), _ in live):
                    continue
                if len({np.sign(v) for _, v in live}) != 1:
                    continue
                for (bi, a, _), _ in live:
                    dead[bi].add(a)
                changed = True
        return {blk.label: [m for a, m in enumerate(blk.basis) if a not in dead[bi]]
                for bi, blk in enumerate(self.blocks)}

    def set_objective(self, form: LinearForm) -> None:
        """Linear objective to minimise."""
        self.objective = form

    # -- compilation ------------------------------------------------------
    def column_map(self) -> np.ndarray:
        n = len(self.unknowns)
        col = np.empty(n, dtype=np.int64)
        nfree = 0
        for i, u in enumerate(self.unknowns):
            if u[0] == "free":
                col[i] = nfree
                nfree += 1
        offset = nfree
        for blk in self.blocks:
            k = blk.size
            for a in range(k):
                for b in range(a, k):
                    col[blk.gram_index[a, b]] = offset
                    offset += 1
        return col

    def compile(self) -> ConicProblem:
        if not self.rows:
            raise SosStructureError("program has no constraints")
        col = self.column_map()
        nfree = sum(1 for u in self.unknowns if u[0] == "free")
        ri, ci, vals, rhs = [], [], [], []
        for r, row in enumerate(self.rows):
            for k in sorted(row.form.coef):
                v = row.form.coef[k]
                if k == CONST:
                    continue
                ri.append(r)
                ci.append(int(col[k]))
                vals.append(v)
            rhs.append(-row.form.const)
        c = np.zeros(len(self.unknowns))
        for k, v in self.objective.coef.items():
            if k != CONST:
                c[col[k]] += v
        blocks = [("free", nfree)] + [("psd", b.size) for b in self.blocks]
        return ConicProblem(
            blocks=tuple(blocks),
            rows=np.asarray(ri, dtype=np.int64),
            cols=np.asarray(ci, dtype=np.int64),
            vals=np.asarray(vals, dtype=float),
            b=np.asarray(rhs, dtype=float),
            c=c,
            row_labels=tuple(f"{row.label}:{row.monomial}" for row in self.rows),
        )

    def unknown_values(self, solution_x: np.ndarray) -> np.ndarray:
        """Map a flat compiled solution vector back to unknown indices."""
        return np.asarray(solution_x)[self.column_map()]

    def summary(self) -> dict:
        return {
            "unknowns": len(self.unknowns),
            "free": sum(1 for u in self.unknowns if u[0] == "free"),
            "psd_blocks": [b.size for b in self.blocks],
            "rows": len(self.rows),
        }


def _affine(p):
    if isinstance(p, Polynomial):
        if all(isinstance(c, LinearForm) for c in p.terms.values()):
            return p
        return p.map_coefficients(lambda c: c if isinstance(c, LinearForm) else LinearForm({CONST: float(c)}))
    raise TypeError(f"expected a Polynomial, got {type(p).__name__}")


def _even_ceil(d: int) -> int:
    return d + (d % 2)


def dump_problem(problem: ConicProblem) -> str:
    """Sparse text dump: header lines then one ``block row col value`` per nonzero.

    ``row``/``col`` address the constraint row and, within the block, the
    flattened entry (free block) or ``i,j`` upper-triangle pair (PSD block).
    """
    out = io.StringIO()
    out.write(f"# blocks {' '.join(f'{k}:{n}' for k, n in problem.blocks)}\n")
    out.write(f"# rows {problem.n_rows}\n")
    where = problem.column_owner()
    order = np.lexsort((problem.cols, problem.rows))
    for k in order:
        blk, entry = where[problem.cols[k]]
        out.write(f"A {blk} {problem.rows[k]} {entry} {float(problem.vals[k])!r}\n")
    for r, v in enumerate(problem.b):
        if v:
            out.write(f"b {r} {float(v)!r}\n")
    for j in np.flatnonzero(problem.c):
        blk, entry = where[j]
        out.write(f"c {blk} {entry} {float(problem.c[j])!r}\n")
    return out.getvalue()


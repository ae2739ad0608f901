"""Sparse multivariate polynomials over an ordered variable set.

A :class:`Polynomial` maps exponent tuples to coefficients. Coefficients are
whatever numeric type the caller supplies (floats in the solver pipeline,
``fractions.Fraction`` for exact checks, :class:`sampcert.sosprog.LinearForm`
while assembling SOS programs); the arithmetic below only relies on ``+``,
``*`` and truthiness of zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Iterable, Iterator, Mapping, Sequence

import numpy as np

Monomial = tuple[int, ...]

#: Degree reported for the zero polynomial; compares below every integer.
ZERO_DEGREE = -math.inf


class PolyStructureError(ValueError):
    """Operands live on different variable sets or name unknown variables."""


@dataclass(frozen=True)
class VarSet:
    names: tuple[str, ...]

    def __init__(self, names: Iterable[str]):
        names = tuple(names)
        if len(set(names)) != len(names):
            raise PolyStructureError(f"duplicate variable names in {names}")
        object.__setattr__(self, "names", names)

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self) -> Iterator[str]:
        return iter(self.names)

    def __contains__(self, name: object) -> bool:
        return name in self._index

    @cached_property
    def _index(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.names)}

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise PolyStructureError(f"unknown variable {name!r}; have {self.names}") from None


def grlex_key(m: Monomial) -> tuple:
    """Sort key: total degree first, then lexicographic in VarSet order."""
    return (sum(m), tuple(-e for e in m))


def _compositions(total: int, parts: int) -> Iterator[Monomial]:
    # lexicographically descending exponent tuples summing to ``total``
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def monomials_upto(varset: VarSet, d: int) -> list[Monomial]:
    """All monomials of total degree <= d, graded-lex ordered.

    >>> monomials_upto(VarSet("x"), 2)
    [(0,), (1,), (2,)]
    """
    if d < 0:
        raise ValueError("degree must be non-negative")
    n = len(varset)
    if n == 0:
        return [()]
    out: list[Monomial] = []
    for k in range(d + 1):
        out.extend(_compositions(k, n))
    return out


def _is_zero(c: Any) -> bool:
    return not c


class Polynomial:
    """Immutable sparse polynomial. Zero coefficients are never stored."""

    def __init__(self, varset: VarSet, terms: Mapping[Monomial, Any] | None = None):
        self.varset = varset
        clean: dict[Monomial, Any] = {}
        n = len(varset)
        for m, c in (terms or {}).items():
            m = tuple(int(e) for e in m)
            if len(m) != n or any(e < 0 for e in m):
                raise PolyStructureError(f"bad exponent vector {m} for {varset.names}")
            if not _is_zero(c):
                clean[m] = c
        self.terms = clean

    # -- constructors -------------------------------------------------
    @classmethod
    def _raw(cls, varset: VarSet, terms: dict[Monomial, Any]) -> "Polynomial":
        p = cls.__new__(cls)
        p.varset = varset
        p.terms = terms
        return p

    @classmethod
    def zero(cls, varset: VarSet) -> "Polynomial":
        return cls._raw(varset, {})

    @classmethod
    def constant(cls, varset: VarSet, c: Any) -> "Polynomial":
        return cls(varset, {(0,) * len(varset): c})

    @classmethod
    def var(cls, varset: VarSet, name: str) -> "Polynomial":
        m = [0] * len(varset)
        m[varset.index(name)] = 1
        return cls._raw(varset, {tuple(m): 1})

    @classmethod
    def from_monomials(cls, varset: VarSet, monos: Sequence[Monomial], coefs: Sequence[Any]):
        return cls(varset, dict(zip(monos, coefs)))

    # -- properties ---------------------------------------------------
    @property
    def degree(self) -> float:
        if not self.terms:
            return ZERO_DEGREE
        return max(sum(m) for m in self.terms)

    def degree_in(self, names: Iterable[str]) -> float:
        idx = [self.varset.index(n) for n in names]
        if not self.terms:
            return ZERO_DEGREE
        return max(sum(m[i] for i in idx) for m in self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, m: Monomial) -> Any:
        return self.terms.get(tuple(m), 0)

    def sorted_terms(self) -> list[tuple[Monomial, Any]]:
        return sorted(self.terms.items(), key=lambda kv: grlex_key(kv[0]))

    def __len__(self) -> int:
        return len(self.terms)

    def __repr__(self) -> str:
        return f"Polynomial({self.varset.names}, {self.to_text()!r})"

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Polynomial):
            return self.varset == other.varset and self.terms == other.terms
        if isinstance(other, (int, float)):
            return self == Polynomial.constant(self.varset, other)
        return NotImplemented

    __hash__ = None  # type: ignore[assignment]

    # -- arithmetic ---------------------------------------------------
    def _check(self, other: "Polynomial") -> None:
        if self.varset != other.varset:
            raise PolyStructureError(
                f"variable set mismatch: {self.varset.names} vs {other.varset.names}"
            )

    def _lift(self, other: Any) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        return Polynomial.constant(self.varset, other)

    def __add__(self, other: Any) -> "Polynomial":
        other = self._lift(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            if m in out:
                s = out[m] + c
                if _is_zero(s):
                    del out[m]
                else:
                    out[m] = s
            else:
                out[m] = c
        return Polynomial._raw(self.varset, out)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial._raw(self.varset, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other: Any) -> "Polynomial":
        return self + (-self._lift(other))

    def __rsub__(self, other: Any) -> "Polynomial":
        return self._lift(other) - self

    def __mul__(self, other: Any) -> "Polynomial":
        if not isinstance(other, Polynomial):
            if _is_zero(other):
                return Polynomial.zero(self.varset)
            return Polynomial(self.varset, {m: c * other for m, c in self.terms.items()})
        self._check(other)
        out: dict[Monomial, Any] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                v = c1 * c2
                if m in out:
                    out[m] = out[m] + v
                else:
                    out[m] = v
        return Polynomial(self.varset, out)

    def __rmul__(self, other: Any) -> "Polynomial":
        if isinstance(other, Polynomial):
            return other.__mul__(self)
        if _is_zero(other):
            return Polynomial.zero(self.varset)
        return Polynomial(self.varset, {m: other * c for m, c in self.terms.items()})

    def __pow__(self, k: int) -> "Polynomial":
        if k < 0 or int(k) != k:
            raise ValueError("polynomial powers must be non-negative integers")
        result = Polynomial.constant(self.varset, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    # -- calculus and substitution ------------------------------------
    def diff(self, name: str) -> "Polynomial":
        i = self.varset.index(name)
        out: dict[Monomial, Any] = {}
        for m, c in self.terms.items():
            e = m[i]
            if e:
                out[m[:i] + (e - 1,) + m[i + 1:]] = c * e
        return Polynomial(self.varset, out)

    def gradient(self, names: Sequence[str]) -> list["Polynomial"]:
        return [self.diff(n) for n in names]

    def substitute(self, bindings: Mapping[str, Any]) -> "Polynomial":
        """Simultaneously replace variables by polynomials or constants.

        Polynomial targets must all share one VarSet, which becomes the VarSet
        of the result; unbound variables must exist there by name.
        """
        for name in bindings:
            self.varset.index(name)
        targets = [b.varset for b in bindings.values() if isinstance(b, Polynomial)]
        out_vs = targets[0] if targets else self.varset
        if any(vs != out_vs for vs in targets):
            raise PolyStructureError("substitution targets use different variable sets")

        images: list[Polynomial] = []
        for name in self.varset.names:
            if name in bindings:
                b = bindings[name]
                images.append(b if isinstance(b, Polynomial) else Polynomial.constant(out_vs, b))
            else:
                if name not in out_vs:
                    raise PolyStructureError(
                        f"unbound variable {name!r} is not in target set {out_vs.names}"
                    )
                images.append(Polynomial.var(out_vs, name))

        power_cache: dict[tuple[int, int], Polynomial] = {}

        def power(i: int, e: int) -> Polynomial:
            key = (i, e)
            if key not in power_cache:
                power_cache[key] = images[i] if e == 1 else power(i, e - 1) * images[i]
            return power_cache[key]

        out: dict[Monomial, Any] = {}
        one = (0,) * len(out_vs)
        for m, c in self.terms.items():
            term = {one: 1}
            img = Polynomial._raw(out_vs, term)
            for i, e in enumerate(m):
                if e:
                    img = img * power(i, e)
            for mm, cc in img.terms.items():
                v = c * cc
                if mm in out:
                    out[mm] = out[mm] + v
                else:
                    out[mm] = v
        return Polynomial(out_vs, out)

    def evaluate(self, point: Mapping[str, Any]) -> Any:
        missing = [n for n in self.varset.names if n not in point]
        if missing:
            raise PolyStructureError(f"unbound variables {missing}")
        vals = [point[n] for n in self.varset.names]
        total: Any = 0
        for m, c in self.terms.items():
            term = c
            for v, e in zip(vals, m):
                if e:
                    term = term * v**e
            total = total + term
        return total

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        """Vectorised float evaluation; ``points`` has one column per variable."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != len(self.varset):
            raise PolyStructureError("point dimension does not match variable set")
        if not self.terms:
            return np.zeros(pts.shape[0])
        exps = np.array(list(self.terms), dtype=int)
        coefs = np.array([float(c) for c in self.terms.values()])
        vals = np.ones((pts.shape[0], exps.shape[0]))
        for j in range(exps.shape[1]):
            col = exps[:, j]
            if col.any():
                vals *= pts[:, j:j + 1] ** col[None, :]
        return vals @ coefs

    def map_coefficients(self, fn) -> "Polynomial":
        return Polynomial(self.varset, {m: fn(c) for m, c in self.terms.items()})

    def prune(self, tol: float = 1e-14) -> "Polynomial":
        return Polynomial(self.varset, {m: c for m, c in self.terms.items() if abs(c) > tol})

    def reorder(self, varset: VarSet) -> "Polynomial":
        """Re-express over another VarSet containing every variable used here."""
        idx = []
        for name in self.varset.names:
            idx.append(varset.index(name) if name in varset else None)
        out: dict[Monomial, Any] = {}
        for m, c in self.terms.items():
            new = [0] * len(varset)
            for i, e in enumerate(m):
                if e:
                    if idx[i] is None:
                        raise PolyStructureError(
                            f"variable {self.varset.names[i]!r} missing from {varset.names}"
                        )
                    new[idx[i]] = e
            out[tuple(new)] = c
        return Polynomial(varset, out)

    # -- text ---------------------------------------------------------
    def to_text(self) -> str:
        """Canonical text accepted by :func:`sampcert.expr.parse_polynomial`."""
        if not self.terms:
            return "0"
        pieces = []
        for m, c in self.sorted_terms():
            factors = []
            for name, e in zip(self.varset.names, m):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            c = float(c)
            mag = repr(abs(c))
            body = "*".join([mag] + factors)
            sign = "-" if c < 0 else "+"
            pieces.append((sign, body))
        first_sign, first = pieces[0]
        text = ("-" if first_sign == "-" else "") + first
        for sign, body in pieces[1:]:
            text += f" {sign} {body}"
        return text


# -- functional surface -----------------------------------------------

def poly_add(p: Polynomial, q: Polynomial) -> Polynomial:
    p._check(q)
    return p + q


def poly_mul(p: Polynomial, q: Polynomial) -> Polynomial:
    p._check(q)
    return p * q


def poly_diff(p: Polynomial, var: str) -> Polynomial:
    return p.diff(var)


def poly_substitute(p: Polynomial, bindings: Mapping[str, Any]) -> Polynomial:
    return p.substitute(bindings)


def poly_eval(p: Polynomial, point: Mapping[str, Any]) -> Any:
    return p.evaluate(point)

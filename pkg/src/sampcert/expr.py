"""Polynomial expression parser and system-definition files.

Grammar (``^`` binds tighter than unary minus, explicit ``*`` required)::

    expr   := term (("+" | "-") term)*
    term   := unary ("*" unary)*
    unary  := ("-" | "+") unary | power
    power  := atom ("^" INTEGER)?
    atom   := NUMBER | IDENT | "(" expr ")"
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .poly import Polynomial, VarSet


class ExprError(ValueError):
    """Malformed expression; ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class SystemFileError(ValueError):
    """System definition file is missing a field or is inconsistent."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int


def tokenize(text: str) -> Iterator[Token]:
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            ch = text[pos]
            hint = " (division is not polynomial)" if ch == "/" else ""
            raise ExprError(f"unexpected character {ch!r}{hint}", pos)
        kind = m.lastgroup
        if kind != "ws":
            yield Token(kind, m.group(), pos)
        pos = m.end()
    yield Token("end", "", len(text))


class _Parser:
    def __init__(self, text: str, varset: VarSet):
        self.tokens = list(tokenize(text))
        self.i = 0
        self.varset = varset

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect_op(self, op: str) -> None:
        if self.tok.kind != "op" or self.tok.text != op:
            raise ExprError(f"expected {op!r}, found {self.tok.text or 'end of input'!r}", self.tok.pos)
        self.advance()

    def parse(self) -> Polynomial:
        if self.tok.kind == "end":
            raise ExprError("empty expression", 0)
        p = self.expr()
        if self.tok.kind != "end":
            t = self.tok
            if t.kind in ("number", "ident") or t.text == "(":
                raise ExprError(f"implicit multiplication before {t.text!r}; use '*'", t.pos)
            raise ExprError(f"unexpected {t.text!r}", t.pos)
        return p

    def expr(self) -> Polynomial:
        p = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self) -> Polynomial:
        p = self.unary()
        while self.tok.kind == "op" and self.tok.text == "*":
            self.advance()
            p = p * self.unary()
        return p

    def unary(self) -> Polynomial:
        if self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            p = self.unary()
            return -p if op == "-" else p
        return self.power()

    def power(self) -> Polynomial:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            t = self.tok
            if t.kind == "op" and t.text == "-":
                raise ExprError("negative exponent", t.pos)
            if t.kind != "number":
                raise ExprError(f"expected integer exponent, found {t.text or 'end of input'!r}", t.pos)
            if not t.text.isdigit():
                raise ExprError(f"non-integer exponent {t.text!r}", t.pos)
            self.advance()
            if self.tok.kind == "op" and self.tok.text == "^":
                raise ExprError("chained exponent; parenthesise", self.tok.pos)
            return base ** int(t.text)
        return base

    def atom(self) -> Polynomial:
        t = self.tok
        if t.kind == "number":
            self.advance()
            return Polynomial.constant(self.varset, float(t.text))
        if t.kind == "ident":
            self.advance()
            if t.text not in self.varset:
                raise ExprError(f"unknown identifier {t.text!r}", t.pos)
            return Polynomial.var(self.varset, t.text)
        if t.kind == "op" and t.text == "(":
            self.advance()
            p = self.expr()
            self.expect_op(")")
            return p
        raise ExprError(f"unexpected {t.text or 'end of input'!r}", t.pos)


def parse_polynomial(text: str, varset: VarSet) -> Polynomial:
    """Parse and fully expand ``text`` over ``varset``."""
    return _Parser(text, varset).parse()


@dataclass(frozen=True)
class SystemDef:
    """Sampled-data dynamics dz/dt = f(z, x), x the held sample.

    ``f[i]`` is a polynomial over ``varset = (z1..zn, x1..xn)``.
    """

    name: str
    n: int
    f: tuple[Polynomial, ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("state dimension must be at least 1")
        if len(self.f) != self.n:
            raise ValueError(f"expected {self.n} dynamics components, got {len(self.f)}")
        vs = state_varset(self.n)
        for p in self.f:
            if p.varset != vs:
                raise ValueError("dynamics must be polynomials over (z1..zn, x1..xn)")

    @property
    def varset(self) -> VarSet:
        return state_varset(self.n)

    @property
    def current(self) -> list[str]:
        return [f"z{i}" for i in range(1, self.n + 1)]

    @property
    def sampled(self) -> list[str]:
        return [f"x{i}" for i in range(1, self.n + 1)]

    def rhs(self):
        """Return a numpy callable ``(z, x) -> dz/dt`` for integration."""
        import numpy as np

        compiled = []
        for p in self.f:
            exps = np.array(list(p.terms), dtype=float).reshape(-1, 2 * self.n)
            coefs = np.array([float(c) for c in p.terms.values()])
            compiled.append((exps, coefs))

        def f(z, x):
            point = np.concatenate([np.asarray(z, float), np.asarray(x, float)])
            out = np.empty(self.n)
            for i, (exps, coefs) in enumerate(compiled):
                out[i] = coefs @ np.prod(point[None, :] ** exps, axis=1) if coefs.size else 0.0
            return out

        return f

    def to_json(self) -> dict:
        file_vs = file_varset(self.n)
        return {
            "name": self.name,
            "n": self.n,
            "dynamics": [Polynomial(file_vs, p.terms).to_text() for p in self.f],
        }


def state_varset(n: int) -> VarSet:
    return VarSet([f"z{i}" for i in range(1, n + 1)] + [f"x{i}" for i in range(1, n + 1)])


def file_varset(n: int) -> VarSet:
    return VarSet([f"z{i}" for i in range(1, n + 1)] + [f"xk{i}" for i in range(1, n + 1)])


def system_from_dict(data: dict) -> SystemDef:
    if not isinstance(data, dict):
        raise SystemFileError("<root>", "expected a JSON object")
    for key in ("name", "n", "dynamics"):
        if key not in data:
            raise SystemFileError(key, "missing field")
    dyn = data["dynamics"]
    if not isinstance(dyn, list) or not dyn or not all(isinstance(s, str) for s in dyn):
        raise SystemFileError("dynamics", "must be a non-empty list of strings")
    n = len(dyn)
    declared = data["n"]
    if not isinstance(declared, int) or isinstance(declared, bool) or declared < 1:
        raise SystemFileError("n", "must be a positive integer")
    if declared != n:
        raise SystemFileError("n", f"declares {declared} states but dynamics has {n} entries")
    name = data["name"]
    if not isinstance(name, str):
        raise SystemFileError("name", "must be a string")
    fvs, ivs = file_varset(n), state_varset(n)
    f = []
    for i, text in enumerate(dyn):
        try:
            p = parse_polynomial(text, fvs)
        except ExprError as exc:
            raise SystemFileError(f"dynamics[{i}]", str(exc)) from exc
        f.append(Polynomial(ivs, p.terms))
    return SystemDef(name=name, n=n, f=tuple(f))


def parse_system(path: str | Path) -> SystemDef:
    """Read a JSON system file ``{"name", "n", "dynamics": [...]}``."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SystemFileError("<root>", f"invalid JSON: {exc}") from exc
    return system_from_dict(data)

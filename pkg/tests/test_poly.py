import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from sampcert.poly import (ZERO_DEGREE, Polynomial, PolyStructureError, VarSet, grlex_key,
                           monomials_upto, poly_add, poly_diff, poly_eval, poly_mul,
                           poly_substitute)

from oracles import to_sympy

VS = VarSet(["t", "x", "z"])
SYMS = sp.symbols("t x z")

fractions = st.fractions(min_value=-20, max_value=20, max_denominator=12)
monomials = st.tuples(*[st.integers(0, 3)] * 3)


@st.composite
def polys(draw, vs=VS):
    terms = draw(st.dictionaries(monomials, fractions, max_size=6))
    return Polynomial(vs, terms)


def P(text_terms: dict, vs=VS) -> Polynomial:
    return Polynomial(vs, text_terms)


X = Polynomial.var(VS, "x")
Z = Polynomial.var(VS, "z")
T = Polynomial.var(VS, "t")


# -- worked examples -----------------------------------------------------------

def test_add_examples():
    assert (X**2 + 1) + (X**2 * 2 - 1) == X**2 * 3
    p = X * Z + T**3
    assert p + Polynomial.zero(VS) == p


def test_mul_examples():
    assert (X + 1) * (X - 1) == X**2 - 1
    p = X * Z + 2
    assert p * 1 == p
    assert (X * 2) * (Z * 3) == X * Z * 6


def test_diff_examples():
    assert (X**3).diff("x") == X**2 * 3
    assert (X * X**2).diff("x") == X**2 * 3
    assert (Z**4).diff("z") == Z**3 * 4
    with pytest.raises(PolyStructureError):
        X.diff("y")


def test_substitute_examples():
    vs = VarSet(["t", "T"])
    t, TT = Polynomial.var(vs, "t"), Polynomial.var(vs, "T")
    g = t * (TT - t)
    assert g.substitute({"T": 1.8}).substitute({"t": 1.8}).is_zero()
    F = T * Z**2
    assert F.substitute({"t": 0, "z": X}).is_zero()
    with pytest.raises(PolyStructureError):
        F.substitute({"w": 1})
    other = VarSet(["x"])
    with pytest.raises(PolyStructureError):
        F.substitute({"t": Polynomial.var(other, "x"), "z": X})


def test_eval_examples():
    vs = VarSet(["z", "x"])
    z, x = Polynomial.var(vs, "z"), Polynomial.var(vs, "x")
    f = -(z**3) + z**2 * 2 - x * 1.1
    assert f.evaluate({"z": 1, "x": 1}) == pytest.approx(-0.1, abs=1e-15)
    assert Polynomial.zero(vs).evaluate({"z": 3.0, "x": -2.0}) == 0
    one = VarSet(["x"])
    Zs = [Polynomial(one, {m: 1}) for m in monomials_upto(one, 2)]
    assert [q.evaluate({"x": 2}) for q in Zs] == [1, 2, 4]
    with pytest.raises(PolyStructureError):
        f.evaluate({"z": 1})


def test_monomials_upto_examples():
    one = VarSet(["x"])
    assert monomials_upto(one, 2) == [(0,), (1,), (2,)]
    assert len(monomials_upto(VarSet(["a", "b"]), 2)) == 6
    assert len(monomials_upto(VS, 5)) == 56


@pytest.mark.parametrize("n", range(1, 7))
def test_monomial_count_closed_form(n):
    vs = VarSet([f"v{i}" for i in range(n)])
    for d in range(0, 13):
        if math.comb(n + d, d) > 20000:
            break
        ms = monomials_upto(vs, d)
        assert len(ms) == math.comb(n + d, d)
        assert len(set(ms)) == len(ms)
        assert ms == sorted(ms, key=grlex_key)


def test_zero_degree_marker_and_pruning():
    zero = Polynomial.zero(VS)
    assert zero.degree == ZERO_DEGREE
    assert Polynomial.constant(VS, 5).degree == 0
    assert ZERO_DEGREE < 0
    assert (X - X).terms == {}
    assert P({(0, 1, 0): 0.0}).terms == {}


def test_varset_mismatch_is_structural_error():
    other = Polynomial.var(VarSet(["x"]), "x")
    with pytest.raises(PolyStructureError):
        poly_add(X, other)
    with pytest.raises(PolyStructureError):
        poly_mul(X, other)
    with pytest.raises(PolyStructureError):
        VarSet(["a", "a"])


def test_functional_aliases():
    p = X**2 + Z
    assert poly_add(p, p) == p * 2
    assert poly_mul(p, X) == p * X
    assert poly_diff(p, "x") == X * 2
    assert poly_substitute(p, {"x": 2}) == Z + 4
    assert poly_eval(p, {"t": 0, "x": 3, "z": 1}) == 10


# -- ring axioms and Leibniz, exact over the rationals ---------------------------

@settings(max_examples=1000, deadline=None)
@given(polys(), polys(), polys())
def test_ring_axioms_exact(p, q, r):
    assert p + q == q + p
    assert p * q == q * p
    assert (p + q) + r == p + (q + r)
    assert (p * q) * r == p * (q * r)
    assert p * (q + r) == p * q + p * r
    assert p - p == Polynomial.zero(VS)
    if not p.is_zero() and not q.is_zero():
        assert (p * q).degree == p.degree + q.degree


@settings(max_examples=1000, deadline=None)
@given(polys(), polys(), st.sampled_from(["t", "x", "z"]))
def test_leibniz_exact(p, q, v):
    assert (p * q).diff(v) == p * q.diff(v) + p.diff(v) * q


@settings(max_examples=200, deadline=None)
@given(polys(), polys())
def test_products_match_sympy(p, q):
    assert to_sympy(p * q, SYMS) == sp.expand(to_sympy(p, SYMS) * to_sympy(q, SYMS))
    assert to_sympy(p.diff("z"), SYMS) == sp.diff(to_sympy(p, SYMS), SYMS[2])


@settings(max_examples=100, deadline=None)
@given(polys(), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_substitute_then_evaluate(p, a, b, c):
    pf = p.map_coefficients(float)
    direct = pf.evaluate({"t": a, "x": b, "z": c})
    partial = pf.substitute({"t": a}).evaluate({"t": 123.0, "x": b, "z": c})
    assert partial == pytest.approx(direct, rel=1e-12, abs=1e-12 * (1 + sum(abs(v) for v in pf.terms.values())))


def test_substitute_polynomial_targets():
    # F(0, x, x) from F(t, x, z)
    F = T * Z**2 + X * Z + Z**3
    assert F.substitute({"t": 0, "z": X}) == X**2 + X**3
    # simultaneous: swap x and z
    assert (X - Z * 2).substitute({"x": Z, "z": X}) == Z - X * 2


def test_evaluate_many_matches_evaluate():
    rng = np.random.default_rng(0)
    p = (X**2 * 3 - T * Z + 0.5) * (Z - 1)
    pts = rng.normal(size=(20, 3))
    vals = p.evaluate_many(pts)
    for row, v in zip(pts, vals):
        assert v == pytest.approx(p.evaluate(dict(zip(VS.names, row))), rel=1e-12, abs=1e-12)


def test_reorder_round_trip():
    p = X**2 * Z + T
    bigger = VarSet(["z", "q", "x", "t"])
    assert p.reorder(bigger).reorder(VS) == p
    with pytest.raises(PolyStructureError):
        p.reorder(VarSet(["x", "z"]))

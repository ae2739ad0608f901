import numpy as np
import pytest

from sampcert import conic
from sampcert.expr import parse_system
from sampcert.poly import Polynomial, VarSet
from sampcert.sosprog import (InfeasibleRowError, NonlinearError, SosProgram, SosStructureError,
                              dump_problem, numeric)
from sampcert.stability import StabilityQuery, encode, reduced_encoding
from sampcert.cli import bundled_system_path

X1 = VarSet(["x"])
TXZ = VarSet(["t", "x", "z"])


def test_decision_poly_sizes():
    prog = SosProgram()
    assert len(prog.new_decision_poly(X1, 4).basis) == 5
    assert len(prog.new_decision_poly(TXZ, 4).basis) == 35
    p0 = prog.new_decision_poly(TXZ, 0)
    assert p0.basis == [(0, 0, 0)]
    assert prog.n_unknowns == 5 + 35 + 1


def test_sos_poly_sizes_and_parity():
    prog = SosProgram()
    s = prog.new_sos_poly(X1, 2)
    assert s.basis == [(0,), (1,)] and s.size == 2
    assert prog.new_sos_poly(TXZ, 6).size == 20
    with pytest.raises(SosStructureError):
        prog.new_sos_poly(X1, 3)


def test_coefficient_matching_rows():
    prog = SosProgram()
    p = prog.new_decision_poly(X1, 2)
    x = Polynomial.var(X1, "x")
    added = prog.assert_poly_eq(p.poly, x**2 * 3)
    # one row per monomial of the union of supports
    assert added == 3
    P = prog.compile()
    sol = conic.solve(P)
    vals = p.value(prog.unknown_values(sol.x))
    assert vals.prune(1e-9) == x**2 * 3


def test_nonlinear_products_rejected():
    prog = SosProgram()
    p = prog.new_decision_poly(X1, 1)
    q = prog.new_decision_poly(X1, 1)
    with pytest.raises(NonlinearError):
        prog.assert_poly_eq(p.poly * q.poly, 0.0)


def test_constant_mismatch_reports_monomial():
    prog = SosProgram()
    x = Polynomial.var(X1, "x")
    with pytest.raises(InfeasibleRowError, match="x\\^2"):
        prog.assert_poly_eq(x**2, 0.0, label="demo")


def test_sos_example_feasible():
    # x^2 + 2x + 2 = [1 x] [[2,1],[1,1]] [1 x]^T
    prog = SosProgram()
    s = prog.new_sos_poly(X1, 2)
    x = Polynomial.var(X1, "x")
    prog.assert_poly_eq(s.poly, x**2 + x * 2 + 2)
    P = prog.compile()
    assert P.psd_sizes == [2] and P.n_rows == 3
    sol = conic.solve(P)
    assert sol.status == conic.FEASIBLE
    G = s.gram_value(prog.unknown_values(sol.x))
    np.testing.assert_allclose(G, [[2, 1], [1, 1]], atol=1e-7)


def test_negative_square_infeasible():
    prog = SosProgram()
    s = prog.new_sos_poly(X1, 2)
    x = Polynomial.var(X1, "x")
    prog.assert_poly_eq(s.poly, -(x**2))
    sol = conic.solve(prog.compile())
    assert sol.status == conic.INFEASIBLE


def test_psatz_trivial_identity_and_negative_target():
    vs = VarSet(["t"])
    t = Polynomial.var(vs, "t")
    g = t * (1.8 - t)
    prog = SosProgram()
    s0, s1 = prog.psatz_combine(g, [g], multiplier_degrees=[2, 0])
    sol = conic.solve(prog.compile())
    assert sol.status == conic.FEASIBLE
    x = prog.unknown_values(sol.x)
    # any solution must reproduce the target; s1 = 1, s0 = 0 is one of them
    recon = numeric(s0.poly, x) + numeric(s1.poly, x) * g
    assert all(abs(c) < 1e-7 for c in (recon - g).terms.values())

    prog = SosProgram()
    prog.psatz_combine(Polynomial.constant(vs, -1.0), [g])
    assert conic.solve(prog.compile()).status == conic.INFEASIBLE


def test_psatz_default_degrees():
    vs = VarSet(["t", "T"])
    t, T = Polynomial.var(vs, "t"), Polynomial.var(vs, "T")
    target = t**3 * T + 1
    prog = SosProgram()
    mults = prog.psatz_combine(target, [t * (T - t), (T - 0.1) * (2 - T)])
    assert [2 * m.half_degree for m in mults] == [4, 2, 2]
    assert [m.label for m in mults] == ["psatz.s0", "psatz.s1", "psatz.s2"]


def test_boundary_rows_tie_F_ends():
    # F(1, x, z) - F(0, x, x) == 0 kills z-dependence at t = 1
    prog = SosProgram()
    F = prog.new_decision_poly(TXZ, 2, "F")
    x = Polynomial.var(TXZ, "x")
    bnd = F.poly.substitute({"t": 1.0}) - F.poly.substitute({"t": 0.0, "z": x})
    rows = prog.assert_poly_eq(bnd, 0.0, "boundary")
    # monomials of F(1,x,z) - F(0,x,x) in (x, z) up to degree 2: 1, x, z, x^2, xz, z^2
    assert rows == 6


def test_empty_program_rejected():
    with pytest.raises(SosStructureError):
        SosProgram().compile()


def test_dump_format():
    prog = SosProgram()
    s = prog.new_sos_poly(X1, 2)
    prog.assert_poly_eq(s.poly, Polynomial.var(X1, "x") ** 2 + 1)
    text = dump_problem(prog.compile())
    nz = [ln.split() for ln in text.splitlines() if ln.startswith("A ")]
    # x^2 + 1 matched against a 2x2 Gram: one nonzero per Gram entry
    assert nz == [["A", "1", "0", "0,0", "1.0"], ["A", "1", "1", "0,1", "2.0"], ["A", "1", "2", "1,1", "1.0"]]
    assert "b 0 1.0" in text and "b 2 1.0" in text


def _ex1_query(N=4, T=0.5):
    return StabilityQuery(parse_system(bundled_system_path("ex1")), N, T=T)


def test_example1_encoding_counts_pinned():
    # regression values counted by the implementation (degree 4, T = 0.5)
    enc = encode(_ex1_query())
    s = enc.program.summary()
    assert s == {"unknowns": 202, "free": 34, "psd_blocks": [1, 2, 16, 7], "rows": 90}


def test_compile_is_byte_deterministic():
    a = reduced_encoding(_ex1_query()).program.compile().encode()
    b = reduced_encoding(_ex1_query()).program.compile().encode()
    assert a == b


def test_solved_identity_residual_small():
    enc = reduced_encoding(_ex1_query())
    sol = conic.solve(enc.program.compile())
    x = enc.program.unknown_values(sol.x)
    for row in enc.program.rows:
        scale = max(1.0, max(abs(v) for k, v in row.form.coef.items() if k >= 0))
        assert abs(row.form.value(x)) <= 1e-7 * scale

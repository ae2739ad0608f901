import json

import numpy as np
import pytest
import sympy as sp

from sampcert.cli import bundled_system_path
from sampcert.expr import parse_system, system_from_dict
from sampcert.stability import (ASYNC, CERTIFIED, INFEASIBLE, SYNC, Certificate, StabilityQuery,
                                certify, max_sampling_period, verify_certificate)

from oracles import sos_sync_scale

EX1 = parse_system(bundled_system_path("ex1"))
EX2 = parse_system(bundled_system_path("ex2"))
EX3 = parse_system(bundled_system_path("ex3"))
LIN = system_from_dict({"name": "linear", "n": 1, "dynamics": ["-xk1"]})


@pytest.fixture(scope="module")
def ex1_cert():
    res = certify(StabilityQuery(EX1, 4, T=0.5))
    assert res.status == CERTIFIED
    return res.certificate


# -- query validation ----------------------------------------------------------

@pytest.mark.parametrize("kw", [
    dict(degree=3, T=1.0), dict(degree=0, T=1.0), dict(T=None), dict(T=-1.0),
    dict(mode=ASYNC, T_min=0.5, T_max=0.5), dict(mode=ASYNC, T_min=0.0),
    dict(mode="both", T=1.0), dict(T=1.0, mu1=0.0), dict(T=1.0, alpha=-1.0),
])
def test_query_validation(kw):
    with pytest.raises(ValueError):
        StabilityQuery(EX1, **kw)


# -- independent re-expansion of a package certificate ------------------------

def _sym(terms, syms):
    return sp.expand(sum(sp.Float(c, 30) * sp.Mul(*[s ** e for s, e in zip(syms, m)]) for m, c in terms))


def _gram_poly(mult, syms):
    b = sp.Matrix([sp.Mul(*[s ** e for s, e in zip(syms, m)]) for m in mult["basis"]])
    k = len(mult["basis"])
    G = np.asarray(mult["gram"]).reshape(k, k)
    return sp.expand((b.T * sp.Matrix(G) * b)[0, 0]), G


def _max_coef(expr, syms):
    expr = sp.expand(expr)
    if expr == 0:
        return 0.0
    return max(abs(float(c)) for c in sp.Poly(expr, *syms).coeffs())


def test_certificate_rechecked_with_sympy(ex1_cert):
    """Re-expand every identity from the JSON data alone (sync, one state)."""
    data = json.loads(json.dumps(ex1_cert.to_dict()))
    assert data["variables"] == ["t", "x1", "z1"]
    t, x, z = syms = sp.symbols("t x z")
    h, mu1, eps = data["time_scale"], data["query"]["mu1"], data["query"]["eps"]
    V = _sym(data["V"], (z,))
    F = _sym(data["F"], syms)
    f = -z**3 + 2 * z**2 - sp.Rational(11, 10) * x
    (sV, G0), (s0, G1), (s1, G2) = (_gram_poly(m, syms) for m in data["multipliers"])

    scale = max(1.0, _max_coef(V, syms), _max_coef(F, syms))
    # positivity: V - mu1 z^2 is the SOS form
    assert _max_coef(V - mu1 * z**2 - sV, syms) <= 1e-6 * scale
    # decrease on [0, 1] with t the normalised time remaining until the next
    # sample (so d/dt_forward = -d/dt / h), with eps |z|^2 margin
    lhs = -sp.diff(F, t) + h * ((sp.diff(V, z) + sp.diff(F, z)) * f + eps * z**2)
    assert _max_coef(lhs + s0 + s1 * t * (1 - t), syms) <= 1e-6 * scale
    # boundary: F at the end (t = 0) equals F at the start (t = 1) with z = x
    assert _max_coef(F.subs(t, 0) - F.subs({t: 1, z: x}, simultaneous=True), syms) <= 1e-6 * scale
    for G in (G0, G1, G2):
        assert np.linalg.eigvalsh(G)[0] >= -1e-8 * max(1.0, np.abs(G).max())
    # V is a genuine quadratic-bounded-below function
    vz = sp.lambdify(z, V)
    zz = np.linspace(-5, 5, 201)
    assert np.all(vz(zz) >= mu1 * zz**2 - 1e-9)


def test_certificate_json_round_trip(tmp_path, ex1_cert):
    path = tmp_path / "c.json"
    ex1_cert.save(path)
    again = Certificate.load(path)
    assert again.V == ex1_cert.V and again.F == ex1_cert.F
    assert again.query == ex1_cert.query
    assert verify_certificate(again).passed


def test_perturbed_certificate_rejected(tmp_path, ex1_cert):
    data = ex1_cert.to_dict()
    # bump an F coefficient that involves the state (terms in the sample
    # alone cancel in both identities, so they are genuinely free)
    zi = data["variables"].index("z1")
    term = next(tm for tm in data["F"] if tm[0][zi] > 0)
    term[1] += 1e-3
    bad = Certificate.from_dict(data)
    rep = verify_certificate(bad)
    assert not rep.passed
    assert rep.failures

    data = ex1_cert.to_dict()
    k = len(data["multipliers"][1]["basis"])
    g = np.asarray(data["multipliers"][1]["gram"]).reshape(k, k)
    g[0, 0] = -1.0
    data["multipliers"][1]["gram"] = g.ravel().tolist()
    rep = verify_certificate(Certificate.from_dict(data))
    assert not rep.passed


def test_physical_time_F(ex1_cert):
    Fp = ex1_cert.F_physical()
    h = ex1_cert.time_scale
    pt = {"t": 0.3, "x1": 0.7, "z1": -0.2}
    assert Fp.evaluate(pt) == pytest.approx(ex1_cert.F.evaluate({**pt, "t": 1 - 0.3 / h}), rel=1e-12)
    # reset value at the sample: stored t = 1 is physical t = 0
    assert Fp.evaluate({**pt, "t": 0.0}) == pytest.approx(ex1_cert.F.evaluate({**pt, "t": 1.0}), rel=1e-12)


def test_physical_time_F_async():
    cert = certify(StabilityQuery(EX3, 4, ASYNC, T_min=0.2, T_max=0.6)).certificate
    Fp, h = cert.F_physical(), cert.time_scale
    pt = {"t": 0.1, "x1": 0.4, "z1": 0.3, "T": 0.5}
    stored = {"t": (0.5 - 0.1) / h, "x1": 0.4, "z1": 0.3, "T": 0.5 / h}
    assert Fp.evaluate(pt) == pytest.approx(cert.F.evaluate(stored), rel=1e-12)


# -- agreement with the from-scratch SOS oracle -------------------------------

@pytest.mark.parametrize("rhs, system, N, T, feasible", [
    ("-x", LIN, 4, 1.5, True),
    ("-x", LIN, 4, 2.2, False),
    ("-z**3 + 2*z**2 - 1.1*x", EX1, 4, 1.0, False),
    ("-z**3 + 2*z**2 - 1.1*x", EX1, 2, 0.1, False),
    ("-z**3 + 2*z**2 - 1.1*x", EX1, 2, 0.3, False),
])
def test_agrees_with_oracle(rhs, system, N, T, feasible):
    status, k = sos_sync_scale(rhs, T, N)
    # only decisive oracle answers are used (see oracle docstring)
    if feasible:
        assert status == "optimal" and k > 1e-3
    else:
        assert status == "infeasible" or k < 1e-7
    res = certify(StabilityQuery(system, N, T=T))
    assert (res.status == CERTIFIED) == feasible
    if not feasible:
        assert res.status == INFEASIBLE


def test_linear_system_bound():
    # xdot = -x_k is stable iff T < 2; degree 4 gets within the resolution
    res = max_sampling_period(LIN, 4, resolution=1e-3, T_hi=3.0)
    assert res.found and 1.99 <= res.T_star < 2.0


# -- examples -------------------------------------------------------------------

def test_example2_has_extra_equilibria():
    # dynamics with the sample equal to the state: any extra rest point rules
    # out a global certificate
    z1, z2 = sp.symbols("z1 z2")
    f1 = -z2 - sp.Rational(3, 2) * z1**2 - sp.Rational(1, 2) * z1**3
    f2 = -z2 + z1
    sols = sp.solve([f1, f2], [z1, z2], dict=True)
    assert sorted(s[z1] for s in sols) == [-2, -1, 0]
    # the package's system file matches those dynamics
    for zz in ([0.0, 0.0], [-1.0, -1.0], [-2.0, -2.0]):
        pt = {"z1": zz[0], "z2": zz[1], "x1": zz[0], "x2": zz[1]}
        assert np.allclose([p.evaluate(pt) for p in EX2.f], 0.0)


@pytest.mark.parametrize("N, T", [(2, 0.1), (4, 0.01), (4, 0.5)])
def test_example2_never_certified(N, T):
    assert certify(StabilityQuery(EX2, N, T=T)).status != CERTIFIED


def test_async_not_above_sync():
    sync = max_sampling_period(EX1, 4, resolution=1e-3)
    asyn = max_sampling_period(EX3, 4, mode=ASYNC, resolution=1e-3)
    assert sync.found and asyn.found
    assert asyn.T_star <= sync.T_star + 1e-3
    assert asyn.certificate.query.mode == ASYNC
    assert verify_certificate(asyn.certificate).passed


def test_async_certificate_covers_interval():
    res = certify(StabilityQuery(EX3, 4, ASYNC, T_min=0.2, T_max=0.6))
    assert res.status == CERTIFIED
    assert res.certificate.varset.names[-1] == "T"
    # a positive T_min leaves the first solve at zero margin; the certificate
    # comes from the re-solve with vanishing Gram monomials removed
    assert res.certificate.diagnostics.get("face_rounds", 0) >= 1
    assert verify_certificate(res.certificate).passed

import csv
import json

import pytest

from sampcert.cli import EXIT_INCONCLUSIVE, EXIT_NOT_CERTIFIED, EXIT_OK, EXIT_USAGE, TOL_ENV, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_certify_then_verify(tmp_path, capsys):
    cert = tmp_path / "c.json"
    code, out, _ = run(capsys, "certify", "--system", "ex1", "--T", "0.5", "--degree", "4", "--out", str(cert))
    assert code == EXIT_OK
    assert "status: certified" in out and "PASS" in out
    code, out, _ = run(capsys, "verify", str(cert))
    assert code == EXIT_OK and out.startswith("PASS")


def test_certify_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert run(capsys, "certify", "--system", "ex1", "--T", "0.5", "--out", str(p))[0] == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_verify_names_corrupted_monomial(tmp_path, capsys):
    cert = tmp_path / "c.json"
    run(capsys, "certify", "--system", "ex1", "--T", "0.5", "--out", str(cert))
    data = json.loads(cert.read_text())
    zi = data["variables"].index("z1")
    term = next(tm for tm in data["F"] if tm[0][zi] > 0)
    term[1] += 0.01
    cert.write_text(json.dumps(data))
    code, out, _ = run(capsys, "verify", str(cert))
    assert code == EXIT_NOT_CERTIFIED
    assert out.startswith("FAIL") and "monomial" in out


def test_infeasible_period(tmp_path, capsys):
    code, out, _ = run(capsys, "certify", "--system", "ex1", "--T", "3", "--out", str(tmp_path / "c.json"))
    assert code == EXIT_NOT_CERTIFIED
    assert "status: infeasible" in out
    assert not (tmp_path / "c.json").exists()


def test_async_certify(tmp_path, capsys):
    code, out, _ = run(capsys, "certify", "--system", "ex3", "--mode", "async", "--Tmin", "0",
                       "--Tmax", "0.6", "--out", str(tmp_path / "c.json"))
    assert code == EXIT_OK


def test_max_t_row(capsys):
    code, out, _ = run(capsys, "max-t", "--system", "ex1", "--degree", "4", "--resolution", "1e-2")
    assert code == EXIT_OK
    T = float(out.splitlines()[0].split()[1])
    assert 0.77 <= T <= 0.80
    assert "Maximum Synchronous T | N=4" in out


def test_max_t_none_at_degree_two(capsys):
    code, out, _ = run(capsys, "max-t", "--system", "ex1", "--degree", "2", "--resolution", "1e-2")
    assert code == EXIT_NOT_CERTIFIED
    assert "T_star: none" in out


def test_simulate_writes_csv(tmp_path, capsys):
    cert = tmp_path / "c.json"
    run(capsys, "certify", "--system", "ex1", "--T", "0.5", "--out", str(cert))
    trace = tmp_path / "t.csv"
    code, out, _ = run(capsys, "simulate", "--system", "ex1", "--T", "0.5", "--x0", "1.5",
                       "--periods", "4", "--certificate", str(cert), "--out", str(trace))
    assert code == EXIT_OK
    rows = list(csv.reader(open(trace)))
    assert rows[0] == ["t", "x1", "k", "V", "Q", "VplusQ"]


def test_simulate_overflow_exit(tmp_path, capsys):
    sysf = tmp_path / "lin.json"
    sysf.write_text(json.dumps({"name": "lin", "n": 1, "dynamics": ["-xk1"]}))
    code, out, _ = run(capsys, "simulate", "--system", str(sysf), "--T", "2.5", "--x0", "1",
                       "--periods", "100", "--out", str(tmp_path / "t.csv"))
    assert code == EXIT_NOT_CERTIFIED
    assert "overflow at t =" in out


def test_simulate_random_schedule(tmp_path, capsys):
    outs = []
    for i in range(2):
        p = tmp_path / f"t{i}.csv"
        code, _, _ = run(capsys, "simulate", "--system", "ex3", "--Tmin", "0.1", "--Tmax", "1.0",
                         "--seed", "5", "--x0", "1", "--periods", "5", "--out", str(p))
        assert code == EXIT_OK
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]


@pytest.mark.parametrize("argv", [
    ["certify", "--system", "ex1", "--T", "0.5", "--degree", "3"],
    ["certify", "--system", "ex1"],
    ["certify", "--system", "no_such_file.json", "--T", "1"],
    ["certify", "--system", "ex1", "--mode", "async"],
    ["certify", "--system", "ex1", "--T", "-1"],
    ["simulate", "--system", "ex1", "--T", "1"],
    ["simulate", "--system", "ex1", "--T", "1", "--x0", "1,2"],
    ["simulate", "--system", "ex1", "--T", "1", "--x0", "one"],
    ["verify", "missing.json"],
    ["frobnicate"],
    ["certify", "--bogus"],
])
def test_usage_errors(capsys, argv):
    assert run(capsys, *argv)[0] == EXIT_USAGE


def test_malformed_system_names_field(tmp_path, capsys):
    sysf = tmp_path / "bad.json"
    sysf.write_text(json.dumps({"name": "bad", "n": 1}))
    code, _, err = run(capsys, "certify", "--system", str(sysf), "--T", "1")
    assert code == EXIT_USAGE
    assert "dynamics" in err


def test_solver_tolerance_env(monkeypatch, capsys):
    monkeypatch.setenv(TOL_ENV, "abc")
    assert run(capsys, "certify", "--system", "ex1", "--T", "0.5")[0] == EXIT_USAGE


def test_inconclusive_exit_code_is_distinct():
    assert len({EXIT_OK, EXIT_NOT_CERTIFIED, EXIT_USAGE, EXIT_INCONCLUSIVE}) == 4

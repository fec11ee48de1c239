import csv
import json
import subprocess
import sys

import pytest

from ccbounds.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, main
from conftest import EXAMPLE_BOXES


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_analytic_exact(capsys):
    code, out, _ = run(capsys, "analytic", "--dimension", 2, "--exact")
    assert code == EXIT_OK
    assert "1.146023 bits" in out


@pytest.mark.parametrize("N,bits", [(2, "1.142267"), (3, "1.867764"), (4, "2.452381")])
def test_analytic_approx(capsys, N, bits):
    code, out, _ = run(capsys, "analytic", "-N", N, "--approx")
    assert code == EXIT_OK and bits in out and "small_N_approx" in out


def test_solve_primal_constant_box(capsys, data_dir, tmp_path):
    rec = tmp_path / "r.json"
    code, out, _ = run(capsys, "solve-primal", "--input", data_dir / "constant_box.json",
                       "--prior", "uniform", "--units", "nats", "--out", rec)
    assert code == EXIT_OK
    assert out.startswith("primal minimum: 0.000000 nats")
    doc = json.loads(rec.read_text())
    assert doc["config"]["verb"] == "solve-primal"
    assert len(next(iter(doc["inputs_sha256"].values()))) == 64


@pytest.mark.parametrize("name", EXAMPLE_BOXES)
def test_round_trip_on_shipped_examples(capsys, data_dir, tmp_path, name):
    box = data_dir / name
    pol, cert = tmp_path / "p.json", tmp_path / "c.json"
    assert run(capsys, "solve-primal", "--input", box, "--policy-out", pol, "--cert-out", cert)[0] == EXIT_OK
    assert run(capsys, "certify", "--input", box, "--certificate", cert)[0] == EXIT_OK
    code, out, _ = run(capsys, "check", "--input", box, "--policy", pol, "--certificate", cert)
    assert code == EXIT_OK and "PASS" in out


def test_round_trip_with_prior_file(capsys, data_dir, tmp_path):
    box, prior = data_dir / "trine_box.json", data_dir / "trine_prior.json"
    pol, cert = tmp_path / "p.json", tmp_path / "c.json"
    run(capsys, "solve-primal", "--input", box, "--prior", prior, "--policy-out", pol, "--cert-out", cert)
    assert run(capsys, "certify", "--input", box, "--prior", prior, "--certificate", cert)[0] == EXIT_OK
    assert run(capsys, "check", "--input", box, "--policy", pol, "--certificate", cert)[0] == EXIT_OK


def test_certify_infeasible_exits_one(capsys, data_dir, tmp_path):
    cert = tmp_path / "c.json"
    cert.write_text(json.dumps({"format": "ccbounds.certificate", "version": 1, "num_outcomes": 2,
                                "num_states": 2, "num_measurements": 1,
                                "lambda": [[[1.0], [1.0]], [[1.0], [1.0]]]}))
    code, out, _ = run(capsys, "certify", "--input", data_dir / "identity_box.json", "--certificate", cert)
    assert code == EXIT_FAILED and "feasible=False" in out


def test_check_fails_on_mismatched_certificate(capsys, data_dir, tmp_path):
    box = data_dir / "trine_box.json"
    pol, cert = tmp_path / "p.json", tmp_path / "c.json"
    run(capsys, "solve-primal", "--input", box, "--policy-out", pol)
    run(capsys, "solve-dual", "--input", data_dir / "trine_box.json", "--cert-out", cert, "--tol", "1e-2")
    code, out, _ = run(capsys, "check", "--input", box, "--policy", pol, "--certificate", cert)
    assert code == EXIT_FAILED and "FAIL" in out


def test_solve_dual(capsys, data_dir):
    code, out, _ = run(capsys, "solve-dual", "--input", data_dir / "identity_box.json")
    assert code == EXIT_OK and "1.000000 bits" in out


def test_sweep_writes_csv_and_figure(capsys, tmp_path):
    out_csv, fig = tmp_path / "b.csv", tmp_path / "b.png"
    code, _, _ = run(capsys, "sweep", "--from", 2, "--to", 7, "--out", out_csv, "--plot", fig)
    assert code == EXIT_OK
    lines = out_csv.read_text().splitlines()
    assert lines[0].startswith("#") and any('"threads"' in l for l in lines if l.startswith("#"))
    rows = list(csv.DictReader(l for l in lines if not l.startswith("#")))
    assert [int(r["N"]) for r in rows] == list(range(2, 8))
    assert "conjectured_bits" in rows[0]
    assert fig.read_bytes()[:4] == b"\x89PNG"


def test_sweep_is_deterministic(capsys, tmp_path, monkeypatch):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(capsys, "sweep", "--from", 2, "--to", 9, "--out", a)
    monkeypatch.setenv("CCBOUNDS_THREADS", "2")
    run(capsys, "sweep", "--from", 2, "--to", 9, "--out", b)
    data = lambda p: [l for l in p.read_text().splitlines() if not l.startswith("#")]
    assert data(a) == data(b)


def test_bad_thread_count(capsys, monkeypatch):
    monkeypatch.setenv("CCBOUNDS_THREADS", "many")
    code, _, err = run(capsys, "sweep", "--from", 2, "--to", 3)
    assert code == EXIT_USAGE and "CCBOUNDS_THREADS" in err


def test_analytic_plot(capsys, tmp_path):
    fig = tmp_path / "f.png"
    assert run(capsys, "analytic", "-N", 3, "--plot", fig)[0] == EXIT_OK
    assert fig.exists()


def test_verify(capsys, tmp_path):
    rec = tmp_path / "v.json"
    code, out, _ = run(capsys, "verify", "-N", 2, "--samples", 100000, "--seed", 4, "--out", rec)
    assert code == EXIT_OK and "moments" in out
    assert json.loads(rec.read_text())["result"]["passed"] is True
    code, _, err = run(capsys, "verify", "-N", 2, "--checks", "nonsense")
    assert code == EXIT_USAGE


def test_sandwich_and_conjecture(capsys):
    code, out, _ = run(capsys, "sandwich", "--bits", 3)
    assert code == EXIT_OK and "9.885" in out
    code, out, _ = run(capsys, "conjecture", "-N", 2, "--to", 4096)
    assert code == EXIT_OK and "holds=True" in out and "hypothes" in out


@pytest.mark.parametrize("argv", [["bogus"], ["analytic"], ["analytic", "-N", "1"],
                                  ["sweep", "--from", "x"], ["analytic", "-N", "2", "--wat"]])
def test_usage_errors_exit_two(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == EXIT_USAGE


def test_input_errors_exit_two(capsys, tmp_path):
    code, _, err = run(capsys, "solve-primal", "--input", tmp_path / "missing.json")
    assert code == EXIT_USAGE and "error" in err
    bad = tmp_path / "bad.json"
    bad.write_text('{"num_outcomes": 2}')
    code, _, err = run(capsys, "solve-primal", "--input", bad)
    assert code == EXIT_USAGE and "num_states" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ccbounds", "analytic", "-N", "2"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and "1.146023 bits" in res.stdout

import json
import subprocess
import sys

import numpy as np
import pytest

from ncsms.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, EXIT_VERDICT, run
from ncsms.fieldio import family_to_json, read_mfld
from ncsms.lattice import make_grid
from ncsms.ncspace import MaximalFamily

SMALL_DECAY = ["decay", "--n", "2", "--alpha", "1", "--p", "2", "--grid", "128", "--L", "1.75",
               "--jmax", "4", "--T", "5", "--d", "2", "--seed", "7"]


def test_admissible(capsys):
    assert run(["admissible", "--n", "3", "--p", "2"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "threshold=-0.5" in out and "config_hash" in out


def test_admissible_several_exponents(capsys):
    assert run(["admissible", "--n", "2", "--p", "4", "inf"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "p=4.0 threshold=-0.25" in out and "p=inf" in out


def test_bessel(capsys):
    assert run(["bessel", "--nu", "0.5", "--r", "2.0"]) == EXIT_OK
    val = float(capsys.readouterr().out.strip().split("=")[-1])
    assert val == pytest.approx(np.sqrt(2 / (np.pi * 2.0)) * np.sin(2.0), rel=1e-12)


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["bessel", "--nu", "0.5"],
                                  ["decay", "--grid", "notanint"],
                                  ["bessel", "--nu", "-2", "--r", "1"]])
def test_usage_errors(argv, capsys):
    assert run(argv) == EXIT_USAGE


def test_config_file_merging(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"nu": 1.5, "r": 3.0}))
    assert run(["bessel", "--config", str(cfg), "--r", "2.0"]) == EXIT_OK
    assert "J_1.5(2)" in capsys.readouterr().out
    cfg.write_text(json.dumps({"nu": 1.5, "r": 3.0, "colour": "red"}))
    assert run(["bessel", "--config", str(cfg)]) == EXIT_USAGE
    assert "unknown config keys" in capsys.readouterr().err


def test_decay_writes_csv_and_verdict(tmp_path, capsys):
    out = tmp_path / "decay.csv"
    code = run(SMALL_DECAY + ["--out", str(out)])
    assert code in (EXIT_OK, EXIT_VERDICT)
    lines = out.read_text().splitlines()
    assert lines[0] == "config_hash,n,d,alpha,p,j,T,norm,seconds" and len(lines) == 4
    verdict = json.loads((tmp_path / "decay.verdict.json").read_text())
    assert set(verdict) >= {"predicted", "fitted", "slack", "pass"}
    assert (code == EXIT_OK) == verdict["pass"]


def test_decay_csv_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(SMALL_DECAY + ["--out", str(a)])
    run(SMALL_DECAY + ["--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_decay_rejects_out_of_range_j(capsys):
    assert run(["decay", "--grid", "64", "--jmax", "6"]) == EXIT_USAGE


def test_zero_input_is_not_a_failure(tmp_path, capsys):
    code = run(SMALL_DECAY + ["--test-function", "zero", "--out", str(tmp_path / "z.csv")])
    assert code == EXIT_OK
    assert "degenerate input" in capsys.readouterr().out


def test_maximal_norm_from_family_file(tmp_path, capsys):
    g = make_grid(1, 8, 1.0)
    from ncsms.lattice import MatrixField
    P = np.zeros((8, 2, 2))
    P[:, 0, 0] = 1
    Q = np.zeros((8, 2, 2))
    Q[:, 1, 1] = 1
    fam = MaximalFamily([0, 1], [MatrixField(g, P, True), MatrixField(g, Q, True)], "positive")
    path = tmp_path / "fam.json"
    path.write_text(json.dumps(family_to_json(fam)))
    cert = tmp_path / "cert.mfld"
    code = run(["maximal-norm", "--family", str(path), "--p", "1", "--cert-out", str(cert),
                "--out", str(tmp_path / "r.json")])
    assert code == EXIT_OK
    res = json.loads((tmp_path / "r.json").read_text())
    # identity dominates both projections: ||I||_1 with site weight 1/8 over 8 sites
    assert res["value"] == pytest.approx(2.0, rel=1e-6)
    assert res["certificate_valid"]
    assert read_mfld(cert).grid == g


def test_maximal_norm_missing_file(capsys):
    assert run(["maximal-norm", "--family", "/nonexistent.json"]) == EXIT_USAGE


def test_numerical_failure_exit_code(capsys):
    # the band [8, 64] has lattice frequencies but the symbol passes Nyquist 16
    assert run(["fio", "--j", "5", "--grid", "64", "--L", "2"]) == EXIT_NUMERICAL
    assert run(["envelope-check", "--grid", "32"]) == EXIT_NUMERICAL


@pytest.mark.parametrize("argv", [
    ["sobolev-check", "--grid", "32", "--j", "1", "--T", "5"],
    ["split-check", "--sites", "4"],
    ["envelope-check", "--grid", "64"],
    ["converge"],
    ["fio", "--grid", "64", "--j", "2"],
    ["phi0-envelope"],
    ["kernel-l1", "--grid", "512", "--jmax", "4"],
])
def test_checks_pass(argv, tmp_path, capsys):
    out = tmp_path / "r.json"
    assert run(argv + ["--out", str(out)]) == EXIT_OK
    obj = json.loads(out.read_text())
    assert obj["schema"].startswith("ncsms.") and len(obj["config_hash"]) == 12


def test_unconverged_schedule_is_a_verdict_failure(capsys):
    # t only reaches 1/8, where the error is still above 1e-2
    assert run(["converge", "--grid", "256", "--steps", "4"]) == EXIT_VERDICT


def test_selftest(capsys):
    assert run(["selftest"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("PASS") == 12 and "FAIL" not in out


def test_console_script_entry():
    proc = subprocess.run([sys.executable, "-m", "ncsms.cli", "admissible", "--n", "2",
                           "--p", "4"], capture_output=True, text=True)
    assert proc.returncode == 0 and "threshold=-0.25" in proc.stdout

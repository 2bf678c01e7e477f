import csv
import io
import json
import math
import os
import subprocess
import sys

import pytest

from cle_nesting.cli import CURVE_COLUMNS, format_value, main
from cle_nesting.nesting import nu_max


def run(args, capsys, env=None, monkeypatch=None):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


def run_module(*args, env=None):
    e = dict(os.environ)
    e.update(env or {})
    return subprocess.run([sys.executable, "-m", "cle_nesting", *args], capture_output=True,
                          text=True, env=e)


def parse_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_constants_kappa6(capsys):
    code, out, _ = run(["constants", "--kappa", "6"], capsys)
    assert code == 0
    (row,) = parse_csv(out)
    assert abs(float(row["nu_typical"]) - 0.091888149) <= 1e-7
    assert abs(float(row["nu_max"]) - 0.79577041) <= 1e-7
    assert row["gasket_dim"] == "1.895833333"


def test_constants_kappa4_json(capsys):
    code, out, _ = run(["constants", "--kappa", "4", "--format", "json"], capsys)
    d = json.loads(out)
    assert code == 0 and d["nu_typical"] == 0.101321184


def test_curve_columns_and_rows(capsys):
    code, out, _ = run(["curve", "--kappa", "6"], capsys)
    assert code == 0
    assert out.splitlines()[0] == ",".join(CURVE_COLUMNS)
    rows = parse_csv(out)
    assert float(rows[0]["nu"]) == 0.0 and rows[0]["dim"] == "1.895833333"
    typical = [r for r in rows if r["dim"] == "2.000000000"]
    assert typical and abs(float(typical[0]["nu"]) - 0.091888149) < 1e-9
    nm = nu_max(6.0)
    for r in rows:
        nu = float(r["nu"])
        if nu > nm:
            assert r["dim"] == "empty"
        else:
            assert r["dim"] != "empty"
        assert abs(float(r["gamma"]) - float(r["gamma_parametric"])) < 1e-8


def test_curve_nu_range_json(capsys):
    code, out, _ = run(["curve", "--kappa", "4", "--nu-min", "0.2", "--nu-max", "0.5",
                        "--format", "json", "--precision", "12"], capsys)
    recs = json.loads(out)
    assert code == 0 and recs
    assert all(0.2 <= r["nu"] <= 0.5 for r in recs)


def test_gff_profile(capsys):
    code, out, _ = run(["gff-profile", "--n-points", "51"], capsys)
    rows = parse_csv(out)
    assert code == 0 and len(rows) == 51
    mid = rows[25]
    assert float(mid["alpha"]) == 0.0
    assert mid["nu"] == "0.101321184" and float(mid["dim"]) == 2.0
    assert float(rows[0]["dim"]) == 0.0 and float(rows[-1]["dim"]) == 0.0
    # Reference column equals the constants command's ν_max; the profile endpoint stays below it.
    code, cout, _ = run(["constants", "--kappa", "4"], capsys)
    ref = float(parse_csv(cout)[0]["nu_max"])
    assert abs(float(rows[-1]["nu_max_kappa4"]) - ref) < 1e-9
    assert float(rows[-1]["nu"]) < ref


def test_legendre(capsys):
    assert run(["legendre", "--mgf", "gaussian", "--x", "1"], capsys)[1].strip() == "0.500000000"
    code, out, _ = run(["legendre", "--atoms", "1:0.5,-1:0.5", "--x", "0.5"], capsys)
    assert code == 0 and out.strip() == "0.130812036"
    out = run(["legendre", "--mgf", "cle", "--kappa", "6", "--x", "10.882796185405306"], capsys)[1]
    assert abs(float(out)) < 1e-12
    assert run(["legendre", "--atoms", "1:0.5,-1:0.5", "--x", "2"], capsys)[1].strip() == "inf"


def test_simulate_json_and_determinism(capsys):
    args = ["simulate", "--kappa", "6", "--r", "5", "--nu-lo", "0.5", "--nu-hi", "0.6",
            "--samples", "20000", "--seed", "3"]
    outs = []
    for w in ("1", "4", "8"):
        code, out, _ = run(args + ["--workers", w], capsys)
        assert code == 0
        d = json.loads(out)
        d.pop("wallclock_ms")
        outs.append(d)
    assert outs[0] == outs[1] == outs[2]
    assert set(outs[0]) == {"p_hat", "stderr", "implied_rate", "theory_rate", "n_effective",
                            "seed", "r", "window"}


def test_simulate_typical_window(capsys):
    code, out, _ = run(["simulate", "--kappa", "6", "--r", "30", "--nu-lo", "0.05", "--nu-hi",
                        "0.15", "--samples", "100000", "--seed", "7"], capsys)
    d = json.loads(out)
    assert code == 0 and d["theory_rate"] == 0.0 and d["implied_rate"] < 0.02


def test_seed_environment(capsys, monkeypatch):
    args = ["simulate", "--kappa", "6", "--r", "5", "--nu-lo", "0.5", "--nu-hi", "0.6",
            "--samples", "2000"]
    monkeypatch.setenv("CLE_NESTING_SEED", "42")
    d = json.loads(run(args, capsys)[1])
    assert d["seed"] == 42
    d2 = json.loads(run(args + ["--seed", "5"], capsys)[1])
    assert d2["seed"] == 5
    monkeypatch.setenv("CLE_NESTING_SEED", "abc")
    assert run(args, capsys)[0] == 2


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text("# window study\nkappa = 6\nr = 5\nnu-lo = 0.5\nnu_hi = 0.6\nsamples = 3000\nseed = 9\n")
    code, out, _ = run(["--config", str(cfg), "simulate"], capsys)
    d = json.loads(out)
    assert code == 0 and d["seed"] == 9 and d["window"] == [0.5, 0.6]
    code, out, _ = run(["--config", str(cfg), "simulate", "--seed", "10"], capsys)
    assert json.loads(out)["seed"] == 10
    bad = tmp_path / "bad.cfg"
    bad.write_text("kappa = 6\nflavour = mild\n")
    assert run(["--config", str(bad), "constants"], capsys)[0] == 2
    assert run(["--config", str(tmp_path / "missing.cfg"), "constants", "--kappa", "6"], capsys)[0] == 2


@pytest.mark.parametrize("args", [
    [],
    ["constants"],
    ["constants", "--kappa", "9"],
    ["constants", "--kappa", "abc"],
    ["constants", "--kappa", "6", "--precision", "0"],
    ["constants", "--kappa", "6", "--precision", "18"],
    ["curve", "--kappa", "2"],
    ["simulate", "--kappa", "6", "--r", "5", "--nu-lo", "0.6", "--nu-hi", "0.5"],
    ["simulate", "--kappa", "6", "--r", "5", "--nu-lo", "0.5", "--nu-hi", "0.6", "--tilt", "1.0"],
    ["simulate", "--kappa", "6", "--r", "5", "--nu-lo", "0.5", "--nu-hi", "0.6", "--tilt", "maybe"],
    ["simulate", "--kappa", "6", "--r", "5", "--nu-lo", "0.5", "--nu-hi", "0.6", "--weight-atoms", "1:1"],
    ["simulate", "--kappa", "6", "--r", "5", "--nu-lo", "0.5", "--nu-hi", "0.6", "--weight-atoms",
     "1:0.7", "--alpha-lo", "0", "--alpha-hi", "1"],
    ["simulate", "--kappa", "6", "--r", "5", "--nu-lo", "0.5", "--nu-hi", "0.6", "--seed", "-3"],
    ["legendre", "--x", "1"],
    ["legendre", "--mgf", "cle", "--x", "1"],
    ["bogus"],
])
def test_usage_errors_exit_2(args, capsys):
    assert run(args, capsys)[0] == 2


def test_runtime_error_exit_1(capsys, monkeypatch):
    import cle_nesting.cli as cli

    def boom(*a, **k):
        raise ArithmeticError("no convergence")

    monkeypatch.setattr(cli, "nu_max", boom)
    assert run(["constants", "--kappa", "6"], capsys)[0] == 1


@pytest.mark.parametrize("prec", [1, 5, 9, 17])
def test_precision_roundtrip(prec, capsys):
    code, out, _ = run(["constants", "--kappa", "5.5", "--precision", str(prec)], capsys)
    (row,) = parse_csv(out)
    from cle_nesting.nesting import nu_typical
    v = float(row["nu_typical"])
    assert abs(v - nu_typical(5.5)) <= 0.5 * 10.0**-prec + 1e-17
    assert row["nu_typical"] == format_value(v, prec)


def test_format_value():
    assert format_value(float("inf"), 3) == "inf"
    assert format_value(1.5e-9, 3) == "1.500e-09"
    assert format_value(0.0, 2) == "0.00"


def test_output_file(tmp_path, capsys):
    path = tmp_path / "curve.csv"
    assert run(["curve", "--kappa", "6", "--output", str(path)], capsys)[0] == 0
    assert path.read_text().startswith("nu,gamma,dim")


def test_module_entry_point():
    res = run_module("constants", "--kappa", "6")
    assert res.returncode == 0 and "0.091888149" in res.stdout
    assert run_module("constants", "--kappa", "10").returncode == 2


def test_subprocess_byte_identical():
    args = ["simulate", "--kappa", "6", "--r", "5", "--nu-lo", "0.5", "--nu-hi", "0.6",
            "--samples", "5000", "--seed", "1"]

    def strip(text):
        d = json.loads(text)
        d.pop("wallclock_ms")
        return json.dumps(d)

    a, b = run_module(*args), run_module(*args, "--workers", "4")
    assert a.returncode == 0 and strip(a.stdout) == strip(b.stdout)

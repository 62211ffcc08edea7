import csv
import json
from pathlib import Path

import numpy as np
import pytest

from implosion import cli, spectra
from implosion.exponents import GasParams

GOLDEN = Path(__file__).parent / "golden"
MONO = ["--d", "3", "--gamma", "5/3", "--N", "1"]


def table(path):
    lines = path.read_text().splitlines()
    assert lines[0] == "# schema,1"
    return list(csv.DictReader(lines[1:]))


def run(capsys, *args):
    code = cli.main(list(args))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_exponents_prints_and_admissible(capsys):
    code, out, _ = run(capsys, "exponents", *MONO, "--gamma-kin", "1", "--gamma-kin", "-3", "--gamma-kin", "0")
    assert code == 0
    assert "c_r = 1.48952850" in out
    assert out.count("admissible: true") == 3


def test_exponents_golden(capsys, tmp_path):
    assert run(capsys, "exponents", *MONO, "--gamma-kin", "1", "--out", str(tmp_path))[0] == 0
    got = json.loads((tmp_path / "exponents.json").read_text())
    ref = json.loads((GOLDEN / "exponents_d3_g5-3_N1.json").read_text())
    assert got.keys() == ref.keys() and got["schema"] == 1
    for k, v in ref["exponents"].items():
        if isinstance(v, float):
            assert got["exponents"][k] == pytest.approx(v, rel=1e-14, abs=1e-15), k
        else:
            assert got["exponents"][k] == v
    assert got["kinetic"]["1.0"]["admissible"] is True
    assert got["kinetic"]["1.0"]["margin"] == pytest.approx(ref["kinetic"]["1.0"]["margin"], rel=1e-12)


def test_exponents_sweep(capsys, tmp_path):
    code, out, _ = run(capsys, "exponents", "--d", "2", "--gamma", "7/5", "--sweep", "1..5", "--out", str(tmp_path))
    assert code == 0
    rows = table(tmp_path / "sweep.csv")
    assert [r["N"] for r in rows] == ["1", "2", "3", "4", "5", "inf"]
    cr = [float(r["c_r"]) for r in rows]
    assert all(a > b for a, b in zip(cr, cr[1:]))


@pytest.mark.parametrize("args", [
    ["exponents", "--d", "4", "--gamma", "5/3"],
    ["exponents", "--d", "3", "--gamma", "9"],
    ["exponents", "--d", "3", "--gamma", "abc"],
    ["exponents", "--gamma", "5/3"],
    ["profile", "--d", "3", "--gamma", "5/3", "--rmax", "5"],
    ["evolve", "--d", "3", "--gamma", "5/3", "--N", "2", "--cells", "32", "--tau-end", "0.01"],
    ["nonsense"],
])
def test_usage_errors_exit_1(capsys, args):
    assert run(capsys, *args)[0] == 1


def test_certificate_failure_exits_2(capsys, tmp_path):
    args = ["evolve", *MONO, "--perturbation", "Q 10 5 0.5", "--cells", "32", "--tau-end", "0.5", "--out", str(tmp_path)]
    code, _, err = run(capsys, *args)
    assert code == 2
    assert "c_r + V - aQ <= 0" in err


def test_internal_inconsistency_exits_3(capsys, monkeypatch):
    def boom(*a, **k):
        raise spectra.InternalInconsistency("Routh count disagrees")

    monkeypatch.setattr(spectra, "unstable_dimension", boom)
    assert run(capsys, "spectra", *MONO, "--n-max", "2")[0] == 3


def test_help_exits_0(capsys):
    code, out, _ = run(capsys, "--help")
    assert code == 0
    for sub in ("exponents", "profile", "snapshot", "spectra", "evolve", "verify"):
        assert sub in out


def test_profile_outputs(capsys, tmp_path):
    code, _, _ = run(capsys, "profile", *MONO, "--rmax", "1e4", "--out", str(tmp_path))
    assert code == 0
    rows = table(tmp_path / "profile.csv")
    assert rows and all(r["in_Omega"] == "1" and r["outgoing_ok"] == "1" for r in rows)
    tail = json.loads((tmp_path / "tail.json").read_text())
    assert tail["schema"] == 1 and tail["certificates"]["violations"] == []
    assert tail["v1"] == pytest.approx(-0.3144567953070643, rel=1e-8)
    assert table(tmp_path / "entropy.csv")
    series = json.loads((tmp_path / "series.json").read_text())
    assert series["schema"] == 1 and series["coefficients"][0]["v_k"] == -0.5


def test_profile_fixed_point_only(capsys):
    code, out, _ = run(capsys, "profile", *MONO, "--fixed-point-only")
    assert code == 0 and "v0 = -0.5" in out and "h0 = 1.0" in out


def test_profile_tolerance_halving(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "profile", *MONO, "--tol", "1e-10", "--out", str(a))[0] == 0
    assert run(capsys, "profile", *MONO, "--tol", "5e-11", "--out", str(b))[0] == 0
    ta = json.loads((a / "tail.json").read_text())
    tb = json.loads((b / "tail.json").read_text())
    for k in ("v1", "q1", "h1"):
        assert abs(ta[k] - tb[k]) <= 10 * 1e-10 * max(1.0, abs(ta[k])) * 10, k


def test_snapshot_bundle(capsys, tmp_path):
    code, out, _ = run(capsys, "snapshot", *MONO, "--out", str(tmp_path), "--plot")
    assert code == 0
    meta = json.loads((tmp_path / "snapshot.json").read_text())
    assert meta["schema"] == 1
    assert meta["rates"]["rho"] == pytest.approx(-1.5, rel=0.02)
    assert meta["p_at_origin"] == [0.0] * 4
    files = sorted(tmp_path.glob("*.csv"))
    assert len(files) == 4
    for f in files:
        rows = table(f)
        assert float(rows[0]["p"]) == 0.0
    assert any(p.suffix == ".svg" for p in tmp_path.iterdir())


def test_snapshot_rejects_positive_times(capsys):
    assert run(capsys, "snapshot", *MONO, "--times", "-1,0.5")[0] == 1


def test_spectra_five_cases(capsys, tmp_path):
    code, out, _ = run(capsys, "spectra", *MONO, "--five-cases", "--out", str(tmp_path))
    assert code == 0
    dims = json.loads((tmp_path / "dimensions.json").read_text())["cases"]
    assert [c["dim"] for c in dims] == [11, 18, 5, 7, 1]
    assert [c["decomposition"] for c in dims] == ["8+3+0", "8+10+0", "3+2+0", "3+4+0", "0+1+0"]
    rep = json.loads((tmp_path / "spectra.json").read_text())
    assert all(g["passed"] for g in rep["gershgorin"])
    assert (tmp_path / "census.csv").exists()


def test_spectra_one_d_degenerate_block(capsys, tmp_path):
    code, _, _ = run(capsys, "spectra", "--d", "1", "--gamma", "2", "--n-max", "3", "--out", str(tmp_path))
    assert code == 0
    rows = table(tmp_path / "census.csv")
    h12 = [r for r in rows if r["kind"] == "H1_1D" and "n=2" in r["indices"]]
    assert h12 and h12[0]["zero"] == "1" and h12[0]["pos"] == "0"


def test_evolve_zero_and_config(capsys, tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("# schema 1\n[params]\nd = 3\ngamma = 5/3\nN = 1\n[grid]\ncells = 64\n[run]\ntau_end = 0.5\n")
    out = tmp_path / "o"
    code, text, _ = run(capsys, "evolve", "--config", str(cfg), "--out", str(out))
    assert code == 0 and "unperturbed run" in text
    for name in ("evolve.ini", "timeseries.csv", "final_fields.csv", "decay.json"):
        assert (out / name).exists(), name
    series = list(csv.reader((out / "timeseries.csv").read_text().splitlines()))[2:]
    assert max(abs(float(x)) for r in series for x in r[1:12]) < 1e-12
    decay = json.loads((out / "decay.json").read_text())
    assert decay["schema"] == 1 and decay["min_outgoing_speed"] > 0


def test_verify_single_point(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "--d", "2", "--gamma", "2", "--out", str(tmp_path))
    assert code == 0 and "1/1 parameter points pass" in out
    pts = json.loads((tmp_path / "verify.json").read_text())["points"]
    assert pts[0]["dimension"] == 5 and pts[0]["gershgorin"] is True


def test_run_config_roundtrip(tmp_path):
    cfg = cli.RunConfig(GasParams(2, "7/5", 3), {"profile": {"rmax": "1e5", "tol": "1e-10"},
                                                 "snapshot": {"times": "-1,-0.1"}}, "results")
    text = cfg.to_text()
    assert text.startswith("# schema 1")
    assert cli.RunConfig.from_text(text) == cfg
    path = tmp_path / "c.ini"
    path.write_text(text)
    params, loaded = cli._params(None, None, 1, str(path))
    assert params == GasParams(2, "7/5", 3) and loaded.out == "results"


def test_config_flags_override(tmp_path, capsys):
    path = tmp_path / "c.ini"
    path.write_text(cli.RunConfig(GasParams(3, "5/3", 2)).to_text())
    code, out, _ = run(capsys, "exponents", "--config", str(path), "--gamma", "7/5")
    assert code == 0 and "gamma = 7/5" in out and "N = 2" in out


def test_deterministic_outputs(capsys, tmp_path):
    for name in ("a", "b"):
        assert run(capsys, "spectra", *MONO, "--n-max", "3", "--out", str(tmp_path / name))[0] == 0
    assert (tmp_path / "a" / "census.csv").read_text() == (tmp_path / "b" / "census.csv").read_text()
    np.testing.assert_equal(json.loads((tmp_path / "a" / "spectra.json").read_text()),
                            json.loads((tmp_path / "b" / "spectra.json").read_text()))

import csv
import json
import math
import subprocess
import sys

import numba
import pytest

from muskat_lab.cli import main, set_threads
from muskat_lab.modulus import nu_of, tstar_of


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write_cfg(path, outdir, **extra):
    base = {
        "n": 16,
        "period": 4.0,
        "scheme": "rk4",
        "horizon": 0,
        "steps": 100,
        "checkpoint_every": 10,
        "output_dir": str(outdir),
        "initial.kind": "mode",
        "initial.params": "k1=1; amp=1e-3",
        "quadrature.rings": 8,
        "quadrature.sectors": 16,
    }
    base.update(extra)
    path.write_text("".join(f"{k} = {v}\n" for k, v in base.items()))
    return path


# -- modulus -------------------------------------------------------------------


def test_modulus_text(capsys):
    code, out, _ = run_cli(capsys, "modulus", "--L", "2", "--samples", "5")
    assert code == 0
    lines = out.strip().splitlines()
    meta = dict(l[2:].split(" = ") for l in lines if l.startswith("# "))
    assert float(meta["nu"]) == nu_of(2.0)
    assert float(meta["tstar"]) == pytest.approx(2538.4475581119, rel=1e-12)
    rows = list(csv.DictReader([l for l in lines if not l.startswith("#")]))
    assert len(rows) == 5
    assert float(rows[0]["j"]) == 1.0 and float(rows[-1]["j"]) == 0.0


def test_modulus_json(capsys):
    code, out, _ = run_cli(capsys, "modulus", "--L", "5", "--json")
    d = json.loads(out)
    assert code == 0 and d["tstar"] == tstar_of(5.0)
    assert d["t1"] < d["t2"] < d["tstar"]


@pytest.mark.parametrize("L", ["0.5", "nan"])
def test_modulus_rejects_bad_L(capsys, L):
    code, _, err = run_cli(capsys, "modulus", "--L", L)
    assert code == 1 and "error" in err


# -- verify-lemmas -------------------------------------------------------------


def test_verify_lemmas_quick(capsys):
    code, out, _ = run_cli(capsys, "verify-lemmas", "--resolution", "10", "--skip-chain", "--json")
    d = json.loads(out)
    assert code == 0 and d["passed"]
    nu = nu_of(2.0)
    assert d["monotonicity"]["quotient_argmin"] == pytest.approx([2.0, nu, nu], abs=1e-6)
    names = {c["name"] for c in d["checks"]}
    assert {"monotonicity_gap", "monotonicity_argmin", "kiselev_constant", "dissipation_unconditional"} <= names
    assert any(not r["holds"] for r in d["diagnostics"] if r["name"] == "dissipation_large_xi")


def test_verify_lemmas_text(capsys):
    code, out, _ = run_cli(capsys, "verify-lemmas", "--resolution", "8", "--skip-chain", "--xi-grid", "10")
    assert code == 0
    assert "PASS" in out or "pass" in out.lower()


# -- simulate ------------------------------------------------------------------


def test_simulate_mode_run(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "a.cfg", tmp_path / "out")
    code, out, _ = run_cli(capsys, "simulate", "--config", str(cfg), "--json")
    assert code == 0
    s = json.loads(out)
    assert s["steps"] == 100 and s["exit_code"] == 0
    assert all(v for v in s["monitors"].values())
    with open(tmp_path / "out" / "timeseries.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 10
    assert [int(r["step"]) for r in rows] == list(range(10, 101, 10))
    saved = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert saved["config_text"] == cfg.read_text()
    assert (tmp_path / "out" / "snap_000000.musk").exists()


def test_simulate_fixture_reports_crossing(tmp_path, capsys):
    cfg = write_cfg(
        tmp_path / "f.cfg",
        tmp_path / "fx",
        n=64,
        period=8.0,
        steps=1,
        scheme="ifrk4",
        **{"initial.kind": "fixture-crossing", "initial.params": "t=0"},
    )
    code, out, _ = run_cli(capsys, "simulate", "--config", str(cfg), "--json")
    s = json.loads(out)
    assert code == 3
    assert s["crossing"]["xi"] == pytest.approx(1.0)
    assert s["steps"] == 0
    assert s["verdict"]["chain_holds"] and s["verdict"]["contradiction"]


def test_simulate_bad_config(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("scheme = euler\n")
    code, _, err = run_cli(capsys, "simulate", "--config", str(p))
    assert code == 1 and "scheme" in err
    code, _, _ = run_cli(capsys, "simulate", "--config", str(tmp_path / "nope.cfg"))
    assert code == 1


def test_simulate_rk4_too_large_dt_is_config_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "u.cfg", tmp_path / "u", dt_factor=10.0, dt_max=10.0)
    code, _, err = run_cli(capsys, "simulate", "--config", str(cfg))
    assert code == 1 and "RK4" in err


def test_simulate_resume_bit_for_bit(tmp_path, capsys):
    out = tmp_path / "r"
    cfg = write_cfg(
        tmp_path / "r.cfg",
        out,
        steps=30,
        scheme="ifrk4",
        **{"initial.kind": "random-lipschitz", "initial.params": ""},
    )
    assert run_cli(capsys, "simulate", "--config", str(cfg))[0] == 0
    ref = (out / "snap_000030.musk").read_bytes()
    (out / "snap_000030.musk").unlink()
    code, _, _ = run_cli(capsys, "simulate", "--config", str(cfg), "--resume", str(out / "snap_000010.musk"))
    assert code == 0
    assert (out / "snap_000030.musk").read_bytes() == ref
    s = json.loads((out / "summary.json").read_text())
    assert s["resumed_from"].endswith("snap_000010.musk")


def test_simulate_resume_grid_mismatch(tmp_path, capsys):
    out = tmp_path / "m"
    cfg = write_cfg(tmp_path / "m.cfg", out, steps=10)
    assert run_cli(capsys, "simulate", "--config", str(cfg))[0] == 0
    other = write_cfg(tmp_path / "o.cfg", tmp_path / "o", n=32)
    code, _, _ = run_cli(capsys, "simulate", "--config", str(other), "--resume", str(out / "snap_000010.musk"))
    assert code == 1


# -- symbol-check ----------------------------------------------------------------


def test_symbol_check_small(capsys):
    code, out, _ = run_cli(capsys, "symbol-check", "--n", "32", "--modes", "1,2", "--json")
    d = json.loads(out)
    assert code == 0 and d["passed"]
    assert d["oracle_constant"] == pytest.approx(2 * math.pi, rel=1e-9)
    assert [r["k"] for r in d["table"]] == [1, 2]


@pytest.mark.parametrize("modes", ["0", "1,-2", "a"])
def test_symbol_check_rejects_modes(capsys, modes):
    code, _, _ = run_cli(capsys, "symbol-check", "--n", "16", "--modes", modes)
    assert code == 1


def test_symbol_check_reports_failure(capsys):
    code, _, _ = run_cli(capsys, "symbol-check", "--n", "32", "--modes", "1,2", "--tol", "1e-9")
    assert code == 3


# -- threads and entry point -------------------------------------------------------


def test_set_threads(monkeypatch):
    before = numba.get_num_threads()
    try:
        assert set_threads(1) == 1 and numba.get_num_threads() == 1
        monkeypatch.setenv("MUSKAT_LAB_THREADS", "1")
        assert set_threads(None) == 1
        assert set_threads(10**6) == numba.config.NUMBA_NUM_THREADS
        monkeypatch.delenv("MUSKAT_LAB_THREADS")
        assert set_threads(None) is None
    finally:
        numba.set_num_threads(before)


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "muskat_lab", "modulus", "--L", "2", "--samples", "2"], capture_output=True, text=True)
    assert r.returncode == 0 and "tstar" in r.stdout
    r = subprocess.run([sys.executable, "-m", "muskat_lab", "nosuch"], capture_output=True, text=True)
    assert r.returncode != 0

import csv
import io as stdio
import subprocess
import sys

import numpy as np
import pytest

from ogtt import io
from ogtt.cli import main
from ogtt.synth import generate

from .conftest import HEALTHY

FAST = ["--iterations", "30000", "--burn-in", "3000"]


@pytest.fixture
def healthy_file(tmp_path, fs):
    return io.write_observations(generate(HEALTHY, fs, seed=8).obs, tmp_path / "healthy.csv")


def test_simulate_fixed_point(capsys):
    rc = main(["simulate", "--theta0", "2", "--theta1", "0.5", "--theta2", "0.5", "--g0", "100",
               "--v0", "0", "--every", "20"])
    out = capsys.readouterr()
    assert rc == 0
    rows = list(csv.DictReader(stdio.StringIO(out.out)))
    assert list(rows[0]) == ["time_hr", "G", "I", "L", "D", "V"]
    assert len(rows) == 31
    assert {float(r["G"]) for r in rows} == {100.0}
    assert float(rows[-1]["time_hr"]) == pytest.approx(3.0)
    assert "seed" in out.err


def test_simulate_rejects_bad_params(capsys):
    rc = main(["simulate", "--theta0", "-1", "--theta1", "0.5", "--theta2", "0.5", "--g0", "100"])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:")


def test_usage_error_names_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--theta0", "2"])
    assert exc.value.code == 2
    assert "--theta1" in capsys.readouterr().err


def test_fit_end_to_end(tmp_path, healthy_file, capsys):
    out = tmp_path / "out"
    rc = main(["fit", str(healthy_file), "--out", str(out), "--seed", "5"] + FAST)
    text = capsys.readouterr().out
    assert rc == 0
    assert "seed: 5" in text
    assert sorted(p.name for p in out.iterdir()) == ["band.csv", "band.svg", "posterior.csv",
                                                      "summary.txt"]
    summary = (out / "summary.txt").read_text()
    assert "theta0 flag: normal" in summary
    assert "seed: 5" in summary
    draws, lp = io.read_posterior(out / "posterior.csv")
    assert draws.shape == (27000, 4) and np.all(np.isfinite(lp))
    assert len(io.read_band(out / "band.csv")["time_hr"]) == 61


def test_fit_is_byte_reproducible(tmp_path, healthy_file):
    for name in ("a", "b"):
        assert main(["fit", str(healthy_file), "--out", str(tmp_path / name)] + FAST) == 0
    assert ((tmp_path / "a" / "posterior.csv").read_bytes()
            == (tmp_path / "b" / "posterior.csv").read_bytes())


def test_fit_single_row_file(tmp_path, capsys):
    p = tmp_path / "one.csv"
    p.write_text("time_hr,glucose_mg_dl\n0,92\n")
    assert main(["fit", str(p), "--out", str(tmp_path / "o")]) != 0
    err = capsys.readouterr().err
    assert "n >= 2" in err and len(err.strip().splitlines()) == 1
    assert not (tmp_path / "o").exists()


def test_fit_with_config_and_env(tmp_path, healthy_file, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("iterations = 20000\nburn_in = 2000\nseed = 2\nthreshold = 150\n")
    monkeypatch.setenv(io.OUT_DIR_ENV, str(tmp_path / "envout"))
    assert main(["fit", str(healthy_file), "--config", str(cfg)]) == 0
    assert "P[G(3h) > 150" in (tmp_path / "envout" / "summary.txt").read_text()


def test_fit_unknown_config_key(tmp_path, healthy_file, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("iteratons = 100\n")
    assert main(["fit", str(healthy_file), "--config", str(cfg)]) == 1
    assert "unknown key 'iteratons'" in capsys.readouterr().err


def test_recover_small(tmp_path, capsys):
    rc = main(["recover", "--replicates", "2", "--allow-small", "--iterations", "5000",
               "--burn-in", "500", "--out", str(tmp_path)])
    assert rc == 0
    assert "seed: 0" in capsys.readouterr().out
    rows = list(csv.DictReader(open(tmp_path / "recovery.csv")))
    assert [r["parameter"] for r in rows] == ["theta0", "theta1", "theta2", "g0"]


def test_sbc_refuses_small_without_flag(capsys):
    assert main(["sbc", "--replicates", "5"]) == 1
    assert "n_replicates >= 100" in capsys.readouterr().err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "ogtt", "simulate", "--theta0", "2", "--theta1",
                        "0.5", "--theta2", "0.5", "--g0", "100", "--every", "600"],
                       capture_output=True, text=True, check=True)
    assert r.stdout.splitlines()[0] == "time_hr,G,I,L,D,V"
    assert len(r.stdout.splitlines()) == 3

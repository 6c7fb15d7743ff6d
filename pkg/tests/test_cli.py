import csv
import shutil
import subprocess

import pytest

from charwave.cli import main

CONST = """
epsilon = 0.1
expect_blowup = {expect}
[wavespeed]
kind = "constant"
[psi]
kind = "gaussian"
[solver]
dx = 0.0625
max_time = 2.0
snapshot_cadence = 1.0
"""

P3 = """
[wavespeed]
kind = "power_sqrt"
A = 1.0
p = 3.0
theta_max = 0.9
"""

SWEEP = """
epsilons = [0.4, 0.35, 0.3, 0.25]
[wavespeed]
kind = "power_sqrt"
A = 1.0
p = 2.0
theta_max = 0.9
[psi]
kind = "gaussian"
[solver]
dx = 0.03125
cfl = 0.95
max_time = 4.0
[sweep]
surrogate = "always"
seeds_per_family = 8
[fit]
model = "power"
source = "riccati"
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_validate_speed(tmp_path, capsys):
    cfg = write(tmp_path, "v.toml", P3)
    assert main(["validate-speed", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert "pass" in capsys.readouterr().out
    assert "passed = true" in (tmp_path / "o" / "validation.kv").read_text()


def test_validate_speed_mismatch(tmp_path):
    cfg = write(tmp_path, "v.toml", P3 + "[validate]\norder = 2.0\n")
    assert main(["validate-speed", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_run_constant(tmp_path):
    cfg = write(tmp_path, "c.toml", CONST.format(expect="false"))
    out = tmp_path / "o"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    assert 'reason = "horizon"' in (out / "stop.kv").read_text()
    rows = list(csv.reader(open(out / "snapshots.csv")))
    assert rows[0] == ["t", "x", "r", "s", "rx", "sx", "ux", "ut", "c"]
    assert {r[0] for r in rows[1:]} == {"0", "1", "2"}
    assert (out / "series.csv").exists()


def test_run_missing_blowup(tmp_path):
    cfg = write(tmp_path, "c.toml", CONST.format(expect="true"))
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_fit_too_few(tmp_path, capsys):
    rec = tmp_path / "records.csv"
    rec.write_text("epsilon,t_star_grid,t_star_riccati,stop_reason,x_blowup,dx_used,runtime_seconds\n"
                   "0.4,10,,blowup,1,0.1,1\n0.2,20,,blowup,1,0.1,1\n0.1,40,,blowup,1,0.1,1\n")
    cfg = write(tmp_path, "f.toml", f'[wavespeed]\nkind = "constant"\n[fit]\nmodel = "power"\nrecords = "{rec}"\n')
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "fewer than 4 usable records" in capsys.readouterr().err


def test_config_error_exit(tmp_path, capsys):
    cfg = write(tmp_path, "bad.toml", "[wavespeed]\nkind = 'warp'\n")
    assert main(["run", "--config", cfg]) == 1
    assert "wavespeed" in capsys.readouterr().err
    cfg = write(tmp_path, "extra.toml", CONST.format(expect="false") + "bogus = 1\n")
    assert main(["classify", "--config", cfg, "--strict", "--out", str(tmp_path / "o")]) == 1
    assert main(["run", "--config", str(tmp_path / "missing.toml")]) == 1


def test_out_dir_precedence(tmp_path, monkeypatch):
    text = CONST.format(expect="false") .replace("epsilon = 0.1", f'epsilon = 0.1\nout = "{tmp_path / "cfg"}"')
    cfg = write(tmp_path, "c.toml", text)
    assert main(["classify", "--config", cfg]) == 0
    assert (tmp_path / "cfg" / "classify.kv").exists()
    monkeypatch.setenv("CHARWAVE_OUT", str(tmp_path / "env"))
    assert main(["classify", "--config", cfg]) == 0
    assert (tmp_path / "env" / "classify.kv").exists()
    assert main(["classify", "--config", cfg, "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "classify.kv").exists()


def test_classify(tmp_path):
    cfg = write(tmp_path, "c.toml", CONST.format(expect="false"))
    assert main(["classify", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    text = (tmp_path / "o" / "classify.kv").read_text()
    assert "blowup_i = -0.7071067811865" in text and "global_sign = false" in text


def test_trace(tmp_path):
    text = CONST.format(expect="false").replace("snapshot_cadence = 1.0", "snapshot_cadence = 0.125")
    cfg = write(tmp_path, "t.toml", text + "[trace]\nseeds = [0.5]\nfamily = 'minus'\n")
    out = tmp_path / "o"
    assert main(["trace", "--config", cfg, "--out", str(out)]) == 0
    rows = list(csv.reader(open(out / "trace_00_minus.csv")))
    assert rows[0] == ["t", "x", "invariant", "ux", "c_prime", "gamma", "F"]
    assert float(rows[-1][1]) == pytest.approx(0.5 - 2.0, abs=1e-12)


@pytest.fixture(scope="module")
def sweep_dirs(tmp_path_factory):
    base = tmp_path_factory.mktemp("sweep")
    cfg = write(base, "s.toml", SWEEP)
    outs = []
    for k, workers in enumerate(("1", "2")):
        out = base / f"o{k}"
        assert main(["sweep", "--config", cfg, "--out", str(out), "--workers", workers]) == 0
        outs.append(out)
    return base, outs


def _strip_runtime(path):
    return [r[:-1] for r in csv.reader(open(path))]


def test_sweep_deterministic(sweep_dirs):
    _, (a, b) = sweep_dirs
    assert _strip_runtime(a / "records.csv") == _strip_runtime(b / "records.csv")
    assert (a / "fit.kv").read_text() == (b / "fit.kv").read_text()


def test_fit_round_trip(sweep_dirs):
    base, (a, _) = sweep_dirs
    cfg = write(base, "f.toml", SWEEP + f'records = "{a / "records.csv"}"\n')
    out = base / "refit"
    assert main(["fit", "--config", cfg, "--out", str(out)]) == 0

    def slope(p):
        return float(next(l for l in p.read_text().splitlines() if l.startswith("slope")).split("=")[1])
    assert abs(slope(out / "fit.kv") - slope(a / "fit.kv")) <= 1e-12


def test_run_deterministic(tmp_path):
    cfg = write(tmp_path, "c.toml", CONST.format(expect="false"))
    for d in ("a", "b"):
        assert main(["run", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "snapshots.csv").read_bytes() == (tmp_path / "b" / "snapshots.csv").read_bytes()


@pytest.mark.skipif(shutil.which("charwave") is None, reason="console script not installed")
def test_console_script(tmp_path):
    cfg = write(tmp_path, "v.toml", P3)
    res = subprocess.run(["charwave", "validate-speed", "--config", cfg, "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "pass" in res.stdout
    res = subprocess.run(["charwave", "bogus", "--config", cfg], capture_output=True, text=True)
    assert res.returncode == 2

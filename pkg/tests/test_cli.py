import json
import math
import subprocess
import sys

import pytest

from solitonlab.cli import main

BASE_INI = """
[model]
kind = power
sigma = 1.0
c = 2.0

[potential]
amplitudes = -1.0
centers = 0.0
widths = 2.0

[grid]
dim = 1
n = 256
box_length = {L}

[run]
reference_energy = 1.0
epsilon = 0.01
dt = 0.001
t_final = {t_final}
extraction_cadence = 100
q_init = 3.0 0 0 0
perturb_amplitude = 0.5
seed = 4

[output]
dir = {out}
"""


@pytest.fixture()
def cfg_file(tmp_path):
    def make(**kw):
        params = {"L": 40 * math.pi, "t_final": 0.5, "out": tmp_path / "out"}
        params.update(kw)
        path = tmp_path / "run.ini"
        path.write_text(BASE_INI.format(**params))
        return path
    return make


def test_cli_groundstate(cfg_file, tmp_path):
    code = main(["--config", str(cfg_file()), "groundstate"])
    assert code == 0
    summary = json.loads((tmp_path / "out" / "groundstate.json").read_text())
    assert summary["mass"] == pytest.approx(1.0, rel=1e-8)
    assert summary["h2_ok"] is True
    assert (tmp_path / "out" / "profile.csv").exists()


def test_cli_masscurve(cfg_file, tmp_path):
    code = main(["--config", str(cfg_file()), "masscurve",
                 "--e-lo", "0.5", "--e-hi", "2.0", "--samples", "5"])
    assert code == 0
    data = json.loads((tmp_path / "out" / "masscurve.json").read_text())
    assert data["h2_ok"] is True


def test_cli_spectrum(cfg_file, tmp_path):
    code = main(["--config", str(cfg_file()), "spectrum", "--n", "1024"])
    assert code == 0
    data = json.loads((tmp_path / "out" / "spectrum.json").read_text())
    assert data["h2_ok"] and data["h3_ok"] and data["h5_ok"]
    assert (tmp_path / "out" / "eigenvalues.csv").exists()


def test_cli_simulate(cfg_file, tmp_path):
    code = main(["--config", str(cfg_file()), "simulate"])
    assert code == 0
    assert (tmp_path / "out" / "simulate_series.csv").exists()
    assert (tmp_path / "out" / "simulate_summary.json").exists()
    assert (tmp_path / "out" / "diagnostics.csv").exists()


def test_cli_simulate_snapshots(cfg_file, tmp_path):
    ini = cfg_file(t_final=0.2)
    text = ini.read_text().replace("dir =", "snapshot_cadence = 1\ndir =")
    ini.write_text(text)
    code = main(["--config", str(ini), "simulate"])
    assert code == 0
    snaps = sorted((tmp_path / "out").glob("snap_*.bin"))
    assert len(snaps) >= 2
    from solitonlab.field import load_field
    f = load_field(snaps[0])
    assert f.grid.n == (256,)
    assert (tmp_path / "out" / "final_abs2.csv").exists()


def test_cli_mech(cfg_file, tmp_path):
    code = main(["--config", str(cfg_file(t_final=50.0)), "mech"])
    assert code == 0
    assert (tmp_path / "out" / "orbit.csv").exists()
    assert (tmp_path / "out" / "veff.csv").exists()


def test_cli_compare(cfg_file, tmp_path):
    code = main(["--config", str(cfg_file()), "compare"])
    assert code == 0
    data = json.loads((tmp_path / "out" / "compare.json").read_text())
    assert "max_d_eps" in data and "critical_margin" in data
    assert (tmp_path / "out" / "compare.csv").exists()


def test_cli_sweep(cfg_file, tmp_path):
    code = main(["--config", str(cfg_file()), "sweep",
                 "--eps", "0.01,0.004,0.001", "--t0", "0.1"])
    assert code == 0
    data = json.loads((tmp_path / "out" / "sweep_summary.json").read_text())
    assert "slopes" in data and len(data["entries"]) == 3


def test_cli_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[grid]\nn = 100\n")
    assert main(["--config", str(bad), "groundstate"]) == 1


def test_cli_missing_config(tmp_path):
    assert main(["--config", str(tmp_path / "none.ini"), "groundstate"]) == 1


def test_cli_numerical_failure_exit_code(tmp_path):
    # saturable kind with energy >= c has no decaying ground state
    ini = tmp_path / "sat.ini"
    ini.write_text("""
[model]
kind = saturable
c = 0.5

[run]
reference_energy = 1.0

[output]
dir = {}
""".format(tmp_path / "out"))
    assert main(["--config", str(ini), "groundstate"]) == 2


def test_cli_entry_point_runs(cfg_file):
    proc = subprocess.run(
        [sys.executable, "-m", "solitonlab.cli", "--config", str(cfg_file()),
         "groundstate"], capture_output=True, text=True)
    assert proc.returncode == 0

import csv
import json
import subprocess
import sys

import pytest

from omsim.analytic import stokes_closed_form
from omsim.cli import main, parse_range
from omsim.model import SystemParams, ansatz_drive

FAST_TOML = """
[params]
gamma = 0.02
g0 = 0.005
K = 0.01

[drive]
frame_detuning = "1"
tones = [
  { cavity = "controller", amplitude = 1.0, detuning = "0" },
  { cavity = "controller", amplitude = 1.0, detuning = "1" },
  { cavity = "target", amplitude = 1.0, detuning = "1" },
]

[options]
coherence_time = 300.0
grid = "-1:3:401"
"""


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.toml"
    path.write_text(FAST_TOML)
    return path


def run_cli(args, capsys):
    code = main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


def test_presets_lists_catalog(capsys):
    code, out, _ = run_cli(["presets"], capsys)
    assert code == 0
    assert [line.split("\t")[0] for line in out.splitlines()][:2] == ["fig2_red", "fig2_green"]


def test_validate_ok_and_error(capsys):
    code, out, _ = run_cli(["validate", "--preset", "fig2_blue"], capsys)
    assert code == 0 and json.loads(out)[0]["diagnostics"] == []
    code, out, _ = run_cli(["validate", "--preset", "fig2_blue", "--set", "kappa=-1"], capsys)
    assert code == 1
    assert json.loads(out)[0]["diagnostics"][0]["level"] == "error"


def test_steady_matches_library(tmp_path, capsys):
    code, out, _ = run_cli(["steady", "--preset", "fig2_blue", "--out", tmp_path], capsys)
    assert code == 0
    data = json.loads((tmp_path / "steady_fig2_blue.json").read_text())
    ref = stokes_closed_form(SystemParams(), ansatz_drive())
    assert complex(*data["closed_form"]["a_t0"]) == ref.a_t0
    assert data["relative_difference_a_t0"] < 1e-10
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "steady"
    assert manifest["jobs"][0]["outputs"][0]["file"] == "steady_fig2_blue.json"


def test_set_override_is_recorded(tmp_path, capsys):
    code, _, _ = run_cli(["steady", "--preset", "fig2_blue", "--set", "K=0",
                          "--out", tmp_path], capsys)
    assert code == 0
    data = json.loads((tmp_path / "steady_fig2_blue.json").read_text())
    assert complex(*data["closed_form"]["a_t0"]) == 0
    job = json.loads((tmp_path / "manifest.json").read_text())["jobs"][0]
    assert job["overrides"] == {"K": "0"} and job["params"]["K"] == 0.0


def test_sweep_outputs(tmp_path, capsys):
    code, _, _ = run_cli(["sweep", "--gamma-range", "2e-4:6e-4:3", "--K-range", "0:6e-4:13",
                          "--out", tmp_path], capsys)
    assert code == 0
    with (tmp_path / "sweep_default_ridge.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    for r in rows:
        assert 0.4 < float(r["K_star"]) / float(r["gamma"]) < 0.6
    assert len((tmp_path / "sweep_default_grid.csv").read_text().splitlines()) == 1 + 3 * 13


def test_evolve_csv_is_deterministic(tmp_path, capsys):
    for sub in ("a", "b"):
        code, _, _ = run_cli(["evolve", "--preset", "fig2_blue", "--t-end", "50", "--dt", "0.5",
                              "--out", tmp_path / sub], capsys)
        assert code == 0
    a = (tmp_path / "a" / "evolve_fig2_blue.csv").read_bytes()
    assert a == (tmp_path / "b" / "evolve_fig2_blue.csv").read_bytes()
    assert len(a.decode().splitlines()) == 102


def test_spectrum_from_config(tmp_path, fast_config, capsys):
    code, out, _ = run_cli(["spectrum", "--config", fast_config, "--out", tmp_path], capsys)
    assert code == 0
    names = {p.split("/")[-1] for p in out.split()}
    assert names == {"spectrum_config.csv", "spectrum_config_cumulant.csv",
                     "peaks_config.json", "steady_state_config.json"}
    peaks = json.loads((tmp_path / "peaks_config.json").read_text())
    assert {p["delta_center"] for p in peaks} == {0.0, 1.0, 2.0}
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["options"]["coherence_time"] == 300.0
    assert manifest["jobs"][0]["residuals"]
    lines = (tmp_path / "spectrum_config.csv").read_text().splitlines()
    assert lines[0] == "delta,re_S,im_S,abs_S,normalized" and len(lines) == 402


def test_output_dir_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("OMSIM_OUTPUT_DIR", str(tmp_path / "env"))
    assert run_cli(["steady", "--preset", "fig2_red"], capsys)[0] == 0
    assert (tmp_path / "env" / "manifest.json").exists()


@pytest.mark.parametrize("args, code, kind", [
    (["steady", "--preset", "fig9"], 1, "KeyError"),
    (["steady", "--preset", "fig2_blue", "--set", "kappa=-0.2"], 1, "ValidationError"),
    (["steady", "--preset", "fig3_red"], 1, "ValueError"),
    (["steady"], 1, "ValueError"),
    (["steady", "--preset", "fig2_blue", "--set", "mass=2"], 1, "ValueError"),
    (["spectrum", "--preset", "fig2_blue", "--max-periods", "2"], 2, "ConvergenceError"),
])
def test_error_exit_codes(tmp_path, capsys, args, code, kind):
    got, _, err = run_cli(args + ["--out", tmp_path], capsys)
    assert got == code
    payload = json.loads(err)
    assert payload["error"] == kind and payload["exit_code"] == code


def test_unwritable_output_is_io_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run_cli(["steady", "--preset", "fig2_blue", "--out", blocker / "sub"], capsys)
    assert code == 3 and json.loads(err)["exit_code"] == 3


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "omsim", "presets"], capture_output=True,
                          text=True, check=False)
    assert proc.returncode == 0 and "fig3_yellow" in proc.stdout


def test_parse_range():
    assert list(parse_range("0:1:3")) == [0.0, 0.5, 1.0]
    with pytest.raises(ValueError):
        parse_range("0:1")

import json
import shutil
import subprocess

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optomech_lab import cat_engine as ce
from optomech_lab import cli
from optomech_lab.photon_subtract import WignerGrid


def write(path, text):
    path.write_text(text)
    return path


@pytest.fixture
def projected_cfg(tmp_path):
    return write(tmp_path / "proj.ini", "[run]\nexperiment = cat-projected\nseed = 3\n\n"
                 "[parameters]\nv_values = 1, 2\n")


def run(argv, capsys=None):
    code = cli.main([str(a) for a in argv])
    err = capsys.readouterr().err if capsys is not None else ""
    return code, err


# -- listing and registry --------------------------------------------------------


def test_list_names_every_experiment(capsys):
    assert cli.main(["list"]) == 0
    out = capsys.readouterr().out
    for name in ("steady2", "subtract", "decay", "spectra", "cooling", "steady3", "tripartite",
                 "dynamics", "control-short", "control-mono", "control-periodic", "spin-probe",
                 "cat-chsh", "cat-wigner", "cat-dissipative"):
        assert name in cli.REGISTRY
        assert name in out


def test_console_script_installed(tmp_path):
    exe = shutil.which("optomech-lab")
    if exe is None:
        pytest.skip("package not installed as a console script")
    res = subprocess.run([exe, "list"], capture_output=True, text=True, check=False)
    assert res.returncode == 0 and "cat-chsh" in res.stdout


# -- successful runs ------------------------------------------------------------------


def test_run_writes_summary_csv_and_manifest(tmp_path, projected_cfg):
    out = tmp_path / "o"
    assert cli.main(["run", str(projected_cfg), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    res = summary["results"]
    assert res["E_N"]["unit"] == "ebit" and res["V"]["value"] == [1.0, 2.0]
    direct = ce.projected_logneg(1, ce.CatParams(2.5, 2.0, 2.0))
    assert res["E_N"]["value"][1][1] == direct
    table = np.loadtxt(out / "projected.csv", delimiter=",", skiprows=1)
    assert table[1, 2] == direct
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["version"]
    assert manifest["parameters"]["upsilon_t"] == 2.5
    assert set(manifest["artifacts"]) == {"projected.csv", "summary.json"}
    assert manifest["wall_time_s"] >= 0


def test_identical_inputs_give_identical_summaries(tmp_path, projected_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", str(projected_cfg), "--out", str(a)]) == 0
    assert cli.main(["run", str(projected_cfg), "--out", str(b)]) == 0
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()


def test_manifest_round_trip_reproduces_artifacts(tmp_path):
    cfg = write(tmp_path / "w.ini", "[run]\nexperiment = cat-wigner\n[parameters]\n"
                "upsilon_t = 1.5\nv_thermal = 2\n")
    first, second = tmp_path / "first", tmp_path / "second"
    assert cli.main(["run", str(cfg), "--out", str(first)]) == 0
    assert cli.main(["run", str(first / "manifest.json"), "--out", str(second)]) == 0
    m1 = json.loads((first / "manifest.json").read_text())
    m2 = json.loads((second / "manifest.json").read_text())
    assert m1["artifacts"] == m2["artifacts"]
    assert m1["parameters"] == m2["parameters"]
    grid = WignerGrid.from_raster(second / "wigner.raster")
    assert grid.min == pytest.approx(m1 and json.loads(
        (first / "summary.json").read_text())["results"]["min"]["value"], rel=1e-15)


def test_seeded_optimizer_is_reproducible(tmp_path):
    cfg = write(tmp_path / "c.ini", "[run]\nexperiment = control-short\n[parameters]\n"
                "j_max = 1\nrestarts = 2\nmaxfev = 15\n")
    outs = [tmp_path / f"r{k}" for k in range(2)]
    for o in outs:
        assert cli.main(["run", str(cfg), "--seed", "5", "--out", str(o)]) == 0
    assert (outs[0] / "summary.json").read_bytes() == (outs[1] / "summary.json").read_bytes()
    assert json.loads((outs[0] / "manifest.json").read_text())["seed"] == 5


def test_set_overrides_config(tmp_path, projected_cfg):
    out = tmp_path / "o"
    assert cli.main(["run", str(projected_cfg), "--set", "parameters.v_values=3",
                     "--set", "parameters.upsilon_t=2.0", "--out", str(out)]) == 0
    res = json.loads((out / "summary.json").read_text())["results"]
    assert res["V"]["value"] == [3.0]
    assert res["E_N"]["value"][0][0] == ce.projected_logneg(0, ce.CatParams(2.0, 2.0, 3.0))


def test_output_dir_from_config(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = write(tmp_path / "x.ini", "[run]\nexperiment = cat-projected\noutput_dir = here\n"
                "[parameters]\nv_values = 1\np_values = 0\n")
    assert cli.main(["run", str(cfg)]) == 0
    assert (tmp_path / "here" / "manifest.json").is_file()


def test_csv_has_full_precision(tmp_path):
    path = tmp_path / "t.csv"
    x = np.array([1 / 3, np.pi * 1e-20, 2.0])
    cli.write_csv(path, ["x"], [x])
    back = np.loadtxt(path, skiprows=1)
    assert np.array_equal(back, x)


@settings(max_examples=60, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_csv_number_format_round_trips(x):
    assert float(cli._fmt(x)) == x


# -- error handling ---------------------------------------------------------------------


def test_missing_required_field(tmp_path, capsys):
    cfg = write(tmp_path / "m.ini", "[run]\nseed = 1\n")
    code, err = run(["run", cfg], capsys)
    assert code == cli.EXIT_CONFIG and "run.experiment" in err


def test_unknown_key_named_with_line(tmp_path, capsys):
    cfg = write(tmp_path / "u.ini", "[run]\nexperiment = cat-wigner\n\n[parameters]\n"
                "upsilon_t = 2\nvthermal = 3\n")
    code, err = run(["run", cfg], capsys)
    assert code == cli.EXIT_CONFIG
    assert "parameters.vthermal" in err and "u.ini:6" in err


def test_unknown_section_and_experiment(tmp_path, capsys):
    cfg = write(tmp_path / "s.ini", "[run]\nexperiment = cat-wigner\n[extras]\na = 1\n")
    code, err = run(["run", cfg], capsys)
    assert code == cli.EXIT_CONFIG and "[extras]" in err
    cfg = write(tmp_path / "e.ini", "[run]\nexperiment = warp-drive\n")
    code, err = run(["run", cfg], capsys)
    assert code == cli.EXIT_CONFIG and "warp-drive" in err and "e.ini:2" in err


def test_unparseable_value_and_syntax(tmp_path, capsys):
    cfg = write(tmp_path / "v.ini", "[run]\nexperiment = cat-wigner\n[parameters]\n"
                "upsilon_t = fast\n")
    code, err = run(["run", cfg], capsys)
    assert code == cli.EXIT_CONFIG and "parameters.upsilon_t" in err
    cfg = write(tmp_path / "x.ini", "no section header\n")
    code, err = run(["run", cfg], capsys)
    assert code == cli.EXIT_CONFIG and "line: 1" in err
    code, err = run(["run", tmp_path / "absent.ini"], capsys)
    assert code == cli.EXIT_CONFIG and "not found" in err
    code, err = run(["run", tmp_path / "v.ini", "--set", "upsilon_t=2"], capsys)
    assert code == cli.EXIT_CONFIG and "section.key=value" in err


def test_invalid_physical_value_is_config_error(tmp_path, capsys):
    cfg = write(tmp_path / "g.ini", "[run]\nexperiment = cat-dissipative\n[parameters]\n"
                "gamma_over_upsilon = -1\n")
    code, err = run(["run", cfg, "--out", tmp_path / "o"], capsys)
    assert code == cli.EXIT_CONFIG and "gamma_over_upsilon" in err


def test_unstable_model_exit_code(tmp_path, capsys):
    cfg = write(tmp_path / "b.ini", "[run]\nexperiment = steady2\n[parameters]\n"
                "detuning_ratio = -1\n")
    code, err = run(["run", cfg, "--out", tmp_path / "o"], capsys)
    assert code == cli.EXIT_MODEL and "unstable" in err


def test_accuracy_failure_exit_code(tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(ce, "QUAD_TOL", -1.0)
    cfg = write(tmp_path / "a.ini", "[run]\nexperiment = cat-chsh\n[parameters]\n"
                "v_values = 3\n")
    code, err = run(["run", cfg, "--out", tmp_path / "o"], capsys)
    assert code == cli.EXIT_ACCURACY and "accuracy error" in err


def test_manifest_errors(tmp_path, capsys):
    bad = write(tmp_path / "manifest.json", json.dumps({"experiment": "cat-wigner"}))
    code, err = run(["run", bad], capsys)
    assert code == cli.EXIT_CONFIG and "parameters" in err
    bad.write_text(json.dumps({"experiment": "cat-wigner", "seed": 0,
                               "parameters": {"warp": 1}}))
    code, err = run(["run", bad], capsys)
    assert code == cli.EXIT_CONFIG and "warp" in err


def test_coerce_types():
    assert cli.coerce("yes", False, "f") is True
    assert cli.coerce("7", 1, "f") == 7
    assert cli.coerce("1, 2.5;3", (1.0,), "f") == (1.0, 2.5, 3.0)
    assert cli.coerce("", (), "f") == ()
    with pytest.raises(cli.ConfigError, match="f: cannot parse"):
        cli.coerce("maybe", True, "f")

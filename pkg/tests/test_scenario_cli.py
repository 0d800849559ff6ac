import os

import numpy as np
import pytest

from biphoton_lab import scenario
from biphoton_lab.cli import main
from biphoton_lab.correlate import CorrelationImage
from biphoton_lab.fileio import read_matrix_csv, read_pgm
from biphoton_lab.scenario import (PRESETS, ConfigError, NumericError, list_presets, parse_config, preset_text,
                                   run_config, write_image)
from biphoton_lab.studies import StudyResult

SMALL_TM = """
[scenario]
experiment = sm5-tm   # inline comments are allowed
seed = 0
[grid]
n = 16
[slm]
macro_n = 8
"""

SMALL_FIG2 = """
[scenario]
experiment = fig2
seed = 1
[grid]
n = 16
[slm]
macro_n = 8
[optimization]
max_steps = 40
"""


def test_empty_config_lists_required_sections():
    with pytest.raises(ConfigError, match=r"\[scenario\].*\[grid\]"):
        parse_config("")


def test_unknown_key_and_section_named():
    with pytest.raises(ConfigError, match=r"\[grid\] unknown key 'pitch'"):
        parse_config("[scenario]\nexperiment = fig2\n[grid]\npitch = 3\n")
    with pytest.raises(ConfigError, match=r"unknown section \[lasers\]"):
        parse_config("[scenario]\nexperiment = fig2\n[grid]\n[lasers]\nx = 1\n")


def test_duplicate_and_bad_values():
    with pytest.raises(ConfigError):
        parse_config("[scenario]\nexperiment = fig2\n[grid]\nn = 4\nn = 5\n")
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config("[scenario]\nexperiment = fig2\n[grid]\nn = four\n")
    with pytest.raises(ConfigError, match="experiment"):
        parse_config("[scenario]\nexperiment = fig9\n[grid]\n")
    with pytest.raises(ConfigError, match="required"):
        parse_config("[scenario]\nseed = 1\n[grid]\n")


def test_defaults_and_units():
    cfg = parse_config(SMALL_TM)
    assert cfg["grid"]["n"] == 16 and cfg["grid"]["pitch_um"] == 50.0
    assert cfg["optics"]["f1_mm"] == 35.0 and cfg["spdc"]["sigma_r_um"] == 13.0


def test_presets_listed_in_stable_order():
    names = [n for n, _ in list_presets()]
    assert names == list(PRESETS)
    assert "fig3-opt" in names and "sm12-macropixels" in names
    assert all(desc for _, desc in list_presets())
    assert parse_config(preset_text("sm12-macropixels"))["optimization"]["sizes"] == "8,16,32"
    assert parse_config(preset_text("fig3-opt")).experiment == "fig3-opt"


def test_unknown_preset():
    with pytest.raises(ConfigError):
        preset_text("fig99")


def test_run_writes_outputs_and_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_config(parse_config(SMALL_TM), str(a))
    run_config(parse_config(SMALL_TM), str(b))
    files = sorted(os.listdir(a))
    assert "manifest.txt" in files and "measured_tm.biph" in files
    assert "measured_amplitude.pgm" in files and "mask_identity_from_measured.pgm" in files
    for f in files:
        if f.endswith(".csv"):
            assert (a / f).read_bytes() == (b / f).read_bytes()
    manifest = (a / "manifest.txt").read_text()
    assert "seed = 0" in manifest
    for f in files:
        assert f in manifest


def test_fig2_images(tmp_path):
    run_config(parse_config(SMALL_FIG2), str(tmp_path))
    for name in ("no_medium", "medium", "tailored"):
        assert (tmp_path / f"object_gamma_plus_{name}.pgm").exists()
        assert (tmp_path / f"object_intensity_{name}.pgm").exists()
    assert (tmp_path / "trace.csv").exists()
    assert (tmp_path / "mask_optimized.biph").exists()


def test_write_image_clamp_policy(tmp_path):
    img = CorrelationImage(np.array([[-2.0, 1.0], [4.0, 0.5]]))
    write_image(img, str(tmp_path / "x.pgm"), "pgm16")
    write_image(img, str(tmp_path / "x.csv"), "csv")
    pgm, _ = read_pgm(tmp_path / "x.pgm")
    csv = read_matrix_csv(tmp_path / "x.csv")
    assert pgm.min() == 0
    assert csv.min() == -2.0  # negatives survive in the csv
    assert np.array_equal(csv, img.centered())
    with pytest.raises(NumericError):
        write_image(np.array([[np.nan]]), str(tmp_path / "n.csv"), "csv")


def test_cli_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert [l.split()[0] for l in out] == list(PRESETS)


def test_cli_exit_codes(tmp_path, monkeypatch):
    bad = tmp_path / "bad.cfg"
    bad.write_text("")
    assert main(["run", str(bad)]) == 2
    assert main(["run", str(tmp_path / "missing.cfg")]) == 4
    assert main(["bogus"]) == 2
    cfg = tmp_path / "tm.cfg"
    cfg.write_text(SMALL_TM)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", str(cfg), "--out", str(blocker / "sub")]) == 4
    assert main(["run", str(cfg), "--out", str(tmp_path / "ok"), "--seed", "3"]) == 0
    assert "seed = 3" in (tmp_path / "ok" / "manifest.txt").read_text()

    def nan_result(cfg):
        return StudyResult("x", images={"bad": np.full((2, 2), np.nan)})
    monkeypatch.setattr(scenario, "run_experiment", nan_result)
    assert main(["run", str(cfg), "--out", str(tmp_path / "nan")]) == 3


def test_cli_preset_full_grid(tmp_path, monkeypatch):
    seen = {}

    def fake(cfg):
        seen["n"] = cfg["grid"]["n"]
        return StudyResult("x", images={"ok": np.ones((2, 2))})
    monkeypatch.setattr(scenario, "run_experiment", fake)
    assert main(["preset", "fig2", "--full", "--out", str(tmp_path)]) == 0
    assert seen["n"] == 51
    assert main(["preset", "fig2", "--out", str(tmp_path)]) == 0
    assert seen["n"] == 32

import json

import numpy as np
import pytest
import yaml

from freqstab.cli import main
from freqstab.io import read_results, read_trace_csv
from freqstab.synth import reference_config_text

SMALL = {
    "base": {"S_b": 100.0},
    "identification": {"n_starts": 2, "rng_seed": 0},
    "areas": [
        {"id": "N", "H": 5.0, "D": 1.5, "D_bounds": [0.75, 2.25],
         "units": [{"name": "H1", "type": "hydro", "rating": 60.0},
                   {"name": "S1", "type": "thermal", "rating": 40.0,
                    "bounds": {"T_g1": [0.2, 0.27], "T_ch": [0.27, 0.4]}}]},
        {"id": "S", "H": 4.0, "D": 1.0, "D_bounds": [0.5, 1.5],
         "units": [{"name": "H2", "type": "hydro", "rating": 50.0, "params": {"T_w": 1.4}}]},
    ],
    "ties": [{"from": "N", "to": "S", "T_sync": 3.0}],
    "scenarios": [
        {"id": "step", "duration": 15.0, "dt": 0.01, "events": [{"time": 1.0, "channel": "N.P_L", "value": 0.1}]},
        {"id": "quiet", "duration": 2.0, "dt": 0.01},
    ],
}


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(yaml.safe_dump(SMALL))
    return p


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv("FREQSTAB_SEED", raising=False)


def run(*argv):
    return main([str(a) for a in argv])


def test_unknown_subcommand(capsys):
    assert run("frobnicate") == 1
    assert "usage" in capsys.readouterr().err


def test_missing_argument_prints_subcommand_usage(capsys):
    assert run("simulate") == 1
    assert "usage: freqstab simulate" in capsys.readouterr().err


def test_simulate_reference_channels(tmp_path, capsys):
    ref = tmp_path / "ref.yaml"
    ref.write_text(reference_config_text())
    assert run("simulate", ref, "a", "--out", tmp_path) == 0
    tr = read_trace_csv(tmp_path / "a.csv")
    for a in ("A1", "A2", "A3"):
        assert f"{a}.omega" in tr
    assert "A1-A2.P_tie" in tr and "G10.P" in tr


def test_unit_pipeline_reports_high_r2(cfg, tmp_path, capsys):
    assert run("gen-synth", cfg, "step", "--out", tmp_path) == 0
    measured = tmp_path / "measured.csv"
    assert run("identify-units", cfg, measured, "--out", tmp_path / "units") == 0
    capsys.readouterr()
    assert run("metrics", tmp_path / "units" / "model.csv", measured) == 0
    m = json.loads(capsys.readouterr().out)
    assert set(m) == {"H1.P", "S1.P", "H2.P"}
    assert all(v["r2"] >= 0.9999 for v in m.values())


def test_grid_step_and_bounds(cfg, tmp_path, capsys):
    run("gen-synth", cfg, "step", "--out", tmp_path)
    assert run("identify-grid", cfg, tmp_path / "measured.csv", "--out", tmp_path / "grid") == 0
    rows = read_results(tmp_path / "grid" / "results.json")["grid"]["areas"]
    assert [r["area"] for r in rows] == ["N", "S"]
    assert rows[0]["H"] == pytest.approx(5.0, rel=1e-3) and rows[1]["D"] == pytest.approx(1.0, rel=1e-2)
    capsys.readouterr()
    assert run("bounds", cfg) == 0
    b = json.loads(capsys.readouterr().out)
    assert b[0] == {"area": "N", "H": [4.0, 6.0], "D": [0.75, 2.25]}


def test_zero_excitation_is_solver_failure(cfg, tmp_path, capsys):
    run("gen-synth", cfg, "quiet", "--out", tmp_path)
    assert run("identify-units", cfg, tmp_path / "measured.csv", "--out", tmp_path / "u") == 2
    assert "identification failed" in capsys.readouterr().err


def test_invalid_config_exit_one(tmp_path, capsys):
    bad = dict(SMALL, ties=[{"from": "N", "to": "X", "T_sync": 1.0}])
    p = tmp_path / "bad.yaml"
    p.write_text(yaml.safe_dump(bad))
    assert run("bounds", p) == 1
    assert "X" in capsys.readouterr().err


def test_unknown_scenario(cfg, tmp_path, capsys):
    assert run("simulate", cfg, "nope", "--out", tmp_path) == 1
    assert "nope" in capsys.readouterr().err


def test_seed_from_environment(cfg, tmp_path, monkeypatch):
    run("gen-synth", cfg, "step", "--out", tmp_path)
    m = tmp_path / "measured.csv"

    def starts(out):
        return [s["x0"] for s in read_results(out / "results.json")["units"]["H1"]["starts"]]

    run("identify-units", cfg, m, "--out", tmp_path / "cfgseed")
    monkeypatch.setenv("FREQSTAB_SEED", "11")
    run("identify-units", cfg, m, "--out", tmp_path / "env")
    run("identify-units", cfg, m, "--out", tmp_path / "flag", "--seed", "0")
    assert starts(tmp_path / "env") != starts(tmp_path / "cfgseed")
    assert starts(tmp_path / "flag") == starts(tmp_path / "cfgseed")


def test_bad_seed_environment(cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("FREQSTAB_SEED", "abc")
    assert run("gen-synth", cfg, "step", "--out", tmp_path) == 1


def test_noise_option(cfg, tmp_path):
    run("gen-synth", cfg, "step", "--out", tmp_path / "clean")
    run("gen-synth", cfg, "step", "--out", tmp_path / "noisy", "--noise", "1e-4", "--seed", "2")
    a, b = read_trace_csv(tmp_path / "clean" / "measured.csv"), read_trace_csv(tmp_path / "noisy" / "measured.csv")
    assert np.array_equal(a["N.P_L"], b["N.P_L"])
    assert not np.array_equal(a["N.omega"], b["N.omega"])

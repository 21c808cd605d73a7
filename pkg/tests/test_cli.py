import json
import subprocess
import sys

import pandas as pd
import pytest

from localvar.calibrate import CACHE_ENV
from localvar.cli import main
from localvar.config import RunConfig, parse_grid
from localvar.exceptions import ConfigError
from localvar.scenarios import THETA_1

from conftest import epu_like_frame

FAST = ["--n-calib", "300"]


@pytest.fixture(autouse=True)
def no_env_cache(monkeypatch):
    monkeypatch.delenv(CACHE_ENV, raising=False)


@pytest.fixture
def two_csv(tmp_path):
    path = tmp_path / "two.csv"
    epu_like_frame(1)[["date", "US", "DE"]].to_csv(path, index=False)
    return path


@pytest.fixture
def theta_json(tmp_path):
    path = tmp_path / "theta.json"
    THETA_1.to_json(path)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, (json.loads(out.out) if code == 0 else None), out.err


# --- configuration --------------------------------------------------------


def test_config_round_trip():
    config = RunConfig(input="x.csv", columns="US,DE", rho=0.088, grid="literature",
                       baselines="18,57", joint=True, n_jobs=2)
    assert RunConfig.from_text(config.to_text()) == config
    assert config.grid == (18, 23, 29, 36, 45, 57, 72)
    assert RunConfig().baseline_windows == (12, 37)


def test_config_errors():
    with pytest.raises(ConfigError):
        RunConfig.from_text("colour = red\n")
    with pytest.raises(ConfigError):
        RunConfig.from_text("rho\n")
    for bad in ({"rho": 0}, {"rho": "best"}, {"r": -1}, {"horizon": 0}, {"n_calib": 10}):
        with pytest.raises(ConfigError):
            RunConfig(**bad)
    with pytest.raises(ConfigError):
        parse_grid("12,15,a")


def test_config_file_and_flags_merge(tmp_path, capsys, two_csv):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# test\ninput = {two_csv}\nn-calib = 300\nrho = 0.3\nout = {tmp_path / 'a'}\n")
    code, summary, _ = run(capsys, "run", "--config", cfg, "--rho", "0.5", "--out", tmp_path / "b")
    assert code == 0
    manifest = json.loads((tmp_path / "b" / "run_manifest.json").read_text())
    assert manifest["config"]["rho"] == 0.5 and manifest["config"]["n_calib"] == 300


# --- subcommands ----------------------------------------------------------


def test_calibrate_from_theta(tmp_path, capsys, theta_json):
    code, summary, _ = run(capsys, "calibrate", "--theta", theta_json, "--rho", "0.088",
                           *FAST, "--out", tmp_path)
    assert code == 0
    doc = json.loads((tmp_path / "critical_values.json").read_text())
    assert doc["rho"] == 0.088 and sorted(doc["zeta"]) == [str(k) for k in range(2, 8)]


def test_detect_requires_calibration(tmp_path, capsys, two_csv):
    code, _, err = run(capsys, "detect", "--input", two_csv, "--rho", "0.2", *FAST,
                       "--out", tmp_path)
    assert code == 2 and "calibrate" in err
    code, _, err = run(capsys, "detect", "--input", two_csv, "--rho", "0.2", *FAST,
                       "--calib-cache", tmp_path / "cache", "--out", tmp_path)
    assert code == 2 and "calibrate" in err


def test_calibrate_then_detect_then_crisis_and_spillover(tmp_path, capsys, two_csv):
    cache = tmp_path / "cache"
    common = ["--input", two_csv, "--rho", "0.2", *FAST, "--calib-cache", cache]
    assert run(capsys, "calibrate", *common, "--out", tmp_path / "c")[0] == 0
    code, summary, _ = run(capsys, "detect", *common, "--out", tmp_path / "d")
    assert code == 0
    intervals = pd.read_csv(tmp_path / "d" / "intervals.csv")
    assert intervals["date"].iloc[0] == "2006-11" and intervals["date"].iloc[-1] == "2021-01"
    assert set(intervals["pair"]) == {"US-DE"}

    code, summary, _ = run(capsys, "crisis", "--intervals", tmp_path / "d" / "intervals.csv",
                           "--out", tmp_path / "e")
    assert code == 0 and summary["K_max"] == 6
    crisis = pd.read_csv(tmp_path / "e" / "crisis.csv")
    assert crisis["CI_US-DE"].between(0, 1).all()

    code, summary, _ = run(capsys, "spillover", "--input", two_csv, "--intervals",
                           tmp_path / "d" / "intervals.csv", "--out", tmp_path / "f")
    assert code == 0
    code, summary, _ = run(capsys, "spillover", "--input", two_csv, "--window", 37,
                           "--out", tmp_path / "g")
    assert code == 0
    spill = pd.read_csv(tmp_path / "g" / "spillover.csv")
    assert list(spill.columns) == ["date", "pair", "total", "flag"]
    code, _, _ = run(capsys, "spillover", "--input", two_csv, "--out", tmp_path / "h")
    assert code == 2


def test_rho_select(tmp_path, capsys, two_csv):
    code, summary, _ = run(capsys, "rho-select", "--input", two_csv, *FAST, "--out", tmp_path)
    assert code == 0
    table = pd.read_csv(tmp_path / "rho_US-DE.csv")
    assert len(table) == 100 and summary["pairs"]["US-DE"]["rho"] in set(table["rho"])


def test_simulate(tmp_path, capsys):
    code, summary, _ = run(capsys, "simulate", "--scenario", 1, "--reps", 4, *FAST,
                           "--rho", "0.088", "--out", tmp_path)
    assert code == 0
    assert "scenario1_d2_intervals.csv" in summary["files"]
    frame = pd.read_csv(tmp_path / "scenario1_d2_intervals.csv")
    assert "median_rho_0.088" in frame.columns and len(frame) == 100


# --- full pipeline --------------------------------------------------------


def test_two_series_gives_one_pair_and_three_spillover_files(tmp_path, capsys, two_csv):
    code, summary, _ = run(capsys, "run", "--input", two_csv, "--rho", "0.2", *FAST,
                           "--out", tmp_path)
    assert code == 0
    spill = sorted(p.name for p in tmp_path.glob("spillover_*.csv"))
    assert spill == ["spillover_lhi.csv", "spillover_rw_12.csv", "spillover_rw_37.csv"]
    assert list(summary["pairs"]) == ["US-DE"]
    assert summary["first_tau"] == "2006-11" and summary["last_tau"] == "2021-01"


def test_literature_grid_starts_2009(tmp_path, capsys, two_csv):
    code, summary, _ = run(capsys, "run", "--input", two_csv, "--grid", "literature",
                           "--rho", "0.2", *FAST, "--out", tmp_path)
    assert code == 0 and summary["first_tau"] == "2009-01"


def test_five_series_pipeline_is_byte_identical(tmp_path, capsys, epu_csv):
    args = ["--input", epu_csv, "--rho", "optimal", *FAST, "--seed", 3]
    assert run(capsys, "run", *args, "--out", tmp_path / "a")[0] == 0
    assert run(capsys, "run", *args, "--out", tmp_path / "b", "--n-jobs", 2)[0] == 0
    for name in ("intervals.csv", "crisis.csv", "spillover_lhi.csv", "spillover_rw_12.csv",
                 "spillover_rw_37.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "run_manifest.json").read_text())
    assert len(manifest["pairs"]) == 10
    assert manifest["discarded_initial_rows"] == 46
    assert set(manifest["flagged_spillover_cells"]) == {"lhi", "rw_12", "rw_37"}


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "gap.csv"
    bad.write_text("date,US,DE\n2003-01,1,2\n2003-03,1,2\n")
    assert run(capsys, "run", "--input", bad, "--out", tmp_path)[0] == 3
    assert run(capsys, "run", "--input", tmp_path / "missing.csv", "--out", tmp_path)[0] == 3
    assert run(capsys, "run", "--input", bad, "--rho", "2", "--out", tmp_path)[0] == 2
    unstable = tmp_path / "unit.json"
    unstable.write_text(json.dumps({"d": 2, "p": 1, "intercept": [0, 0],
                                    "lags": [[[1, 0], [0, 1]]], "sigma": [[1, 0], [0, 1]]}))
    assert run(capsys, "calibrate", "--theta", unstable, "--rho", "0.1", *FAST,
               "--out", tmp_path)[0] == 4


def test_console_script_entry_point(tmp_path, theta_json):
    proc = subprocess.run([sys.executable, "-m", "localvar.cli", "calibrate", "--theta",
                           str(theta_json), "--rho", "0.5", "--n-calib", "200", "--out",
                           str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["status"] == "ok"

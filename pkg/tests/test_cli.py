import csv
import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from smpkit.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, EXIT_RUNTIME, main
from smpkit.config import config_from_dict, load_config
from smpkit.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _small(name, tmp_path, **params):
    raw = json.loads((CONFIGS / name).read_text())
    raw["params"].update(params)
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return p


def _snapshot(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).iterdir())}


def test_simulate_outputs(tmp_path):
    cfg = _small("simulate_two_state.json", tmp_path, n_paths=50)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == EXIT_OK
    files = _snapshot(tmp_path / "o")
    assert set(files) == {"resolved_config.json", "summary.json", "trajectories.csv"}
    summary = json.loads(files["summary.json"])
    assert summary["n_paths"] == 50 and sum(summary["final_state_counts"].values()) == 50


def test_solve_outputs(tmp_path):
    cfg = _small("solve_duration.json", tmp_path, dt=0.01)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == EXIT_OK
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert [r["t"] for r in summary["rows"]] == [0.5, 1.0, 2.0]
    for r in summary["rows"]:
        assert abs(r["total_mass"] - 1) < 1e-9 and r["support_defect"] == 0.0
        assert (tmp_path / "o" / r["file"]).exists()


def test_compare_two_state_agrees(tmp_path):
    out = tmp_path / "o"
    assert main(["--config", str(CONFIGS / "compare_two_state.json"), "--out", str(out), "--quiet"]) == EXIT_OK
    with open(out / "compare.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * (1 + 5)
    assert all(r["agree"] == "true" for r in rows)


def test_compare_disagreement_exit(tmp_path):
    cfg = _small("compare_two_state.json", tmp_path, n_paths=2000, k_se=0.0, abs_tol=0.0, dt=0.05, d_grid=[])
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == EXIT_FAIL


def test_verify_zero_model_passes(tmp_path):
    out = tmp_path / "o"
    assert main(["--config", str(CONFIGS / "verify_zero.json"), "--out", str(out), "--quiet"]) == EXIT_OK
    reports = json.loads((out / "checks.json").read_text())
    assert reports and all(r["passed"] for r in reports)


def test_bad_config_writes_nothing(tmp_path):
    out = tmp_path / "o"
    assert main(["--config", str(CONFIGS / "bad_negative_rate.json"), "--out", str(out), "--quiet"]) == EXIT_CONFIG
    assert not out.exists()
    assert main(["--config", str(tmp_path / "missing.json"), "--out", str(out), "--quiet"]) == EXIT_CONFIG
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert main(["--config", str(broken), "--out", str(out), "--quiet"]) == EXIT_CONFIG
    assert not out.exists()


@pytest.mark.parametrize("change", [
    {"kind": "plot"},
    {"schema_version": 2},
    {"seed": -1},
    {"params": {"i0": "z", "horizon": 1.0, "n_paths": 5}},
    {"params": {"i0": "0", "horizon": 1.0, "n_paths": 0}},
    {"params": {"i0": "0", "horizon": 1.0, "n_paths": 5, "colour": 1}},
])
def test_config_validation(change):
    raw = json.loads((CONFIGS / "simulate_two_state.json").read_text())
    raw.update(change)
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_solve_grid_must_divide(tmp_path):
    raw = json.loads((CONFIGS / "solve_duration.json").read_text())
    raw["params"]["dt"] = 0.3
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_runtime_error_exit(tmp_path):
    raw = json.loads((CONFIGS / "solve_duration.json").read_text())
    raw["params"].update(dt=0.5, t_end=2.0, output_times=None)
    raw["model"]["intensities"][1]["field"]["rate"] = 3.0
    p = tmp_path / "fast.json"
    p.write_text(json.dumps(raw))
    assert main(["--config", str(p), "--out", str(tmp_path / "o"), "--quiet"]) == EXIT_RUNTIME


def test_resolved_config_round_trip(tmp_path):
    out = tmp_path / "o"
    for name in ("verify_duration.json", "solve_duration.json", "compare_two_state.json"):
        cfg = load_config(CONFIGS / name, out=str(out))
        echo = tmp_path / ("echo_" + name)
        echo.write_text(cfg.to_json())
        again = load_config(echo)
        assert again.to_dict() == cfg.to_dict()
        assert again.to_json() == cfg.to_json()


def test_seed_override(tmp_path):
    cfg = _small("simulate_two_state.json", tmp_path, n_paths=30)
    main(["--config", str(cfg), "--out", str(tmp_path / "a"), "--quiet"])
    main(["--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "5", "--quiet"])
    assert (tmp_path / "a" / "trajectories.csv").read_bytes() != (tmp_path / "b" / "trajectories.csv").read_bytes()
    assert json.loads((tmp_path / "b" / "resolved_config.json").read_text())["seed"] == 5


def test_repeated_runs_byte_identical(tmp_path):
    cfg = _small("compare_two_state.json", tmp_path, n_paths=3000, dt=0.01)
    out = tmp_path / "o"
    main(["--config", str(cfg), "--out", str(out), "--quiet"])
    first = _snapshot(out)
    shutil.rmtree(out)
    main(["--config", str(cfg), "--out", str(out), "--quiet"])
    assert _snapshot(out) == first


def test_module_entry_point(tmp_path):
    cfg = _small("simulate_two_state.json", tmp_path, n_paths=5)
    res = subprocess.run([sys.executable, "-m", "smpkit", "--config", str(cfg), "--out", str(tmp_path / "o")],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "simulated 5 paths" in res.stderr and res.stdout == ""

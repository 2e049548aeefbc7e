import json
import subprocess
import sys

import pytest

from latres.cli import ConfigError, load_config, main

EIGEN = {
    "scenario": "sweep-eigenvalues",
    "potential": {"label": "gaussian", "params": {"c": -3.0}},
    "distortion": {"theta": [0.0, 0.0], "E0": 4.0},
    "ladder": {"h": [0.4, 0.2, 0.1], "box": 25.6},
    "reference": {"count": 1, "box": 20.0, "M": 4000},
}


def write(tmp_path, cfg, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def test_validate_all_suites_pass(tmp_path):
    cfg = write(tmp_path, {"scenario": "validate"})
    out = tmp_path / "out"
    assert main(["--config", str(cfg), "--out-dir", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["suites"] and all(s["status"] == "pass" for s in report["suites"])
    assert set(report) >= {"config", "suites", "tracks", "provenance"}
    assert "seed" in report["provenance"] and "versions" in report["provenance"]


def test_unknown_key_is_config_error(tmp_path):
    cfg = write(tmp_path, {**EIGEN, "ladder": {"h": [0.4, 0.2, 0.1], "box": 25.6, "spacing": 3}})
    out = tmp_path / "out"
    assert main(["--config", str(cfg), "--out-dir", str(out)]) == 1
    assert not out.exists() or not any(out.iterdir())
    with pytest.raises(ConfigError):
        load_config(cfg)


def test_unknown_suite_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, {"scenario": "validate", "suites": ["no_such_suite"]}))


def test_single_rung_sweep_rejected(tmp_path):
    cfg = write(tmp_path, {**EIGEN, "ladder": {"h": [0.2], "box": 25.6}})
    out = tmp_path / "out"
    assert main(["--config", str(cfg), "--out-dir", str(out)]) == 1
    assert not out.exists() or not any(out.iterdir())


def test_inadmissible_distortion_exit_code(tmp_path):
    cfg = write(tmp_path, {**EIGEN, "distortion": {"theta": [0.0, -3.0], "E0": 16.0}})
    out = tmp_path / "out"
    assert main(["--config", str(cfg), "--out-dir", str(out)]) == 1
    assert not out.exists() or not any(out.iterdir())


def test_identical_runs_byte_identical(tmp_path):
    cfg = write(tmp_path, EIGEN)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--config", str(cfg), "--out-dir", str(a)]) == 0
    assert main(["--config", str(cfg), "--out-dir", str(b), "--jobs", "3"]) == 0
    for name in ("report.json", "tracks.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    header = (a / "tracks.csv").read_text().splitlines()[0]
    assert header == "track_id,h,N,re_z,im_z,abs_err,multiplicity"
    report = json.loads((a / "report.json").read_text())
    assert all(s["status"] == "pass" for s in report["suites"])


def test_oracle_scenario_uses_cache(tmp_path):
    cfg = write(tmp_path, {
        "scenario": "oracle",
        "potential": {"label": "gaussian", "params": {"c": -3.0}},
        "oracle": {"method": "bound_states", "box": 20.0, "M": 4000},
        "cache_dir": str(tmp_path / "cache"),
    })
    for out in ("o1", "o2"):
        assert main(["--config", str(cfg), "--out-dir", str(tmp_path / out)]) == 0
    assert any((tmp_path / "cache").iterdir())
    assert (tmp_path / "o1" / "report.json").read_bytes() == (tmp_path / "o2" / "report.json").read_bytes()


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, {"scenario": "validate", "suites": ["adjoint_symmetry"]})
    proc = subprocess.run(
        [sys.executable, "-m", "latres.cli", "--config", str(cfg), "--out-dir", str(tmp_path / "o")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr

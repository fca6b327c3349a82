#!/usr/bin/env python3
"""
End-to-end tests of the command line runner: exit codes and artifacts
"""

import json
import os
import sys

import pytest

# Add the parent directory to the path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import AppConstants
from main import build_parser, main
from utils.parallel import set_thread_count

SMALL = ["--set", "n_r=16", "--set", "n_z=16", "--set", "rule_order=8",
         "--set", "kappa_schedule=[4, 2, 1]", "--threads", "1", "--log-level", "WARNING"]


@pytest.fixture(autouse=True)
def reset_threads():
    yield
    set_thread_count(None)


def load(directory, name):
    with open(os.path.join(str(directory), name), "r", encoding="utf-8") as f:
        return json.load(f)


def test_parser_defaults():
    args = build_parser().parse_args(["kappa"])
    assert args.mode == "kappa"
    assert args.config is None and args.set is None and args.threads is None


def test_invalid_mode_exits_with_config_status(tmp_path):
    status = main(["explode", "--output-dir", str(tmp_path)])
    assert status == 2
    error = load(tmp_path, AppConstants.ERROR_FILE)
    assert error["error"] == "ConfigError"
    manifest = load(tmp_path, AppConstants.MANIFEST_FILE)
    assert manifest["exit_status"] == 2
    assert manifest["config"] is None
    assert manifest["mode"] == "explode"


def test_unknown_override_key(tmp_path):
    assert main(["kappa", "--set", "colour=red", "--output-dir", str(tmp_path)]) == 2
    assert load(tmp_path, AppConstants.ERROR_FILE)["details"]["key"] == "colour"


def test_missing_config_file(tmp_path):
    missing = str(tmp_path / "nope.json")
    assert main(["kappa", "--config", missing, "--output-dir", str(tmp_path)]) == 2


def test_kappa_mode_writes_report_and_manifest(tmp_path):
    status = main(["kappa", "--output-dir", str(tmp_path)] + SMALL)
    assert status == 0
    report = load(tmp_path, AppConstants.REPORT_JSON)
    assert report["value"] > 0
    manifest = load(tmp_path, AppConstants.MANIFEST_FILE)
    assert manifest["exit_status"] == 0
    assert manifest["mode"] == "kappa"
    assert manifest["threads"] == 1
    assert len(manifest["config_hash"]) == 64
    assert set(manifest["versions"]) == {"python", "numpy", "scipy"}
    assert manifest["config"]["n_r"] == 16
    assert manifest["summary"]["kappa"] == report["value"]


def test_config_hash_is_stable(tmp_path):
    main(["kappa", "--output-dir", str(tmp_path / "a")] + SMALL)
    main(["kappa", "--output-dir", str(tmp_path / "a")] + SMALL)
    first = load(tmp_path / "a", AppConstants.MANIFEST_FILE)["config_hash"]
    main(["kappa", "--output-dir", str(tmp_path / "a")] + SMALL + ["--set", "seed=1"])
    assert load(tmp_path / "a", AppConstants.MANIFEST_FILE)["config_hash"] != first


def test_config_file_is_read(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"n_r": 16, "n_z": 16, "rule_order": 8, "kappa_schedule": [2, 1]}))
    status = main(["kappa", "--config", str(path), "--output-dir", str(tmp_path / "out"),
                   "--threads", "1"])
    assert status == 0
    assert load(tmp_path / "out", AppConstants.MANIFEST_FILE)["config"]["kappa_schedule"] == [2, 1]


def test_simulate_exit_status_follows_report(tmp_path):
    status = main(["simulate", "--output-dir", str(tmp_path), "--set", "max_steps=5",
                   "--set", "t_max=1e6"] + SMALL)
    report = load(tmp_path, AppConstants.REPORT_JSON)
    assert status == (0 if report["passed"] else 1)
    assert os.path.exists(tmp_path / AppConstants.STEPS_CSV)
    assert load(tmp_path, AppConstants.MANIFEST_FILE)["summary"]["steps"] == 5


def test_positive_amplitude_rejected_for_simulate(tmp_path):
    assert main(["simulate", "--output-dir", str(tmp_path), "--set", "amplitude=1.0"] + SMALL) == 2


def test_verify_mode_report(tmp_path):
    status = main(["verify", "--output-dir", str(tmp_path), "--set", "euler_n_r=24",
                   "--set", "euler_n_z=16"] + SMALL)
    report = load(tmp_path, AppConstants.REPORT_JSON)
    assert set(report["checks"]) == {"geometry", "dQdt_identity", "riccati_lower_bound",
                                     "mirror_symmetry", "step_structure", "euler_factor"}
    assert report["checks"]["geometry"]["passed"]
    assert report["checks"]["step_structure"]["passed"]
    sensitivity = report["delta_sensitivity"]
    assert sensitivity["within_tolerance"] == (
        max(sensitivity["relative_change_half"], sensitivity["relative_change_double"])
        <= AppConstants.DELTA_SENSITIVITY_TOL)
    assert status == (0 if report["passed"] else 1)


def test_unexpected_error_writes_error_document(tmp_path, monkeypatch):
    import main as entry

    def explode(self):
        raise ValueError("table dimensions disagree")

    monkeypatch.setattr(entry.ExperimentRunner, "_kappa", explode)
    status = main(["kappa", "--output-dir", str(tmp_path)] + SMALL)
    assert status == 1
    error = load(tmp_path, AppConstants.ERROR_FILE)
    assert error["error"] == "ValueError"
    assert error["message"] == "table dimensions disagree"
    assert load(tmp_path, AppConstants.MANIFEST_FILE)["exit_status"] == 1


def test_resolved_config_is_written(tmp_path):
    assert main(["kappa", "--output-dir", str(tmp_path)] + SMALL) == 0
    resolved = load(tmp_path, AppConstants.RESOLVED_CONFIG_FILE)
    manifest = load(tmp_path, AppConstants.MANIFEST_FILE)
    assert resolved == manifest["config"]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))

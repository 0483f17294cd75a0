"""
Command-line and runner tests: configuration validation and overrides, exit
codes, the files each subcommand writes and byte-identical reruns
"""
import json
import shutil
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from benchmarks.benchmark_library import list_benchmarks
from config.experiment_config import (
    apply_overrides, load_config, parse_override, resolve_config, validate_document,
)
from execution.experiment_runner import ExperimentRunner
from reporting.bundle_io import MAGIC, read_bundle_binary, write_bundle_binary
from simulation.path_simulator import simulate_reference
from teamopt import main
from utils.exceptions import ConfigInvalid

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

LQ_DOCUMENT = {
    "problem": {"family": "linear-quadratic",
                "params": {"A": [[0.0]], "B": 1.0, "Q": 1.0, "R": 1.0, "F": 1.0, "horizon": 1.0}},
    "run": {"paths": 100, "steps": 5},
}


def _write_config(tmp_path, document, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(document))
    return path


@pytest.mark.unit
def test_benchmark_catalog(capsys):
    names = {entry["name"] for entry in list_benchmarks()}
    assert {"lq-scalar", "gaussian-one-step", "affine-two-step", "radner-quadratic",
            "radner-continuous", "delayed-sharing-lq"} <= names
    assert all(entry["oracle"] for entry in list_benchmarks())
    assert main(["list-benchmarks"]) == 0
    assert "lq-scalar" in capsys.readouterr().out


@pytest.mark.unit
def test_missing_horizon_names_the_key():
    document = json.loads(json.dumps(LQ_DOCUMENT))
    del document["problem"]["params"]["horizon"]
    with pytest.raises(ConfigInvalid) as excinfo:
        validate_document(document)
    assert excinfo.value.path == "problem.params.horizon"


@pytest.mark.unit
def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigInvalid) as excinfo:
        validate_document({**LQ_DOCUMENT, "run": {"pathz": 10}})
    assert excinfo.value.path == "run.pathz"
    with pytest.raises(ConfigInvalid):
        validate_document({**LQ_DOCUMENT, "bogus": 1})
    with pytest.raises(ConfigInvalid):
        validate_document({"run": {"paths": 10}})


@pytest.mark.unit
def test_overrides_parse_json_and_patch_a_copy():
    assert parse_override("run.paths=500") == ("run.paths", 500)
    assert parse_override("output.directory=out/a") == ("output.directory", "out/a")
    assert parse_override("run.checkpoints=[0.5, 1.0]") == ("run.checkpoints", [0.5, 1.0])
    with pytest.raises(ConfigInvalid):
        parse_override("run.paths")
    patched = apply_overrides(LQ_DOCUMENT, ["run.paths=7", "policy.basis=linear"])
    assert patched["run"]["paths"] == 7
    assert patched["policy"] == {"basis": "linear"}
    assert LQ_DOCUMENT["run"]["paths"] == 100


@pytest.mark.unit
def test_benchmark_defaults_fill_the_resolved_config():
    config = resolve_config({"problem": {"benchmark": "lq-scalar"}})
    assert config.family == "linear-quadratic"
    assert config.policy.basis == "linear"
    assert config.policy.segments == 4
    assert config.params["horizon"] == 1.0
    assert config.run.paths == 20000
    overridden = resolve_config({"problem": {"benchmark": "lq-scalar", "params": {"horizon": 2.0}},
                                 "policy": {"segments": 1}})
    assert overridden.params["horizon"] == 2.0
    assert overridden.policy.segments == 1
    assert overridden.policy.basis == "linear"
    echo = overridden.resolved()
    assert echo["run"]["checkpoints"] == []
    assert echo["output"]["formats"] == ["csv", "json"]


@pytest.mark.unit
def test_unknown_benchmark_is_a_config_error():
    with pytest.raises(ConfigInvalid) as excinfo:
        resolve_config({"problem": {"benchmark": "no-such-problem"}})
    assert excinfo.value.path == "problem.benchmark"


@pytest.mark.unit
def test_invalid_config_exits_with_two(tmp_path, capsys):
    document = json.loads(json.dumps(LQ_DOCUMENT))
    del document["problem"]["params"]["horizon"]
    path = _write_config(tmp_path, document)
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "out")]) == 2
    assert "problem.params.horizon" in capsys.readouterr().out
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2


@pytest.mark.unit
def test_static_compare_refuses_continuous_problems(tmp_path):
    path = _write_config(tmp_path, LQ_DOCUMENT)
    assert main(["static-compare", "--config", str(path), "--out", str(tmp_path / "out")]) == 2


@pytest.mark.unit
def test_simulate_writes_bundle_and_manifest(tmp_path):
    document = {**LQ_DOCUMENT, "output": {"directory": str(tmp_path), "formats": ["csv", "json", "bin"]}}
    config = resolve_config(document)
    outcome = ExperimentRunner(config).run("simulate")
    assert outcome.passed
    for name in ("simulate.json", "bundle.csv", "bundle.topb", "resolved_config.json", "manifest.json"):
        assert (tmp_path / name).exists()
    frame = pd.read_csv(tmp_path / "bundle.csv")
    assert len(frame) == 100 * 6
    record = read_bundle_binary(tmp_path / "bundle.topb")
    assert record.states.shape == (100, 6, 1)
    assert record.header["num_paths"] == 100
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    listed = {entry["name"] for entry in manifest["files"]}
    assert {"simulate.json", "bundle.csv", "bundle.topb", "resolved_config.json"} <= listed
    assert manifest["seeds"] == [0]


@pytest.mark.statistical
def test_check_martingale_from_the_command_line(tmp_path):
    status = main(["check-martingale", "--config", str(CONFIGS / "toy1_martingale.json"),
                   "--paths", "20000", "--out", str(tmp_path)])
    frame = pd.read_csv(tmp_path / "martingale.csv")
    report = json.loads((tmp_path / "check_martingale.json").read_text())
    assert len(frame) == 3
    assert report["passed"] == bool(frame["pass"].all())
    assert status == (0 if report["passed"] else 1)
    resolved = json.loads((tmp_path / "resolved_config.json").read_text())
    assert resolved["run"]["paths"] == 20000
    assert resolved["run"]["seed"] == 11


@pytest.mark.unit
def test_reruns_are_byte_identical_across_worker_counts(tmp_path, monkeypatch):
    """Every output except the manifest timestamps matches bit for bit"""
    path = _write_config(tmp_path, {
        "problem": {"benchmark": "lq-scalar"},
        "policy": {"basis": "tanh", "init": [[0.0, 0.3]], "segments": 1},
        "run": {"paths": 9000, "seed": 3, "steps": 10, "checkpoints": [0.5, 1.0]},
        "output": {"formats": ["csv", "json", "bin"]},
    })
    out = tmp_path / "out"
    first = tmp_path / "first"
    monkeypatch.setenv("TEAMOPT_THREADS", "1")
    main(["check-martingale", "--config", str(path), "--out", str(out)])
    shutil.copytree(out, first)
    monkeypatch.setenv("TEAMOPT_THREADS", "3")
    main(["check-martingale", "--config", str(path), "--out", str(out)])
    names = sorted(p.name for p in first.iterdir() if p.name != "manifest.json")
    assert "reference_bundle.topb" in names
    for name in names:
        assert (first / name).read_bytes() == (out / name).read_bytes(), name
    hashes = {e["name"]: e["sha256"] for e in json.loads((first / "manifest.json").read_text())["files"]}
    rerun = {e["name"]: e["sha256"] for e in json.loads((out / "manifest.json").read_text())["files"]}
    assert hashes == rerun


@pytest.mark.unit
def test_binary_bundle_layout(tmp_path, toy1_spec, grid20):
    bundle = simulate_reference(toy1_spec, grid20, 12, seed=1)
    path = write_bundle_binary(bundle, tmp_path / "b.topb")
    raw = path.read_bytes()
    assert raw.startswith(MAGIC)
    record = read_bundle_binary(path)
    assert record.header["measure"] == "reference"
    assert record.noise_increments.shape == (12, 20, 1)
    assert record.log_likelihood.shape == (12, 21)
    np.testing.assert_array_equal(record.states, bundle.states)
    bad = tmp_path / "bad.topb"
    bad.write_bytes(b"NOPE!" + raw[len(MAGIC):])
    with pytest.raises(ValueError):
        read_bundle_binary(bad)


@pytest.mark.unit
def test_load_config_applies_overrides_before_validation(tmp_path):
    path = _write_config(tmp_path, LQ_DOCUMENT)
    assert load_config(path, ["run.seed=9"]).run.seed == 9
    with pytest.raises(ConfigInvalid):
        load_config(path, ["run.paths=0"])
    (tmp_path / "broken.json").write_text("{not json")
    with pytest.raises(ConfigInvalid):
        load_config(tmp_path / "broken.json")

import json

import pytest

from auscult.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_TASK, run_command
from auscult.models import serialize


def run(capsys, *argv):
    code = run_command([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    """Four short synthetic subjects, ingested and featurized once."""
    base = tmp_path_factory.mktemp("tiny")
    root, cache = base / "data", base / "cache"
    assert run_command(["synth", str(root), "--subjects", "4", "--duration", "14", "--seed", "3"]) == 0
    assert run_command(["ingest", str(root), "--cache", str(cache)]) == 0
    assert run_command(["features", "--cache", str(cache)]) == 0
    return root, cache


def test_unknown_task_names_valid_tasks(capsys, tmp_path):
    code, _, err = run(capsys, "evaluate", "--task", "sneezing", "--cache", tmp_path)
    assert code == EXIT_TASK
    assert err.count("\n") == 1 and "binary_healthy" in err and "bmi_regression" in err


def test_config_errors(capsys, tmp_path):
    bad = tmp_path / "cfg.json"
    bad.write_text('{"window_length_s": 10, "colour": "red"}')
    code, _, err = run(capsys, "features", "--config", bad, "--cache", tmp_path)
    assert code == EXIT_CONFIG and "colour" in err
    bad.write_text("{not json")
    assert run(capsys, "features", "--config", bad, "--cache", tmp_path)[0] == EXIT_CONFIG
    bad.write_text('{"window_step_s": -1}')
    assert run(capsys, "features", "--config", bad, "--cache", tmp_path)[0] == EXIT_CONFIG
    bad.write_text('{"tasks": ["binary_healthy", "flu"]}')
    assert run(capsys, "features", "--config", bad, "--cache", tmp_path)[0] == EXIT_CONFIG
    assert run(capsys, "features", "--seed", "-1", "--cache", tmp_path)[0] == EXIT_CONFIG


def test_io_errors(capsys, tmp_path):
    code, _, err = run(capsys, "features", "--cache", tmp_path / "empty")
    assert code == EXIT_IO and "ingest" in err
    assert run(capsys, "ingest", tmp_path / "nowhere", "--cache", tmp_path)[0] == EXIT_IO
    assert run(capsys, "report", "--cache", tmp_path)[0] == EXIT_IO


def test_features_rerun_is_cached_and_identical(capsys, tiny):
    _, cache = tiny
    path = cache / "features.csv"
    before, mtime = path.read_bytes(), path.stat().st_mtime_ns
    bundles = {p: p.stat().st_mtime_ns for p in (cache / "biosignals").glob("*.npz")}
    assert len(bundles) == 4
    assert run(capsys, "features", "--cache", cache)[0] == EXIT_OK
    assert path.read_bytes() == before and path.stat().st_mtime_ns == mtime
    assert {p: p.stat().st_mtime_ns for p in bundles} == bundles
    header = before.decode().splitlines()[0].split(",")
    assert header[:3] == ["patient_id", "recording", "window_index"] and len(header) == 3 + 521


def test_provenance_sidecars(tiny):
    _, cache = tiny
    sidecars = list(cache.rglob("*.prov.json"))
    assert len(sidecars) >= 1 + 4 + 4 + 1
    for p in sidecars:
        prov = json.loads(p.read_text())
        assert {"config_hash", "registry_version", "seed", "upstream", "artifact_sha256"} <= set(prov)
    prov = json.loads((cache / "features.csv.prov.json").read_text())
    assert prov["n_features"] == 521 and len(prov["upstream"]["recordings"]) == 4


def test_train_evaluate_report(capsys, tiny):
    _, cache = tiny
    code, out, _ = run(capsys, "train", "--task", "binary_healthy", "--cache", cache)
    assert code == EXIT_OK
    model, scaler, meta = serialize.loads(open(out.strip()).read())
    assert meta["task"] == "binary_healthy" and len(meta["feature_names"]) == 521
    assert model.n_features == 521 and scaler.mean.size == 521

    argv = ("evaluate", "--task", "binary_healthy", "--cache", cache)
    code, out, _ = run(capsys, *argv)
    assert code == EXIT_OK and "balanced_accuracy=" in out and "f1=" in out
    report = out.strip().split(" -> ")[-1]
    doc = json.loads(open(report).read())
    assert doc["provenance"]["seed"] == 0 and len(doc["per_fold"]) == 4
    assert open(report.replace(".json", ".roc.csv")).readline() == "class,fpr,tpr\n"
    # cache hit returns the same document
    code, out2, _ = run(capsys, *argv)
    assert code == EXIT_OK and out2 == out

    code, out, _ = run(capsys, "report", "--cache", cache)
    assert code == EXIT_OK and "binary_healthy" in out and "0.8764" in out
    assert (cache / "report.txt").read_text() == out

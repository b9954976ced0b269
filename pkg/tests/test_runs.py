import json

import pytest

from eegmatch.errors import ConcurrentRunError, DataError
from eegmatch.runs import (
    LOCK_NAME,
    MANIFEST_NAME,
    RESULTS_NAME,
    RunDirectory,
    load_manifest,
    load_results,
)


def start(tmp_path, name="run", **kwargs):
    return RunDirectory(tmp_path / name, "train", {"seed": 0}, **kwargs)


def test_manifest_lifecycle(tmp_path):
    run = start(tmp_path, seeds=(0, 1))
    on_disk = load_manifest(run.path)
    assert on_disk["status"] == "running"
    assert on_disk["command"] == "train"
    assert on_disk["config"] == {"seed": 0}
    assert on_disk["seeds"] == [0, 1]
    assert on_disk["finished_at"] is None
    assert (run.path / LOCK_NAME).exists()

    run.finish()
    done = load_manifest(run.path, require_complete=True)
    assert done["status"] == "complete"
    assert done["finished_at"] is not None
    assert not (run.path / LOCK_NAME).exists()


def test_context_manager_marks_failures(tmp_path):
    with pytest.raises(RuntimeError, match="boom"):
        with start(tmp_path) as run:
            raise RuntimeError("boom")
    assert load_manifest(run.path)["status"] == "failed"
    assert not (run.path / LOCK_NAME).exists()
    with pytest.raises(DataError, match="not complete"):
        load_manifest(run.path, require_complete=True)


def test_refuses_nonempty_directory_without_force(tmp_path):
    out = tmp_path / "run"
    out.mkdir()
    (out / "stale.txt").write_text("old artifact")
    with pytest.raises(DataError, match="--force"):
        RunDirectory(out, "train", {})
    with RunDirectory(out, "train", {}, force=True):
        pass
    assert not (out / "stale.txt").exists()
    assert load_manifest(out)["status"] == "complete"


def test_lock_rejects_concurrent_runs_even_with_force(tmp_path):
    out = tmp_path / "run"
    out.mkdir()
    (out / LOCK_NAME).write_text("1234\n")
    with pytest.raises(ConcurrentRunError, match=LOCK_NAME):
        RunDirectory(out, "train", {})
    with pytest.raises(ConcurrentRunError, match=LOCK_NAME):
        RunDirectory(out, "train", {}, force=True)


def test_results_round_trip(tmp_path):
    entries = [{"fold": 1, "accuracy": 62.5}, {"fold": 2, "accuracy": 58.0}]
    with start(tmp_path) as run:
        run.append_results(entries[:1])
        run.append_results(entries[1:])
    assert load_results(run.path) == entries
    assert run.manifest["outputs"].count(RESULTS_NAME) == 1


def test_every_artifact_is_reachable_from_the_manifest(tmp_path):
    with start(tmp_path) as run:
        run.append_results([{"fold": 1}])
        plot_dir = run.add_output("plots")
        plot_dir.mkdir()
        (plot_dir / "trend.png").write_bytes(b"\x89PNG")
    outputs = load_manifest(run.path)["outputs"]
    for path in run.path.rglob("*"):
        if path.is_dir() or path.name == MANIFEST_NAME:
            continue
        rel = path.relative_to(run.path).as_posix()
        assert any(rel == out or rel.startswith(f"{out}/")
                   for out in outputs), rel


def test_load_errors(tmp_path):
    with pytest.raises(DataError, match="not a run directory"):
        load_manifest(tmp_path)
    with pytest.raises(DataError, match=RESULTS_NAME):
        load_results(tmp_path)
    bad = tmp_path / MANIFEST_NAME
    bad.write_text(json.dumps({"manifest_version": 99, "status": "complete"}))
    with pytest.raises(DataError, match="manifest version"):
        load_manifest(tmp_path)

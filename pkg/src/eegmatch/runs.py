"""Run directories: manifest, lock file, and append-only results.

Every command writes into one run directory and registers each artifact
in that directory's ``manifest.json``. The manifest is written when the
run starts (status ``running``) and finalized when it ends, so a crashed
run leaves a diagnosable directory behind instead of a half-trusted one.
Timestamps live only in the manifest; ``results.jsonl`` records must be
byte-identical across reruns with the same seed.
"""

from __future__ import annotations

import json
import os
import shutil
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .corpus.store import atomic_json
from .errors import ConcurrentRunError, DataError

MANIFEST_NAME = "manifest.json"
RESULTS_NAME = "results.jsonl"
LOCK_NAME = ".lock"
MANIFEST_VERSION = 1


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RunDirectory:
    """Owns one output directory for the lifetime of a command.

    Usable as a context manager: a clean exit finalizes the manifest as
    ``complete``, an exception as ``failed`` (and re-raises).
    """

    def __init__(self, out_dir, command: str, config: dict, *,
                 corpus_fingerprint: str | None = None, seeds=(), force: bool = False):
        self.path = Path(out_dir)
        lock = self.path / LOCK_NAME
        if lock.exists():
            raise ConcurrentRunError(
                f"{self.path}: another run holds {LOCK_NAME}; "
                f"remove the file if that run is dead"
            )
        if self.path.exists() and any(self.path.iterdir()):
            if not force:
                raise DataError(
                    f"{self.path}: output directory is not empty "
                    f"(pass --force to replace it)"
                )
            shutil.rmtree(self.path)
        self.path.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path / LOCK_NAME, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConcurrentRunError(
                f"{self.path}: another run holds {LOCK_NAME}; "
                f"remove the file if that run is dead"
            ) from None
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        self.manifest = {
            "manifest_version": MANIFEST_VERSION,
            "command": command,
            "config": config,
            "corpus_fingerprint": corpus_fingerprint,
            "code_version": __version__,
            "seeds": [int(s) for s in seeds],
            "started_at": _utc_now(),
            "finished_at": None,
            "status": "running",
            "outputs": [],
        }
        self._write()

    def _write(self):
        atomic_json(self.path / MANIFEST_NAME, self.manifest)

    def add_output(self, name) -> Path:
        """Register a path (relative to the run directory) as an artifact."""
        rel = Path(name).as_posix()
        if rel not in self.manifest["outputs"]:
            self.manifest["outputs"].append(rel)
            self._write()
        return self.path / rel

    def append_results(self, entries):
        path = self.add_output(RESULTS_NAME)
        with path.open("a") as fh:
            for entry in entries:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def set_fingerprint(self, fingerprint: str):
        self.manifest["corpus_fingerprint"] = fingerprint
        self._write()

    def finish(self, status: str = "complete"):
        self.manifest["status"] = status
        self.manifest["finished_at"] = _utc_now()
        self._write()
        (self.path / LOCK_NAME).unlink(missing_ok=True)

    def __enter__(self) -> "RunDirectory":
        return self

    def __exit__(self, exc_type, exc, tb):
        self.finish("complete" if exc_type is None else "failed")
        return False


def load_manifest(run_dir, *, require_complete: bool = False) -> dict:
    path = Path(run_dir) / MANIFEST_NAME
    if not path.exists():
        raise DataError(f"{run_dir}: not a run directory (no {MANIFEST_NAME})")
    manifest = json.loads(path.read_text())
    version = manifest.get("manifest_version")
    if version != MANIFEST_VERSION:
        raise DataError(f"{path}: manifest version {version!r} is not {MANIFEST_VERSION}")
    if require_complete and manifest["status"] != "complete":
        raise DataError(f"{run_dir}: run status is {manifest['status']!r}, not complete")
    return manifest


def load_results(run_dir) -> list:
    path = Path(run_dir) / RESULTS_NAME
    if not path.exists():
        raise DataError(f"{run_dir}: no {RESULTS_NAME}")
    return [json.loads(line) for line in path.read_text().splitlines() if line]

"""On-disk corpus of preprocessed sentence records.

Layout::

    corpus_dir/
      meta.json                      # schema, rates, counts, fingerprint
      reports.jsonl                  # one preprocessing report per trial
      records/<subject>__tNN__sNNN.npz

Record files are self-describing: a ``header`` JSON entry carries ids,
rates, shapes and dtypes next to the arrays. Files are written with
fixed zip metadata so identical content is identical bytes, which is
what makes the corpus fingerprint and rerun comparisons meaningful.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import zipfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..errors import DataError
from .types import FEATURE_RATE_HZ, SentenceRecord

SCHEMA_VERSION = 1
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def _atomic_bytes(path: Path, payload: bytes):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def atomic_json(path: Path, obj):
    _atomic_bytes(Path(path), (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def _write_deterministic_npz(path: Path, arrays: dict):
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            payload = io.BytesIO()
            np.lib.format.write_array(payload, np.ascontiguousarray(arr),
                                      version=(1, 0))
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_ZIP_EPOCH)
            zf.writestr(info, payload.getvalue())
    _atomic_bytes(path, buf.getvalue())


def record_filename(record: SentenceRecord) -> str:
    return (f"{record.subject_id}__t{record.trial_id:02d}"
            f"__s{record.sentence_index:03d}.npz")


def save_record(records_dir: Path, record: SentenceRecord) -> str:
    record.validate()
    header = {
        "schema": SCHEMA_VERSION,
        "subject_id": record.subject_id,
        "trial_id": record.trial_id,
        "sentence_index": record.sentence_index,
        "feature_rate_hz": FEATURE_RATE_HZ,
        "pooled_rate_hz": FEATURE_RATE_HZ / 3.0,
        "eeg_shape": list(record.eeg_feat.shape),
        "mel_shape": list(record.mel_feat.shape),
        "dtype": "float32",
    }
    name = record_filename(record)
    _write_deterministic_npz(records_dir / name, {
        "header": np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8),
        "eeg_feat": record.eeg_feat.astype(np.float32),
        "mel_feat": record.mel_feat.astype(np.float32),
        "word_bounds_64": np.asarray(record.word_bounds_64, dtype=np.int64),
        "word_bounds_feat": np.asarray(record.word_bounds_feat, dtype=np.int64),
    })
    return name


def load_record(path) -> SentenceRecord:
    path = Path(path)
    try:
        with np.load(path) as payload:
            header = json.loads(bytes(payload["header"]).decode())
            record = SentenceRecord(
                subject_id=header["subject_id"],
                trial_id=int(header["trial_id"]),
                sentence_index=int(header["sentence_index"]),
                eeg_feat=payload["eeg_feat"],
                mel_feat=payload["mel_feat"],
                word_bounds_64=[tuple(map(int, b)) for b in payload["word_bounds_64"]],
                word_bounds_feat=[tuple(map(int, b)) for b in payload["word_bounds_feat"]],
            )
    except (KeyError, ValueError, OSError, zipfile.BadZipFile,
            json.JSONDecodeError) as err:
        raise DataError(f"{path}: unreadable sentence record ({err})") from None
    if list(record.eeg_feat.shape) != header["eeg_shape"] or \
            list(record.mel_feat.shape) != header["mel_shape"]:
        raise DataError(f"{path}: header shapes disagree with stored arrays")
    try:
        return record.validate()
    except ValueError as err:
        raise DataError(f"{path}: {err}") from None


def save_corpus(out_dir, trial_results, preproc_snapshot: dict) -> dict:
    """Stream (records, report) pairs to disk; returns the final meta.

    `trial_results` yields one ``(list[SentenceRecord], PreprocReport)``
    per trial. ``meta.json`` is written last so a complete meta file
    implies a complete corpus.
    """
    out = Path(out_dir)
    records_dir = out / "records"
    records_dir.mkdir(parents=True, exist_ok=True)
    n_records = 0
    subjects, trials = set(), set()
    report_lines = []
    for records, report in trial_results:
        for record in records:
            save_record(records_dir, record)
            n_records += 1
            subjects.add(record.subject_id)
            trials.add(record.trial_id)
        report_lines.append(json.dumps(asdict(report), sort_keys=True))
    _atomic_bytes(out / "reports.jsonl", ("\n".join(report_lines) + "\n").encode())
    meta = {
        "schema": SCHEMA_VERSION,
        "feature_rate_hz": FEATURE_RATE_HZ,
        "pooled_rate_hz": FEATURE_RATE_HZ / 3.0,
        "n_records": n_records,
        "subjects": sorted(subjects),
        "trials": sorted(trials),
        "preprocessing": preproc_snapshot,
        "fingerprint": corpus_fingerprint(out),
    }
    atomic_json(out / "meta.json", meta)
    return meta


def load_meta(corpus_dir) -> dict:
    path = Path(corpus_dir) / "meta.json"
    if not path.exists():
        raise DataError(f"{corpus_dir}: not a corpus directory (no meta.json)")
    meta = json.loads(path.read_text())
    if meta.get("schema") != SCHEMA_VERSION:
        raise DataError(
            f"{path}: corpus schema {meta.get('schema')!r} is not {SCHEMA_VERSION}"
        )
    return meta


def load_corpus(corpus_dir):
    """All sentence records, sorted by (subject, trial, sentence)."""
    meta = load_meta(corpus_dir)
    records_dir = Path(corpus_dir) / "records"
    paths = sorted(records_dir.glob("*.npz"))
    if len(paths) != meta["n_records"]:
        raise DataError(
            f"{corpus_dir}: meta promises {meta['n_records']} records, "
            f"found {len(paths)}"
        )
    records = [load_record(p) for p in paths]
    records.sort(key=lambda r: r.key())
    return records


def load_reports(corpus_dir):
    path = Path(corpus_dir) / "reports.jsonl"
    if not path.exists():
        raise DataError(f"{corpus_dir}: no reports.jsonl")
    return [json.loads(line) for line in path.read_text().splitlines() if line]


def corpus_fingerprint(corpus_dir) -> str:
    """Content hash over every record file and the preprocessing reports."""
    out = Path(corpus_dir)
    digest = hashlib.sha256()
    paths = sorted(out.glob("records/*.npz")) + [out / "reports.jsonl"]
    for path in paths:
        if not path.exists():
            raise DataError(f"{corpus_dir}: missing {path.name}")
        digest.update(path.relative_to(out).as_posix().encode())
        digest.update(hashlib.sha256(path.read_bytes()).digest())
    return digest.hexdigest()

"""Reader for natural-speech EEG datasets in the documented on-disk layout.

Expected tree::

    root/
      eeg/<subject_id>/trial_00.npy    # [128, n_samples] float at 512 Hz
      audio/trial_00.npy               # [n_samples] float at 16 kHz
      alignments/trial_00.json         # sentence/word onsets-offsets, seconds

EEG matrices may also be MATLAB files (key ``eegData``, either channel
orientation, optional ``fs``), and audio may be 16 kHz mono WAV; public
recordings such as the Dryad natural-speech release convert to this tree
with a few lines of scripting. Alignment files look like::

    {"sentences": [{"start": 12.81, "end": 15.02,
                    "words": [{"start": 12.81, "end": 13.11, "token": "the"},
                              ...]}]}

All loaders go through :func:`load_trial`, so alternative layouts only
need a different discovery step.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from ..errors import DataError
from .types import AUDIO_RATE_HZ, EEG_RATE_HZ, N_EEG_CHANNELS, RawTrial, \
    SentenceAnnotation, WordSpan

_TRIAL_RE = re.compile(r"trial_(\d+)\.(npy|mat|wav|json)$")


def _read_eeg(path: Path) -> np.ndarray:
    if path.suffix == ".npy":
        eeg = np.load(path)
    elif path.suffix == ".mat":
        from scipy.io import loadmat

        mat = loadmat(path)
        if "eegData" not in mat:
            raise DataError(f"{path}: no 'eegData' variable")
        eeg = np.asarray(mat["eegData"], dtype=float)
        if "fs" in mat:
            fs = float(np.squeeze(mat["fs"]))
            if fs != EEG_RATE_HZ:
                raise DataError(f"{path}: recorded at {fs} Hz, expected {EEG_RATE_HZ}")
    else:
        raise DataError(f"{path}: unsupported EEG file type")
    eeg = np.asarray(eeg, dtype=float)
    if eeg.ndim != 2:
        raise DataError(f"{path}: EEG must be 2-D, got shape {eeg.shape}")
    if eeg.shape[0] != N_EEG_CHANNELS:
        if eeg.shape[1] == N_EEG_CHANNELS:
            eeg = eeg.T
        else:
            raise DataError(
                f"{path}: expected {N_EEG_CHANNELS} channels, got shape {eeg.shape}"
            )
    return eeg


def _read_audio(path: Path) -> np.ndarray:
    if path.suffix == ".npy":
        audio = np.asarray(np.load(path), dtype=float)
    elif path.suffix == ".wav":
        from scipy.io import wavfile

        rate, data = wavfile.read(path)
        if rate != AUDIO_RATE_HZ:
            raise DataError(f"{path}: sampled at {rate} Hz, expected {AUDIO_RATE_HZ}")
        data = np.asarray(data)
        if data.ndim != 1:
            raise DataError(f"{path}: expected mono audio, got shape {data.shape}")
        if np.issubdtype(data.dtype, np.integer):
            audio = data.astype(float) / float(np.iinfo(data.dtype).max)
        else:
            audio = data.astype(float)
    else:
        raise DataError(f"{path}: unsupported audio file type")
    if audio.ndim != 1:
        raise DataError(f"{path}: expected a 1-D audio array, got shape {audio.shape}")
    return audio


def _read_alignment(path: Path):
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise DataError(f"{path}: invalid JSON ({err})") from None
    try:
        sentences = []
        for sent in payload["sentences"]:
            words = tuple(
                WordSpan(float(w["start"]), float(w["end"]), str(w.get("token", "")))
                for w in sent["words"]
            )
            sentences.append(
                SentenceAnnotation(float(sent["start"]), float(sent["end"]), words)
            )
    except (KeyError, TypeError) as err:
        raise DataError(f"{path}: malformed alignment ({err!r})") from None
    if not sentences:
        raise DataError(f"{path}: no sentences")
    return sentences


def _find(directory: Path, trial_id: int, kinds) -> Path:
    for kind in kinds:
        candidate = directory / f"trial_{trial_id:02d}.{kind}"
        if candidate.exists():
            return candidate
    raise DataError(f"no trial_{trial_id:02d}.{{{','.join(kinds)}}} in {directory}")


def load_trial(root, subject_id: str, trial_id: int) -> RawTrial:
    root = Path(root)
    eeg = _read_eeg(_find(root / "eeg" / subject_id, trial_id, ("npy", "mat")))
    audio = _read_audio(_find(root / "audio", trial_id, ("npy", "wav")))
    sentences = _read_alignment(_find(root / "alignments", trial_id, ("json",)))
    try:
        return RawTrial(subject_id=subject_id, trial_id=trial_id, eeg=eeg,
                        audio=audio, sentences=sentences).validate()
    except ValueError as err:
        raise DataError(f"{subject_id} trial {trial_id}: {err}") from None


def discover(root):
    """Sorted subject ids and trial ids present under `root`."""
    root = Path(root)
    eeg_dir = root / "eeg"
    if not eeg_dir.is_dir():
        raise DataError(f"{root}: no eeg/ directory")
    subjects = sorted(p.name for p in eeg_dir.iterdir() if p.is_dir())
    if not subjects:
        raise DataError(f"{eeg_dir}: no subject directories")
    trials = sorted(
        int(m.group(1))
        for p in (root / "alignments").glob("trial_*.json")
        if (m := _TRIAL_RE.search(p.name))
    )
    if not trials:
        raise DataError(f"{root}: no alignments/trial_*.json files")
    return subjects, trials


def load_broderick(root, subjects=None, trials=None):
    """Load every (subject, trial) pair under `root` as validated raw trials."""
    found_subjects, found_trials = discover(root)
    subjects = list(subjects) if subjects is not None else found_subjects
    trials = list(trials) if trials is not None else found_trials
    return [load_trial(root, s, t) for s in subjects for t in trials]

"""Per-trial preprocessing driver: raw trial in, sentence records out.

The stage order is fixed: band-pass at 512 Hz, downsample to 64 Hz,
detect and repair bad channels, mastoid re-reference, then per-trial
z-scoring last. Sentence slicing and log-mel extraction follow on the
cleaned 64 Hz stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.stats import kurtosis

from . import eeg_preproc
from .corpus.types import RawTrial, SentenceRecord
from .eeg_preproc import FEATURE_RATE_HZ, FilterSpec, PreprocReport
from .montage import BIOSEMI128_NEIGHBORS, DEFAULT_MASTOIDS
from .segmentation import to_feature_rate
from .speech_features import MelConfig, melspectrogram


@dataclass(frozen=True)
class PreprocConfig:
    filter_spec: FilterSpec = field(default_factory=FilterSpec)
    mel: MelConfig = field(default_factory=MelConfig)
    mastoids: tuple = DEFAULT_MASTOIDS
    zscore: bool = True

    def validate(self) -> "PreprocConfig":
        self.filter_spec.validate()
        self.mel.validate()
        return self

    def snapshot(self) -> dict:
        return {
            "filter": {"low_hz": self.filter_spec.low_hz,
                       "high_hz": self.filter_spec.high_hz,
                       "order": self.filter_spec.order},
            "mel": {"n_filters": self.mel.n_filters, "f_max": self.mel.f_max,
                    "preemphasis": self.mel.preemphasis,
                    "win_samples": self.mel.win_samples,
                    "hop_samples": self.mel.hop_samples, "n_fft": self.mel.n_fft,
                    "log_floor": self.mel.log_floor},
            "mastoids": list(self.mastoids),
            "zscore": self.zscore,
        }


def _slice_sentence(trial, cleaned_64, sentence, index, mel_config):
    f64 = FEATURE_RATE_HZ
    s64 = int(math.floor(sentence.start_s * f64))
    e64 = int(math.floor(sentence.end_s * f64))
    eeg_feat = cleaned_64[:, s64:e64]

    a0 = int(math.floor(sentence.start_s * trial.audio_rate_hz))
    a1 = int(math.floor(sentence.end_s * trial.audio_rate_hz))
    mel_feat = melspectrogram(trial.audio[a0:a1], mel_config)

    n_frames = min(eeg_feat.shape[1], mel_feat.shape[1])
    if abs(eeg_feat.shape[1] - mel_feat.shape[1]) > 1:
        raise ValueError(
            f"{trial.subject_id} trial {trial.trial_id} sentence {index}: EEG gives "
            f"{eeg_feat.shape[1]} frames but mel gives {mel_feat.shape[1]}"
        )
    eeg_feat = eeg_feat[:, :n_frames]
    mel_feat = mel_feat[:, :n_frames]

    bounds_64 = []
    for j, word in enumerate(sentence.words):
        ws = int(math.floor(word.start_s * f64)) - s64
        we = min(int(math.floor(word.end_s * f64)) - s64, n_frames)
        if we <= ws:
            raise ValueError(
                f"{trial.subject_id} trial {trial.trial_id} sentence {index} "
                f"word {j}: collapses to an empty span at {f64:.0f} Hz"
            )
        bounds_64.append((ws, we))
    bounds_feat = to_feature_rate(bounds_64, feature_len=math.ceil(n_frames / 3))

    return SentenceRecord(
        subject_id=trial.subject_id,
        trial_id=trial.trial_id,
        sentence_index=index,
        eeg_feat=eeg_feat.astype(np.float32),
        mel_feat=mel_feat.astype(np.float32),
        word_bounds_64=bounds_64,
        word_bounds_feat=bounds_feat,
    ).validate()


def preprocess_trial(trial: RawTrial, config: PreprocConfig | None = None,
                     neighbor_map=None):
    """Clean one trial and cut it into sentence records.

    Returns ``(records, report)`` where the report carries the raw
    per-channel variance and kurtosis plus the flagged channels.
    """
    config = (config or PreprocConfig()).validate()
    trial.validate()
    report = PreprocReport(
        subject_id=trial.subject_id,
        trial_id=trial.trial_id,
        channel_variance=np.var(trial.eeg, axis=1).tolist(),
        channel_kurtosis=kurtosis(trial.eeg, axis=1, fisher=True, bias=True).tolist(),
    )

    x = eeg_preproc.bandpass(trial.eeg, config.filter_spec, trial.eeg_rate_hz)
    x = eeg_preproc.resample_to_64(x, trial.eeg_rate_hz)
    bad = eeg_preproc.detect_bad_channels(x)
    report.bad_channels = bad
    x = eeg_preproc.repair_channels(x, bad, neighbor_map or BIOSEMI128_NEIGHBORS)
    x = eeg_preproc.rereference_mastoids(x, config.mastoids)
    if config.zscore:
        x = eeg_preproc.zscore_channels(x)

    records = [
        _slice_sentence(trial, x, sentence, i, config.mel)
        for i, sentence in enumerate(trial.sentences)
    ]
    return records, report


def preprocess_corpus(trials: Iterable[RawTrial], config: PreprocConfig | None = None,
                      neighbor_map=None):
    """Lazily preprocess trials; yields one (records, report) per trial."""
    config = (config or PreprocConfig()).validate()
    for trial in trials:
        yield preprocess_trial(trial, config, neighbor_map)

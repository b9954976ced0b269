"""Data carriers for raw trials and preprocessed sentence records."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..validation import check_array, check_int, check_positive

N_EEG_CHANNELS = 128
EEG_RATE_HZ = 512.0
AUDIO_RATE_HZ = 16000.0
FEATURE_RATE_HZ = 64.0


@dataclass(frozen=True)
class WordSpan:
    start_s: float
    end_s: float
    token: str = ""


@dataclass(frozen=True)
class SentenceAnnotation:
    start_s: float
    end_s: float
    words: tuple = ()


@dataclass
class RawTrial:
    """One subject's EEG for one stimulus run, with the audio and alignment."""

    subject_id: str
    trial_id: int
    eeg: np.ndarray      # [n_channels, n_samples] at eeg_rate_hz
    audio: np.ndarray    # [n_audio] at audio_rate_hz
    sentences: list
    eeg_rate_hz: float = EEG_RATE_HZ
    audio_rate_hz: float = AUDIO_RATE_HZ

    def validate(self) -> "RawTrial":
        eeg = check_array(self.eeg, name="eeg", ndim=2)
        audio = check_array(self.audio, name="audio", ndim=1)
        check_positive(self.eeg_rate_hz, name="eeg_rate_hz")
        check_positive(self.audio_rate_hz, name="audio_rate_hz")
        eeg_dur = eeg.shape[1] / self.eeg_rate_hz
        audio_dur = audio.shape[0] / self.audio_rate_hz
        if abs(eeg_dur - audio_dur) > 1.0:
            raise ValueError(
                f"{self.subject_id} trial {self.trial_id}: EEG lasts {eeg_dur:.2f} s "
                f"but audio lasts {audio_dur:.2f} s; streams are misaligned"
            )
        duration = min(eeg_dur, audio_dur)
        if not self.sentences:
            raise ValueError(f"trial {self.trial_id}: no sentence annotations")
        prev_end = 0.0
        for i, sent in enumerate(self.sentences):
            if not sent.start_s < sent.end_s:
                raise ValueError(f"sentence {i}: empty span ({sent.start_s}, {sent.end_s})")
            if sent.start_s < prev_end:
                raise ValueError(f"sentence {i}: overlaps the previous sentence")
            if sent.end_s > duration:
                raise ValueError(
                    f"sentence {i} ends at {sent.end_s:.2f} s but the trial "
                    f"lasts {duration:.2f} s"
                )
            if not sent.words:
                raise ValueError(f"sentence {i}: no word annotations")
            w_prev = sent.start_s
            for j, w in enumerate(sent.words):
                if not (sent.start_s <= w.start_s < w.end_s <= sent.end_s):
                    raise ValueError(f"sentence {i} word {j}: outside its sentence")
                if w.start_s < w_prev:
                    raise ValueError(f"sentence {i} word {j}: overlaps the previous word")
                w_prev = w.end_s
            prev_end = sent.end_s
        return self


@dataclass
class SentenceRecord:
    """Aligned per-sentence features: EEG and log-mel share a 64 Hz grid."""

    subject_id: str
    trial_id: int
    sentence_index: int
    eeg_feat: np.ndarray    # [n_channels, n_frames] float32
    mel_feat: np.ndarray    # [n_mel, n_frames] float32
    word_bounds_64: list    # [(start, end)] frames at 64 Hz
    word_bounds_feat: list  # [(start, end)] frames at 64/3 Hz

    @property
    def n_frames(self) -> int:
        return self.eeg_feat.shape[1]

    @property
    def n_words(self) -> int:
        return len(self.word_bounds_feat)

    def key(self):
        return (self.subject_id, self.trial_id, self.sentence_index)

    def validate(self) -> "SentenceRecord":
        from ..segmentation import WordBoundaries

        eeg = check_array(self.eeg_feat, name="eeg_feat", ndim=2)
        mel = check_array(self.mel_feat, name="mel_feat", ndim=2)
        if eeg.shape[1] != mel.shape[1]:
            raise ValueError(
                f"{self.key()}: eeg has {eeg.shape[1]} frames but mel has {mel.shape[1]}"
            )
        if len(self.word_bounds_64) != len(self.word_bounds_feat):
            raise ValueError(f"{self.key()}: word span counts disagree across rates")
        WordBoundaries(self.word_bounds_64, rate_hz=FEATURE_RATE_HZ).validate(eeg.shape[1])
        WordBoundaries(self.word_bounds_feat, rate_hz=FEATURE_RATE_HZ / 3.0).validate(
            math.ceil(eeg.shape[1] / 3)
        )
        return self


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs of the synthetic corpus generator."""

    n_subjects: int = 10
    n_trials: int = 4
    sentences_per_trial: int = 40
    words_per_sentence: tuple = (3, 6)
    word_len_frames: tuple = (6, 12)   # at 64 Hz
    coupling: float = 1.0
    noise_sigma: float = 0.1
    seed: int = 0

    def validate(self) -> "SyntheticSpec":
        check_int(self.n_subjects, name="n_subjects", minimum=1)
        check_int(self.n_trials, name="n_trials", minimum=1)
        check_int(self.sentences_per_trial, name="sentences_per_trial", minimum=1)
        for name in ("words_per_sentence", "word_len_frames"):
            lo, hi = getattr(self, name)
            check_int(lo, name=name, minimum=1)
            check_int(hi, name=name, minimum=lo)
        if not 0.0 <= self.coupling <= 1.0:
            raise ValueError(f"coupling must be in [0, 1], got {self.coupling}")
        if self.noise_sigma < 0.0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.coupling == 0.0 and self.noise_sigma == 0.0:
            raise ValueError("coupling and noise_sigma cannot both be zero")
        check_int(self.seed, name="seed", minimum=0)
        return self

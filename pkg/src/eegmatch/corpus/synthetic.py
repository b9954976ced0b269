"""Seeded synthetic speech/EEG corpus with a known coupling.

Each trial has a latent script: a sequence of sentences, each a sequence
of words, where every word is a run of two to four phone-like segments
carrying their own per-band spectral profiles. The audio renders those
profiles as enveloped sinusoid mixtures; the EEG applies a corpus-wide
random linear convolutional map to the per-band drive (segment-rate gain
modulation) and adds band-limited pink-ish noise:

    eeg = coupling * G(stimulus) + noise_sigma * n(t)

Segment profiles share a slowly drifting per-trial base, so sentences
from the same trial have overlapping global statistics and the segment
sequence, not the sentence mean, is what identifies a sentence. The
within-word segment changes keep the spectrogram varying at the sub-word
time scale, the way phone transitions do in natural speech, instead of
holding one value per word. All draws descend from ``SyntheticSpec.seed``;
the same spec reproduces the corpus bit-for-bit, and the audio of a trial
is shared by every subject.
"""

from __future__ import annotations

import numpy as np

from ..speech_features import hz_to_mel, mel_to_hz
from .types import (
    AUDIO_RATE_HZ,
    EEG_RATE_HZ,
    FEATURE_RATE_HZ,
    N_EEG_CHANNELS,
    RawTrial,
    SentenceAnnotation,
    SyntheticSpec,
    WordSpan,
)

N_BANDS = 10
KERNEL_TAPS = 96          # ~190 ms at 512 Hz
KERNEL_MAX_HZ = 28.0      # keep the response inside the EEG analysis band
LEAD_FRAMES = 32          # silence before the first and after the last sentence
GAP_FRAMES = 16           # silence between sentences
RAMP_MS = 8.0
AUDIO_SCALE = 0.06
AUDIO_NOISE = 5e-4
BASE_RANGE = (0.4, 0.9)
WORD_SPREAD = 0.55
WORD_AMP_SIGMA = 0.35     # lognormal loudness variation from word to word
SEGMENTS_PER_WORD = (2, 4)
MIN_SEGMENT_FRAMES = 2    # ~31 ms, about the shortest phone
# the per-sentence random walk leaves neighbouring sentences spectrally
# confusable while distant ones separate, as in continuous narration
DRIFT_STEP = 0.12
DRIFT_CLIP = 0.35
SUBJECT_GAIN_SD = 0.05

# script/audio draws per trial, the stimulus->response map, per-subject
# gains and per-recording noise all live on separate child streams
_DOM_SCRIPT, _DOM_MAP, _DOM_SUBJECT, _DOM_NOISE = range(4)

_SAMPLES_64 = {EEG_RATE_HZ: int(EEG_RATE_HZ / FEATURE_RATE_HZ),
               AUDIO_RATE_HZ: int(AUDIO_RATE_HZ / FEATURE_RATE_HZ)}


def _rng(seed, *path):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))


def carrier_frequencies(n_bands: int = N_BANDS) -> np.ndarray:
    return mel_to_hz(np.linspace(hz_to_mel(300.0), hz_to_mel(5500.0), n_bands))


def _ramped_envelope(n: int, rate_hz: float) -> np.ndarray:
    ramp = max(2, int(round(RAMP_MS / 1000.0 * rate_hz)))
    ramp = min(ramp, n // 2)
    env = np.ones(n)
    if ramp:
        up = 0.5 * (1.0 - np.cos(np.pi * np.arange(ramp) / ramp))
        env[:ramp] = up
        env[n - ramp:] = up[::-1]
    return env


def _segment_lengths(rng, length: int):
    """Split a word of `length` frames into phone-like pieces."""
    lo, hi = SEGMENTS_PER_WORD
    k = min(int(rng.integers(lo, hi + 1)), max(1, length // MIN_SEGMENT_FRAMES))
    extra = rng.multinomial(length - k * MIN_SEGMENT_FRAMES, np.full(k, 1.0 / k))
    return (MIN_SEGMENT_FRAMES + extra).tolist()


def _trial_script(spec: SyntheticSpec, trial_id: int):
    """Word timing (64 Hz frames) and per-segment band profiles for one trial."""
    rng = _rng(spec.seed, _DOM_SCRIPT, trial_id)
    base = rng.uniform(*BASE_RANGE, size=N_BANDS)
    drift = np.zeros(N_BANDS)
    cursor = LEAD_FRAMES
    sentences = []
    for _ in range(spec.sentences_per_trial):
        drift = np.clip(drift + rng.normal(0.0, DRIFT_STEP, size=N_BANDS),
                        -DRIFT_CLIP, DRIFT_CLIP)
        sentence_base = base * (1.0 + drift)
        n_words = int(rng.integers(spec.words_per_sentence[0],
                                   spec.words_per_sentence[1] + 1))
        words = []
        for _ in range(n_words):
            length = int(rng.integers(spec.word_len_frames[0],
                                      spec.word_len_frames[1] + 1))
            loudness = float(np.exp(rng.normal(0.0, WORD_AMP_SIGMA)))
            segments = []
            seg_cursor = cursor
            for seg_len in _segment_lengths(rng, length):
                profile = loudness * sentence_base * (
                    1.0 + WORD_SPREAD * rng.uniform(-1.0, 1.0, size=N_BANDS))
                profile = np.clip(profile, 0.05, None)
                phases = rng.uniform(0.0, 2.0 * np.pi, size=N_BANDS)
                segments.append((seg_cursor, seg_cursor + seg_len, profile, phases))
                seg_cursor += seg_len
            words.append((cursor, cursor + length, segments))
            cursor += length
        sentences.append(words)
        cursor += GAP_FRAMES
    total_frames = cursor - GAP_FRAMES + LEAD_FRAMES
    return sentences, total_frames, rng


def _render_stimulus(sentences, total_frames):
    """Audio at 16 kHz and the per-band drive at 512 Hz for one trial."""
    carriers = carrier_frequencies()
    n_audio = total_frames * _SAMPLES_64[AUDIO_RATE_HZ]
    n_eeg = total_frames * _SAMPLES_64[EEG_RATE_HZ]
    audio = np.zeros(n_audio)
    drive = np.zeros((N_BANDS, n_eeg))
    for words in sentences:
        for _, _, segments in words:
            for start_f, end_f, profile, phases in segments:
                a0, a1 = (start_f * _SAMPLES_64[AUDIO_RATE_HZ],
                          end_f * _SAMPLES_64[AUDIO_RATE_HZ])
                t = np.arange(a0, a1) / AUDIO_RATE_HZ
                env = _ramped_envelope(a1 - a0, AUDIO_RATE_HZ)
                tones = np.sin(2.0 * np.pi * carriers[:, None] * t[None, :]
                               + phases[:, None])
                audio[a0:a1] += AUDIO_SCALE * env * (profile @ tones)
                e0, e1 = (start_f * _SAMPLES_64[EEG_RATE_HZ],
                          end_f * _SAMPLES_64[EEG_RATE_HZ])
                drive[:, e0:e1] = profile[:, None] * _ramped_envelope(e1 - e0,
                                                                      EEG_RATE_HZ)
    return audio, drive


def _stimulus_map(spec: SyntheticSpec):
    """The fixed random linear convolutional map G shared by the corpus.

    Kernels are band-limited below the EEG analysis band edge so the
    response energy survives the preprocessing filters on every channel.
    """
    rng = _rng(spec.seed, _DOM_MAP)
    mixing = rng.standard_normal((N_EEG_CHANNELS, N_BANDS)) / np.sqrt(N_BANDS)
    white = rng.standard_normal((N_BANDS, KERNEL_TAPS))
    freq = np.fft.rfftfreq(KERNEL_TAPS, d=1.0 / EEG_RATE_HZ)
    kernels = np.fft.irfft(np.fft.rfft(white, axis=1) * (freq <= KERNEL_MAX_HZ),
                           KERNEL_TAPS, axis=1) * np.hanning(KERNEL_TAPS)
    kernels /= np.linalg.norm(kernels, axis=1, keepdims=True)
    return mixing, kernels


def _band_limited_noise(rng, n_channels, n_samples):
    """Pink-ish noise: spectrum ~ f^-1/2, zeroed above 32 Hz, unit std."""
    white = rng.standard_normal((n_channels, n_samples))
    spec = np.fft.rfft(white, axis=1)
    f = np.fft.rfftfreq(n_samples, d=1.0 / EEG_RATE_HZ)
    shape = 1.0 / np.sqrt(np.maximum(f, 1.0))
    shape[f > 32.0] = 0.0
    noise = np.fft.irfft(spec * shape[None, :], n_samples, axis=1)
    return noise / noise.std(axis=1, keepdims=True)


def _annotations(sentences):
    out = []
    for words in sentences:
        spans = tuple(
            WordSpan(start_f / FEATURE_RATE_HZ, end_f / FEATURE_RATE_HZ)
            for start_f, end_f, _ in words
        )
        out.append(SentenceAnnotation(spans[0].start_s, spans[-1].end_s, spans))
    return out


def iter_synthetic_trials(spec: SyntheticSpec):
    """Yield raw trials in trial-major order, reusing each trial's stimulus."""
    spec.validate()
    mixing, kernels = _stimulus_map(spec)
    gains = np.stack([
        np.clip(1.0 + _rng(spec.seed, _DOM_SUBJECT, s).normal(
            0.0, SUBJECT_GAIN_SD, size=N_EEG_CHANNELS), 0.85, 1.15)
        for s in range(spec.n_subjects)
    ])
    for trial_id in range(spec.n_trials):
        sentences, total_frames, script_rng = _trial_script(spec, trial_id)
        audio, drive = _render_stimulus(sentences, total_frames)
        audio = audio + AUDIO_NOISE * script_rng.standard_normal(audio.shape[0])
        annotations = _annotations(sentences)
        if spec.coupling > 0.0:
            filtered = np.stack([
                np.convolve(drive[k], kernels[k], mode="same")
                for k in range(N_BANDS)
            ])
            signal = mixing @ filtered
            signal /= signal.std(axis=1, keepdims=True)
        else:
            signal = None
        for subject in range(spec.n_subjects):
            eeg = np.zeros((N_EEG_CHANNELS, drive.shape[1]))
            if signal is not None:
                eeg += spec.coupling * gains[subject][:, None] * signal
            if spec.noise_sigma > 0.0:
                noise_rng = _rng(spec.seed, _DOM_NOISE, subject, trial_id)
                eeg += spec.noise_sigma * _band_limited_noise(
                    noise_rng, N_EEG_CHANNELS, drive.shape[1])
            yield RawTrial(
                subject_id=f"sub{subject:02d}",
                trial_id=trial_id,
                eeg=eeg,
                audio=audio.copy(),
                sentences=list(annotations),
            ).validate()


def synthesize_corpus(spec: SyntheticSpec):
    """Materialize the whole corpus as a list of raw trials."""
    return list(iter_synthetic_trials(spec))

"""Log-mel spectrogram features for 16 kHz speech.

Frames are 500 samples (31.25 ms) with a 250-sample hop, so the frame
rate is exactly 64 Hz and lines up with the downsampled EEG. The final
partial window is dropped: a signal of N samples yields
``1 + floor((N - 500) / 250)`` frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import check_array, check_int, check_positive

AUDIO_RATE_HZ = 16000.0


@dataclass(frozen=True)
class MelConfig:
    n_filters: int = 28
    f_min: float = 0.0
    f_max: float = 8000.0
    preemphasis: float = 0.97
    win_samples: int = 500
    hop_samples: int = 250
    n_fft: int = 512
    log_floor: float = 1e-10

    def validate(self) -> "MelConfig":
        check_int(self.n_filters, name="n_filters", minimum=1)
        check_int(self.win_samples, name="win_samples", minimum=2)
        check_int(self.hop_samples, name="hop_samples", minimum=1)
        check_int(self.n_fft, name="n_fft", minimum=self.win_samples)
        check_positive(self.f_max, name="f_max")
        check_positive(self.log_floor, name="log_floor")
        if not 0.0 <= self.f_min < self.f_max:
            raise ValueError(f"need 0 <= f_min < f_max, got ({self.f_min}, {self.f_max})")
        if self.f_max > AUDIO_RATE_HZ / 2:
            raise ValueError(f"f_max {self.f_max} exceeds Nyquist {AUDIO_RATE_HZ / 2}")
        if not 0.0 <= self.preemphasis < 1.0:
            raise ValueError(f"preemphasis must be in [0, 1), got {self.preemphasis}")
        return self


def hz_to_mel(f_hz):
    return 2595.0 * np.log10(1.0 + np.asarray(f_hz, dtype=float) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=float) / 2595.0) - 1.0)


def preemphasize(audio, coefficient: float):
    """First-difference pre-emphasis; the first sample passes through."""
    x = check_array(audio, name="audio", ndim=1, min_len=1)
    y = np.empty_like(x)
    y[0] = x[0]
    y[1:] = x[1:] - coefficient * x[:-1]
    return y


def mel_filterbank(config: MelConfig) -> np.ndarray:
    """Triangular filters with centers equally spaced on the mel scale.

    Returns ``[n_filters, n_fft // 2 + 1]`` weights. Triangles are
    evaluated at the continuous bin frequencies rather than snapped to
    bin indices, so every interior FFT bin keeps nonzero total weight
    even where filters are narrower than a bin.
    """
    config.validate()
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(config.f_min), hz_to_mel(config.f_max),
                                     config.n_filters + 2))
    bin_hz = np.fft.rfftfreq(config.n_fft, d=1.0 / AUDIO_RATE_HZ)
    fb = np.zeros((config.n_filters, bin_hz.size))
    for m in range(config.n_filters):
        lo, mid, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        rising = (bin_hz - lo) / (mid - lo)
        falling = (hi - bin_hz) / (hi - mid)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def melspectrogram(audio, config: MelConfig, rate_hz: float = AUDIO_RATE_HZ):
    """Log-mel power spectrogram, ``[n_filters, n_frames]``."""
    config.validate()
    if rate_hz != AUDIO_RATE_HZ:
        raise ValueError(f"melspectrogram expects {AUDIO_RATE_HZ} Hz audio, got {rate_hz}")
    x = check_array(audio, name="audio", ndim=1)
    if x.shape[0] < config.win_samples:
        raise ValueError(
            f"audio of {x.shape[0]} samples is shorter than one "
            f"{config.win_samples}-sample window"
        )
    pre = preemphasize(x, config.preemphasis)
    n_frames = 1 + (pre.shape[0] - config.win_samples) // config.hop_samples
    idx = (np.arange(config.win_samples)[None, :]
           + config.hop_samples * np.arange(n_frames)[:, None])
    frames = pre[idx] * np.hamming(config.win_samples)[None, :]
    power = np.abs(np.fft.rfft(frames, n=config.n_fft, axis=1)) ** 2
    mel = mel_filterbank(config) @ power.T
    return np.log(mel + config.log_floor)

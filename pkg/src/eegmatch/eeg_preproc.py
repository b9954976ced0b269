"""EEG cleaning: band-pass, downsample, channel repair, re-reference, z-score.

All operations take ``[n_channels, n_samples]`` arrays and are pure
functions; the per-trial driver that chains them lives in
:mod:`eegmatch.pipeline`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import signal
from scipy.optimize import brentq

from .montage import BIOSEMI128_NEIGHBORS, DEFAULT_MASTOIDS
from .validation import check_array, check_int, check_positive

EEG_RATE_HZ = 512.0
FEATURE_RATE_HZ = 64.0
DECIMATION = 8

# forward-backward response template the band-pass design must meet,
# relative to the nominal (0.5, 32) band: flat to -1 dB over [1, 31] Hz,
# at least -30 dB at DC and from 64 Hz up
PASS_DB = -1.0
STOP_DB = -30.0
DESIGN_MARGIN_DB = 0.15

#: consistency factor making the MAD comparable to a standard deviation
MAD_SCALE = 1.4826
BAD_CHANNEL_MADS = 3.0


@dataclass(frozen=True)
class FilterSpec:
    """Band edges and order of the zero-phase Butterworth band-pass."""

    low_hz: float = 0.5
    high_hz: float = 32.0
    order: int = 4

    def validate(self) -> "FilterSpec":
        check_positive(self.low_hz, name="low_hz")
        check_positive(self.high_hz, name="high_hz")
        check_int(self.order, name="order", minimum=1)
        if self.high_hz <= self.low_hz:
            raise ValueError(
                f"high_hz must exceed low_hz, got ({self.low_hz}, {self.high_hz})"
            )
        return self


@dataclass
class PreprocReport:
    """Per-trial channel statistics recorded before any cleaning."""

    subject_id: str
    trial_id: int
    channel_variance: list
    channel_kurtosis: list
    bad_channels: list = field(default_factory=list)


def _doublepass_db(sos, freqs_hz, rate_hz):
    w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=float) / rate_hz
    _, h = signal.sosfreqz(sos, worN=w)
    return 40.0 * np.log10(np.maximum(np.abs(h), 1e-300))


@lru_cache(maxsize=8)
def _design(low_hz, high_hz, order, rate_hz):
    # Passband/stopband checkpoints scale with the nominal band so
    # non-default bands keep a proportionate template.
    pass_lo = 2.0 * low_hz
    pass_hi = high_hz * (31.0 / 32.0)
    stop_hi = 2.0 * high_hz

    def sos_for(corner):
        return signal.butter(order, [low_hz, corner], btype="bandpass",
                             fs=rate_hz, output="sos")

    # A Butterworth corner placed at the band edge cannot hold -1 dB at
    # 31/32 of the edge once the filter runs forward and backward, so the
    # upper natural corner is widened until the passband template is met
    # with a small margin.
    target = PASS_DB + DESIGN_MARGIN_DB

    def gain_error(corner):
        return _doublepass_db(sos_for(corner), [pass_hi], rate_hz)[0] - target

    upper = min(rate_hz / 2.0 * 0.95, 4.0 * high_hz)
    if gain_error(upper) < 0:
        raise ValueError(
            f"order {order} cannot reach {target} dB at {pass_hi:.6g} Hz"
        )
    corner = brentq(gain_error, high_hz, upper, xtol=1e-6)
    sos = sos_for(corner)

    grid = np.linspace(pass_lo, pass_hi, 601)
    stop = np.concatenate(([1e-4], np.linspace(stop_hi, rate_hz / 2.0 * 0.999, 200)))
    if _doublepass_db(sos, grid, rate_hz).min() < PASS_DB or \
            _doublepass_db(sos, stop, rate_hz).max() > STOP_DB:
        raise ValueError(
            f"order {order} band-pass cannot meet the {PASS_DB}/{STOP_DB} dB "
            f"template for band ({low_hz}, {high_hz}) Hz at {rate_hz} Hz"
        )
    return sos


def design_bandpass(spec: FilterSpec, rate_hz: float = EEG_RATE_HZ):
    """Design the zero-phase band-pass as second-order sections."""
    spec.validate()
    return _design(float(spec.low_hz), float(spec.high_hz), int(spec.order),
                   float(rate_hz))


def min_filter_length(spec: FilterSpec, rate_hz: float = EEG_RATE_HZ) -> int:
    # three times the slowest time constant in the band
    return int(np.ceil(3.0 * rate_hz / spec.low_hz))


def bandpass(eeg, spec: FilterSpec, rate_hz: float = EEG_RATE_HZ):
    """Apply the band-pass forward and backward (zero phase distortion)."""
    x = check_array(eeg, name="eeg", ndim=2)
    n_min = min_filter_length(spec, rate_hz)
    if x.shape[-1] < n_min:
        raise ValueError(
            f"segment of {x.shape[-1]} samples is too short to filter; "
            f"the {spec.low_hz} Hz edge needs at least {n_min}"
        )
    sos = design_bandpass(spec, rate_hz)
    return signal.sosfiltfilt(sos, x, axis=-1)


@lru_cache(maxsize=2)
def _guard_fir(rate_hz):
    # defensive low-pass at 30 Hz ahead of the 1/8 polyphase step
    return signal.firwin(385, 30.0, fs=rate_hz, window=("kaiser", 4.0))


def resample_to_64(eeg, rate_hz: float = EEG_RATE_HZ):
    """Polyphase 1/8 resample from 512 Hz to the 64 Hz feature rate.

    Output length is exactly ``floor(n_samples / 8)``.
    """
    x = check_array(eeg, name="eeg", ndim=2, min_len=DECIMATION)
    if rate_hz != EEG_RATE_HZ:
        raise ValueError(
            f"resample_to_64 expects {EEG_RATE_HZ} Hz input, got {rate_hz}"
        )
    y = signal.resample_poly(x, 1, DECIMATION, axis=-1, window=_guard_fir(rate_hz))
    return y[..., : x.shape[-1] // DECIMATION]


def detect_bad_channels(eeg):
    """Flag channels whose log-variance sits 3 scaled MADs from the median.

    Zero-variance (flat) channels are always flagged. Raises if every
    channel is flagged, since the recording is then unusable.
    """
    x = check_array(eeg, name="eeg", ndim=2, min_len=2)
    var = x.var(axis=1)
    flat = var == 0.0
    bad = set(np.where(flat)[0])
    alive = ~flat
    if alive.any():
        log_var = np.log(var[alive])
        med = np.median(log_var)
        mad = np.median(np.abs(log_var - med))
        dev = np.abs(log_var - med)
        flagged = dev > BAD_CHANNEL_MADS * MAD_SCALE * mad
        bad.update(np.where(alive)[0][flagged])
    if len(bad) == x.shape[0]:
        raise ValueError("every channel was flagged as bad; refusing to continue")
    return sorted(int(c) for c in bad)


def repair_channels(eeg, bad, neighbor_map=None):
    """Replace bad channels by the mean of their non-bad neighbors.

    A bad channel with no usable neighbor falls back to the global mean
    of the good channels, with a warning.
    """
    x = check_array(eeg, name="eeg", ndim=2)
    if neighbor_map is None:
        neighbor_map = BIOSEMI128_NEIGHBORS
    bad = sorted({check_int(c, name="bad channel", minimum=0,
                            maximum=x.shape[0] - 1) for c in bad})
    good = [c for c in range(x.shape[0]) if c not in set(bad)]
    if not good:
        raise ValueError("no good channels left to repair from")
    y = x.copy()
    good_mean = x[good].mean(axis=0)
    for c in bad:
        donors = [n for n in neighbor_map.get(c, ()) if n in good]
        if donors:
            y[c] = x[donors].mean(axis=0)
        else:
            warnings.warn(
                f"channel {c} has no good neighbor; using the global mean "
                f"of {len(good)} good channels"
            )
            y[c] = good_mean
    return y


def rereference_mastoids(eeg, mastoids=DEFAULT_MASTOIDS):
    """Subtract the average of the two mastoid channels from every channel."""
    x = check_array(eeg, name="eeg", ndim=2)
    m1, m2 = (check_int(m, name="mastoid index", minimum=0,
                        maximum=x.shape[0] - 1) for m in mastoids)
    if m1 == m2:
        raise ValueError(f"mastoid indices must differ, got ({m1}, {m2})")
    return x - 0.5 * (x[m1] + x[m2])


def zscore_channels(eeg):
    """Standardize each channel to zero mean, unit population std."""
    x = check_array(eeg, name="eeg", ndim=2, min_len=2)
    mean = x.mean(axis=1, keepdims=True)
    std = x.std(axis=1, keepdims=True)
    dead = np.where(std[:, 0] == 0.0)[0]
    if dead.size:
        raise ValueError(
            f"cannot z-score constant channel(s) {dead.tolist()}; repair them first"
        )
    return (x - mean) / std

"""Masking curves and the perceptual weighting filters derived from them.

The masking model is a compact Bark-domain model in the style of classic
audio-coding psychoacoustics rather than a full auditory model:

1. power spectrum of the (already windowed) frame, full scale 0 dBFS = 96 dB SPL;
2. every bin's power is spread over the Bark axis with a triangular
   spreading function (+25 dB/Bark below the masker, -10 dB/Bark above);
3. a fixed -14 dB masking offset is applied;
4. the result is floored by the threshold in quiet (Terhardt's approximation).

Any callable with the signature ``model(frame, sample_rate) -> MaskingCurve``
can replace :class:`BarkSpreadingModel` in the pipeline.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

FULL_SCALE_SPL = 96.0
MASKING_OFFSET_DB = -14.0
SLOPE_BELOW_DB = 25.0
SLOPE_ABOVE_DB = 10.0


def bark(f):
    """Zwicker-style critical-band rate in Bark."""
    f = np.asarray(f, dtype=float)
    return 13.0 * np.arctan(0.76 * f / 1000.0) + 3.5 * np.arctan((f / 7500.0) ** 2)


def threshold_in_quiet_spl(f):
    """Terhardt's threshold in quiet in dB SPL (frequencies below 20 Hz evaluated at 20 Hz)."""
    khz = np.maximum(np.asarray(f, dtype=float), 20.0) / 1000.0
    return 3.64 * khz ** -0.8 - 6.5 * np.exp(-0.6 * (khz - 3.3) ** 2) + 1e-3 * khz ** 4


def threshold_in_quiet_power(f):
    """Threshold in quiet as full-scale-relative power (0 dB SPL == -96 dBFS)."""
    return 10.0 ** ((threshold_in_quiet_spl(f) - FULL_SCALE_SPL) / 10.0)


def bin_frequencies(n_fft: int, sample_rate: float) -> np.ndarray:
    return np.fft.rfftfreq(n_fft, 1.0 / sample_rate)


@lru_cache(maxsize=16)
def _spreading_matrix(n_fft: int, sample_rate: float) -> np.ndarray:
    z = bark(bin_frequencies(n_fft, sample_rate))
    dz = z[:, None] - z[None, :]  # maskee minus masker
    level = np.where(dz < 0, SLOPE_BELOW_DB * dz, -SLOPE_ABOVE_DB * dz)
    spread = 10.0 ** ((level + MASKING_OFFSET_DB) / 10.0)
    spread.setflags(write=False)
    return spread


def frame_power(frame: np.ndarray) -> np.ndarray:
    """Per-bin power, scaled so a full-scale sinusoid on a bin centre reads ~0 dBFS."""
    n = frame.shape[-1]
    return np.abs(np.fft.rfft(frame)) ** 2 * (2.0 / n) ** 2


@dataclass
class MaskingCurve:
    """Masking threshold per FFT bin, stored as full-scale-relative power."""

    power: np.ndarray
    frequencies: np.ndarray
    segment_index: int | None = None

    @classmethod
    def from_amplitude(cls, amplitude, frequencies, segment_index=None) -> "MaskingCurve":
        return cls(np.asarray(amplitude, dtype=float) ** 2, frequencies, segment_index)

    @property
    def amplitude(self) -> np.ndarray:
        return np.sqrt(self.power)

    @property
    def db_spl(self) -> np.ndarray:
        return 10.0 * np.log10(self.power) + FULL_SCALE_SPL

    @property
    def n_fft(self) -> int:
        return 2 * (self.power.size - 1)


class BarkSpreadingModel:
    """Simplified masking model (see module docstring)."""

    def __call__(self, frame, sample_rate: float, segment_index: int | None = None) -> MaskingCurve:
        frame = np.asarray(frame, dtype=float)
        n = frame.shape[-1]
        if n < 64 or n % 2:
            raise ValueError(f"masking frames must have even length >= 64, got {n}")
        freqs = bin_frequencies(n, sample_rate)
        spread = _spreading_matrix(n, float(sample_rate)) @ frame_power(frame)
        power = np.maximum(spread, threshold_in_quiet_power(freqs))
        return MaskingCurve(power, freqs, segment_index)


DEFAULT_MODEL = BarkSpreadingModel()


def masking_curve(segment, sample_rate: float, segment_index: int | None = None, model=DEFAULT_MODEL) -> MaskingCurve:
    return model(segment, sample_rate, segment_index)


def quiet_curve(n_fft: int, sample_rate: float) -> MaskingCurve:
    """The masking curve of silence: the threshold in quiet."""
    freqs = bin_frequencies(n_fft, sample_rate)
    return MaskingCurve(threshold_in_quiet_power(freqs), freqs)


def averaged_masking_curve(curves) -> MaskingCurve:
    """Per-bin mean of power across curves."""
    curves = list(curves)
    if not curves:
        raise ValueError("need at least one masking curve")
    size = curves[0].power.size
    if any(c.power.size != size for c in curves):
        raise ValueError("masking curves have different bin counts")
    power = np.mean([c.power for c in curves], axis=0)
    return MaskingCurve(power, curves[0].frequencies)


@dataclass
class WeightingFilter:
    """Linear-phase FIR weighting filter; ``delay`` is its group delay in samples."""

    taps: np.ndarray
    point: int | None = None
    segment_index: int | None = None

    @property
    def delay(self) -> int:
        return (self.taps.size - 1) // 2

    def response(self, n_fft: int) -> np.ndarray:
        """Magnitude response on the ``n_fft`` bin grid."""
        return np.abs(np.fft.rfft(self.taps, n_fft))

    @classmethod
    def identity(cls, point=None) -> "WeightingFilter":
        return cls(np.ones(1), point)


def weighting_filter(curve: MaskingCurve, n_taps: int = 129, point: int | None = None) -> WeightingFilter:
    """Frequency-sampling FIR with magnitude 1/curve, normalized to a maximum of 1.

    The zero-phase inverse FFT of the target is shifted to be causal and
    truncated to ``n_taps`` (odd) taps with a Hann taper, which keeps the
    filter exactly linear-phase.
    """
    n_fft = curve.n_fft
    if n_taps > n_fft:
        raise ValueError(f"{n_taps} taps exceed the curve's FFT length {n_fft}")
    if n_taps % 2 == 0:
        raise ValueError("weighting filters need an odd tap count for a symmetric linear-phase design")
    target = 1.0 / curve.amplitude
    target = target / np.max(target)
    impulse = np.fft.irfft(target, n_fft)
    half = n_taps // 2
    idx = np.arange(-half, half + 1)
    taps = impulse[idx % n_fft] * np.hanning(n_taps + 2)[1:-1]
    taps = 0.5 * (taps + taps[::-1])
    return WeightingFilter(taps, point, curve.segment_index)


def write_curves_csv(path, curves: dict[str, MaskingCurve]) -> None:
    """Long-format CSV: label, frequency_hz, threshold_db (dB SPL, 0 dBFS = 96 dB SPL)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["label", "frequency_hz", "threshold_db"])
        for label, c in curves.items():
            for fr, db in zip(c.frequencies, c.db_spl):
                w.writerow([label, repr(float(fr)), repr(float(db))])

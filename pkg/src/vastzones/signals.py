"""Audio buffers, linear convolution and weighted overlap-add framing."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

log = logging.getLogger(__name__)

DIRECT_MAX_TAPS = 64


@dataclass
class AudioSignal:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def energy(self) -> float:
        return float(np.sum(self.samples ** 2))


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def fft_convolve(x: np.ndarray, h: np.ndarray, axis: int = -1) -> np.ndarray:
    """Linear convolution along ``axis`` via zero-padded real FFTs; broadcasts over other axes."""
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    n_out = x.shape[axis] + h.shape[axis] - 1
    nfft = next_pow2(n_out)
    y = np.fft.irfft(np.fft.rfft(x, nfft, axis=axis) * np.fft.rfft(h, nfft, axis=axis), nfft, axis=axis)
    return np.take(y, np.arange(n_out), axis=axis)


def convolve(x, h) -> np.ndarray:
    """Full linear convolution of two 1-D sequences (length ``len(x) + len(h) - 1``).

    Short kernels (at most 64 taps) are convolved directly, longer ones by FFT.
    """
    x = np.asarray(x.samples if isinstance(x, AudioSignal) else x, dtype=float)
    h = np.asarray(h, dtype=float)
    if x.ndim != 1 or h.ndim != 1:
        raise ValueError("convolve expects 1-D sequences")
    if x.size == 0 or h.size == 0:
        raise ValueError("cannot convolve an empty sequence")
    if h.size <= DIRECT_MAX_TAPS:
        return np.convolve(x, h)
    return fft_convolve(x, h)


def direct_convolve(x, h) -> np.ndarray:
    """O(len(x) len(h)) reference convolution."""
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    out = np.zeros(x.size + h.size - 1)
    for k, hk in enumerate(h):
        out[k:k + x.size] += hk * x
    return out


def sine_window(n_len: int) -> np.ndarray:
    """g[n] = sin(pi (n + 1/2) / N); power-complementary at 50 % overlap."""
    if n_len < 2 or n_len % 2:
        raise ValueError(f"sine window length must be even and >= 2, got {n_len}")
    return np.sin(np.pi * (np.arange(n_len) + 0.5) / n_len)


@dataclass
class Segmenter:
    """Frame layout: length ``n_len``, ``overlap`` shared samples, analysis/synthesis window.

    With ``lead_in`` the first frame starts ``overlap`` samples before the
    signal, so every signal sample is covered by the same number of frames.
    """

    n_len: int
    overlap: int
    window: np.ndarray | None = None
    lead_in: bool = False

    def __post_init__(self):
        if not 0 <= self.overlap <= self.n_len - 1:
            raise ValueError(f"overlap must lie in [0, {self.n_len - 1}], got {self.overlap}")
        if self.window is None:
            self.window = sine_window(self.n_len)
        self.window = np.asarray(self.window, dtype=float)
        if self.window.shape != (self.n_len,):
            raise ValueError("window length must equal the frame length")

    @property
    def hop(self) -> int:
        return self.n_len - self.overlap

    @property
    def first_start(self) -> int:
        return -self.overlap if self.lead_in else 0

    def count(self, length: int) -> int:
        """Number of frames needed so the last frame starts beyond ``length - hop``."""
        return max(1, math.ceil((length - self.first_start) / self.hop))

    def starts(self, length: int) -> np.ndarray:
        """0-based global start of each frame: n_i = (N - eta)(i - 1) + first_start, i = 1..I."""
        return self.first_start + self.hop * np.arange(self.count(length))


def frame_slice(x: np.ndarray, start: int, n_len: int) -> np.ndarray:
    """Samples ``x[start:start+n_len]`` along the last axis, zero outside the signal."""
    x = np.asarray(x)
    out = np.zeros(x.shape[:-1] + (n_len,))
    lo, hi = max(start, 0), min(start + n_len, x.shape[-1])
    if hi > lo:
        out[..., lo - start:hi - start] = x[..., lo:hi]
    return out


def segment(x, seg: Segmenter) -> tuple[np.ndarray, np.ndarray]:
    """Split ``x`` into analysis-windowed frames.

    Returns ``(frames, starts)`` where ``frames`` has shape (I, N) and
    ``starts`` holds each frame's global start index. The tail is
    zero-padded.
    """
    x = np.asarray(x.samples if isinstance(x, AudioSignal) else x, dtype=float)
    starts = seg.starts(x.shape[-1])
    frames = np.stack([frame_slice(x, s, seg.n_len) for s in starts])
    return frames * seg.window, starts


def overlap_add(frames, seg: Segmenter, out_len: int, starts=None, synthesis: bool = True) -> np.ndarray:
    """Sum frames (synthesis-windowed unless ``synthesis=False``) at their start indices.

    Frames may be longer than the segment length (e.g. after linear
    filtering); portions falling outside ``[0, out_len)`` are dropped.
    """
    frames = np.asarray(frames, dtype=float)
    if starts is None:
        starts = seg.first_start + seg.hop * np.arange(frames.shape[0])
    if synthesis:
        if frames.shape[-1] != seg.n_len:
            raise ValueError("synthesis windowing needs frames of the segment length")
        frames = frames * seg.window
    out = np.zeros(frames.shape[1:-1] + (out_len,))
    width = frames.shape[-1]
    for frame, s in zip(frames, starts):
        lo, hi = max(s, 0), min(s + width, out_len)
        if hi > lo:
            out[..., lo:hi] += frame[..., lo - s:hi - s]
    return out


# --- WAV I/O -----------------------------------------------------------------

def read_wav(path) -> AudioSignal:
    """Read PCM16 / PCM32 / float WAV; samples normalized to +-1.0, shape (n,) or (n, channels)."""
    fs, data = wavfile.read(path)
    if data.dtype == np.int16:
        samples = data.astype(float) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(float) / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(float) - 128.0) / 128.0
    else:
        samples = data.astype(float)
    return AudioSignal(samples, int(fs))


def write_wav(path, signal: AudioSignal, fmt: str = "float32") -> int:
    """Write ``signal`` as ``"float32"`` or ``"pcm16"``; returns the number of clipped samples."""
    x = np.asarray(signal.samples, dtype=float)
    clipped = int(np.count_nonzero(np.abs(x) > 1.0))
    if clipped:
        log.warning("%s: %d samples exceed full scale and were clipped", path, clipped)
    x = np.clip(x, -1.0, 1.0)
    if fmt == "float32":
        data = x.astype(np.float32)
    elif fmt == "pcm16":
        data = np.round(x * 32767.0).astype(np.int16)
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")
    wavfile.write(path, int(signal.sample_rate), data)
    return clipped

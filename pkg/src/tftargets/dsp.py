"""Time-frequency analysis/synthesis and Mel projection.

Fixed front-end: 16 kHz audio, 640-point STFT with a 640-sample symmetric
Hamming window and a 160-sample hop, no padding, 321 positive-frequency bins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 16000
FFT_SIZE = 640
HOP = 160
NUM_BINS = FFT_SIZE // 2 + 1
CHUNK_LEN = 20
NUM_MEL = 80


class UnframeableInputError(ValueError):
    """Signal is shorter than one analysis window."""


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class ComplexSpectrogram:
    bins: np.ndarray  # F x T complex
    fft_size: int = FFT_SIZE
    hop: int = HOP

    @property
    def num_bins(self) -> int:
        return self.bins.shape[0]

    @property
    def num_frames(self) -> int:
        return self.bins.shape[1]

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.bins)

    @property
    def phase(self) -> np.ndarray:
        return np.angle(self.bins)


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray  # Q x F
    f_min: float = 0.0
    f_max: float = SAMPLE_RATE / 2
    centers_hz: np.ndarray | None = None

    @property
    def num_mel(self) -> int:
        return self.weights.shape[0]

    @property
    def num_bins(self) -> int:
        return self.weights.shape[1]


def hamming(length: int = FFT_SIZE) -> np.ndarray:
    """Symmetric Hamming window, ``0.54 - 0.46 cos(2 pi n / (L - 1))``."""
    n = np.arange(length)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * n / (length - 1))


def num_frames(num_samples: int, fft_size: int = FFT_SIZE, hop: int = HOP) -> int:
    if num_samples < fft_size:
        return 0
    return (num_samples - fft_size) // hop + 1


def peak_normalize(wav: Waveform) -> Waveform:
    peak = np.max(np.abs(wav.samples)) if len(wav) else 0.0
    if peak == 0:
        return wav
    return Waveform(wav.samples / peak, wav.sample_rate_hz)


def _frames(x: np.ndarray, fft_size: int, hop: int) -> np.ndarray:
    t = num_frames(len(x), fft_size, hop)
    view = np.lib.stride_tricks.sliding_window_view(x, fft_size)
    return view[: (t - 1) * hop + 1 : hop]


def stft(wav: Waveform | np.ndarray, fft_size: int = FFT_SIZE, hop: int = HOP) -> ComplexSpectrogram:
    """Frame ``l`` covers samples ``[l*hop, l*hop + fft_size)``; no padding."""
    if isinstance(wav, Waveform):
        if wav.sample_rate_hz != SAMPLE_RATE:
            raise ValueError(f"expected {SAMPLE_RATE} Hz audio, got {wav.sample_rate_hz}")
        x = wav.samples
    else:
        x = np.asarray(wav, dtype=np.float64)
    if len(x) < fft_size:
        raise UnframeableInputError(
            f"signal has {len(x)} samples, need at least {fft_size} for one frame"
        )
    frames = _frames(x, fft_size, hop) * hamming(fft_size)
    bins = np.fft.rfft(frames, n=fft_size, axis=1).T
    return ComplexSpectrogram(np.ascontiguousarray(bins), fft_size, hop)


def istft(spec: ComplexSpectrogram | np.ndarray, num_samples: int | None = None) -> Waveform:
    """Weighted overlap-add synthesis normalized per sample by the summed squared window.

    Samples not covered by any frame come out as zero.
    """
    if isinstance(spec, ComplexSpectrogram):
        bins, fft_size, hop = spec.bins, spec.fft_size, spec.hop
    else:
        bins, fft_size, hop = np.asarray(spec), FFT_SIZE, HOP
    t = bins.shape[1]
    covered = (t - 1) * hop + fft_size if t else 0
    if num_samples is None:
        num_samples = covered
    win = hamming(fft_size)
    frames = np.fft.irfft(bins.T, n=fft_size, axis=1) * win
    total = max(num_samples, covered)
    out = np.zeros(total)
    norm = np.zeros(total)
    w2 = win * win
    for l in range(t):
        start = l * hop
        out[start : start + fft_size] += frames[l]
        norm[start : start + fft_size] += w2
    nz = norm > 0
    out[nz] /= norm[nz]
    out[~nz] = 0.0
    return Waveform(out[:num_samples])


def chunk_frames(mag: np.ndarray, chunk_len: int = CHUNK_LEN) -> list[np.ndarray]:
    """Split ``F x T`` into non-overlapping ``F x chunk_len`` parts, dropping the remainder."""
    t = mag.shape[-1]
    if t < chunk_len:
        raise ValueError(f"need at least {chunk_len} frames, got {t}")
    n = t // chunk_len
    return [mag[..., i * chunk_len : (i + 1) * chunk_len] for i in range(n)]


def pad_chunks(mag: np.ndarray, chunk_len: int = CHUNK_LEN) -> np.ndarray:
    """Zero-pad the trailing partial chunk and stack; returns ``(n, F, chunk_len)``."""
    f, t = mag.shape
    n = -(-t // chunk_len)
    padded = np.zeros((f, n * chunk_len), dtype=mag.dtype)
    padded[:, :t] = mag
    return padded.reshape(f, n, chunk_len).transpose(1, 0, 2)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    num_mel: int = NUM_MEL,
    num_bins: int = NUM_BINS,
    sample_rate: int = SAMPLE_RATE,
    f_min: float = 0.0,
    f_max: float = SAMPLE_RATE / 2,
) -> MelFilterbank:
    """Unit-peak triangular filters with centers uniformly spaced on the Mel scale."""
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), num_mel + 2))
    freqs = np.linspace(0.0, sample_rate / 2, num_bins)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    return MelFilterbank(weights, f_min, f_max, edges[1:-1].copy())


def mel_project(fb: MelFilterbank | np.ndarray, mag: np.ndarray) -> np.ndarray:
    """``B @ mag`` along the frequency axis; accepts a leading batch axis."""
    weights = fb.weights if isinstance(fb, MelFilterbank) else np.asarray(fb)
    if mag.shape[-2] != weights.shape[1]:
        raise ValueError(
            f"filterbank expects {weights.shape[1]} bins, magnitude has {mag.shape[-2]}"
        )
    return np.matmul(weights, mag)

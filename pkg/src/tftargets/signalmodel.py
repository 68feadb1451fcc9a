"""Mixing at a prescribed SNR, noisy/clean phase difference, and IAM/PSM targets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import ComplexSpectrogram, Waveform

EPS_DIV = 1e-8
IAM_RANGE = (0.0, 10.0)
PSM_RANGE = (-10.0, 10.0)


@dataclass(frozen=True)
class Mixture:
    clean: Waveform
    noise_scaled: Waveform
    noisy: Waveform
    snr_db: float


@dataclass(frozen=True)
class Mask:
    values: np.ndarray
    kind: str  # "IAM" or "PSM"

    @property
    def clip_lo(self) -> float:
        return mask_range(self.kind)[0]

    @property
    def clip_hi(self) -> float:
        return mask_range(self.kind)[1]


def mask_range(kind: str) -> tuple[float, float]:
    if kind == "IAM":
        return IAM_RANGE
    if kind == "PSM":
        return PSM_RANGE
    raise ValueError(f"unknown mask kind {kind!r}")


def power(x: np.ndarray) -> float:
    return float(np.mean(np.square(x)))


def noise_gain(p_clean: float, p_noise: float, snr_db: float) -> float:
    return float(np.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0))))


def mix_at_snr(clean: Waveform, noise: Waveform, snr_db: float) -> Mixture:
    """Scale ``noise`` so the utterance-level clean-to-noise power ratio is ``snr_db``."""
    if len(clean) != len(noise):
        raise ValueError(f"length mismatch: clean {len(clean)}, noise {len(noise)}")
    if clean.sample_rate_hz != noise.sample_rate_hz:
        raise ValueError("sample rate mismatch")
    p_clean, p_noise = power(clean.samples), power(noise.samples)
    if p_clean == 0 or p_noise == 0:
        raise ValueError("SNR is undefined for a zero-power signal")
    g = noise_gain(p_clean, p_noise, snr_db)
    scaled = noise.samples * g
    rate = clean.sample_rate_hz
    return Mixture(clean, Waveform(scaled, rate), Waveform(clean.samples + scaled, rate), float(snr_db))


def measured_snr_db(mix: Mixture) -> float:
    return 10.0 * np.log10(power(mix.clean.samples) / power(mix.noise_scaled.samples))


def phase_difference(noisy_spec, clean_spec) -> np.ndarray:
    """``angle(Y) - angle(X)`` wrapped to ``(-pi, pi]``."""
    y = noisy_spec.bins if isinstance(noisy_spec, ComplexSpectrogram) else np.asarray(noisy_spec)
    x = clean_spec.bins if isinstance(clean_spec, ComplexSpectrogram) else np.asarray(clean_spec)
    if y.shape != x.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {x.shape}")
    theta = np.angle(y) - np.angle(x)
    # angle() lies in (-pi, pi], so the difference lies in (-2pi, 2pi)
    theta = np.where(theta > np.pi, theta - 2 * np.pi, theta)
    theta = np.where(theta <= -np.pi, theta + 2 * np.pi, theta)
    return theta


def _ratio(A, R):
    return np.asarray(A, dtype=np.float64) / np.maximum(np.asarray(R, dtype=np.float64), EPS_DIV)


def compute_iam(A: np.ndarray, R: np.ndarray) -> Mask:
    if np.shape(A) != np.shape(R):
        raise ValueError("A and R must have the same shape")
    return Mask(np.clip(_ratio(A, R), *IAM_RANGE), "IAM")


def compute_psm(A: np.ndarray, R: np.ndarray, theta: np.ndarray) -> Mask:
    if not np.shape(A) == np.shape(R) == np.shape(theta):
        raise ValueError("A, R and theta must have the same shape")
    return Mask(np.clip(_ratio(A, R) * np.cos(theta), *PSM_RANGE), "PSM")


def clip_mask(values: np.ndarray, kind: str) -> Mask:
    return Mask(np.clip(values, *mask_range(kind)), kind)


def apply_mask(mask: Mask | np.ndarray, R: np.ndarray) -> np.ndarray:
    """Element-wise product; negative products are floored at zero."""
    m = mask.values if isinstance(mask, Mask) else np.asarray(mask)
    if m.shape != np.shape(R):
        raise ValueError(f"shape mismatch: mask {m.shape}, magnitude {np.shape(R)}")
    return np.maximum(m * R, 0.0)

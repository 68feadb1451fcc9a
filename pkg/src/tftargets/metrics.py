"""Waveform and spectral quality proxies: SI-SDR, segmental SNR, log-spectral distance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp
from .dsp import Waveform

SI_SDR_CAP_DB = 100.0
SEG_SNR_RANGE_DB = (-10.0, 35.0)
EPS_LOG = 1e-7


@dataclass(frozen=True)
class MetricReport:
    si_sdr_db: float
    seg_snr_db: float
    lsd_db: float


def _samples(x) -> np.ndarray:
    return x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)


def _pair(reference, estimate):
    ref, est = _samples(reference), _samples(estimate)
    if ref.shape != est.shape:
        raise ValueError(f"length mismatch: reference {ref.shape}, estimate {est.shape}")
    return ref, est


def si_sdr(reference, estimate) -> float:
    """Scale-invariant SDR in dB, clamped to +-100 dB."""
    ref, est = _pair(reference, estimate)
    ref_energy = float(ref @ ref)
    if ref_energy == 0:
        raise ValueError("SI-SDR is undefined for a silent reference")
    target = (float(est @ ref) / ref_energy) * ref
    residual = est - target
    t, r = float(target @ target), float(residual @ residual)
    if r == 0:
        return SI_SDR_CAP_DB
    if t == 0:
        return -SI_SDR_CAP_DB
    return float(np.clip(10.0 * np.log10(t / r), -SI_SDR_CAP_DB, SI_SDR_CAP_DB))


def segmental_snr(reference, estimate, frame: int = dsp.FFT_SIZE, hop: int = dsp.HOP) -> float:
    """Mean per-frame SNR with frames clamped to [-10, 35] dB; silent reference frames skipped.

    Returns NaN when every frame is silent.
    """
    ref, est = _pair(reference, estimate)
    if len(ref) < frame:
        frame = len(ref)
    n = (len(ref) - frame) // hop + 1
    lo, hi = SEG_SNR_RANGE_DB
    values = []
    for i in range(n):
        r = ref[i * hop : i * hop + frame]
        e = r - est[i * hop : i * hop + frame]
        p_ref, p_err = float(r @ r), float(e @ e)
        if p_ref == 0:
            continue
        snr = hi if p_err == 0 else 10.0 * np.log10(p_ref / p_err)
        values.append(min(max(snr, lo), hi))
    return float(np.mean(values)) if values else float("nan")


def log_spectral_distance(reference, estimate) -> float:
    ref, est = _pair(reference, estimate)
    if len(ref) < dsp.FFT_SIZE:
        raise dsp.UnframeableInputError("log-spectral distance needs at least one STFT frame")
    a_ref = dsp.stft(ref).magnitude
    a_est = dsp.stft(est).magnitude
    diff = 20.0 * (np.log10(np.maximum(a_ref, EPS_LOG)) - np.log10(np.maximum(a_est, EPS_LOG)))
    per_frame = np.sqrt(np.mean(diff**2, axis=0))
    return float(np.sqrt(np.mean(per_frame**2)))


def report(reference, estimate) -> MetricReport:
    return MetricReport(si_sdr(reference, estimate), segmental_snr(reference, estimate),
                        log_spectral_distance(reference, estimate))

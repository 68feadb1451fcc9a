"""Utterance-level enhancement: chunk, estimate, mask or map, resynthesize with the noisy phase."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp
from .dsp import Waveform
from .estimator import EstimatorModel, forward_batch
from .objectives import ObjectiveId, as_objective, output_activation_for
from .signalmodel import Mask, apply_mask, clip_mask


@dataclass(frozen=True)
class EnhanceResult:
    enhanced: Waveform
    enhanced_mag: np.ndarray
    mask_used: Mask | None = None


def estimate_frames(model: EstimatorModel, noisy_mag: np.ndarray, aux: np.ndarray | None = None) -> np.ndarray:
    """Network output for every frame of an ``F x T`` magnitude, via zero-padded chunks."""
    t = noisy_mag.shape[1]
    chunks = dsp.pad_chunks(noisy_mag, model.chunk_len)
    if aux is not None:
        aux = np.asarray(aux, dtype=np.float64).reshape(len(chunks), -1)
    out = forward_batch(model, chunks, aux)
    return out.transpose(1, 0, 2).reshape(noisy_mag.shape[0], -1)[:, :t]


def synthesize(mag: np.ndarray, noisy_spec: dsp.ComplexSpectrogram, num_samples: int) -> Waveform:
    """ISTFT of ``mag`` combined with the noisy phase."""
    bins = mag * np.exp(1j * noisy_spec.phase)
    return dsp.istft(dsp.ComplexSpectrogram(bins, noisy_spec.fft_size, noisy_spec.hop), num_samples)


def enhance_from_output(obj: ObjectiveId | str, net_out: np.ndarray, noisy_spec: dsp.ComplexSpectrogram,
                        num_samples: int) -> EnhanceResult:
    obj = as_objective(obj)
    R = noisy_spec.magnitude
    mask = None
    if obj.outputs_mask:
        mask = clip_mask(net_out, obj.mask_kind)
        mag = apply_mask(mask, R)
    else:
        # PSSA-DM may emit negative values; a magnitude cannot
        mag = np.maximum(net_out, 0.0)
    return EnhanceResult(synthesize(mag, noisy_spec, num_samples), mag, mask)


def enhance_utterance(model: EstimatorModel, obj: ObjectiveId | str, noisy: Waveform,
                      aux: np.ndarray | None = None) -> EnhanceResult:
    obj = as_objective(obj)
    expected = output_activation_for(obj)
    if model.output_activation != expected:
        raise ValueError(f"{obj.name} needs a {expected} output, model has {model.output_activation}")
    spec = dsp.stft(noisy)
    if spec.num_bins != model.num_bins:
        raise ValueError(f"model expects {model.num_bins} bins, STFT has {spec.num_bins}")
    out = estimate_frames(model, spec.magnitude, aux)
    return enhance_from_output(obj, out, spec, len(noisy))

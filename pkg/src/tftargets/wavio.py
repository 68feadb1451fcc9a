"""16-bit PCM mono WAV reading and writing at 16 kHz."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .dsp import SAMPLE_RATE, Waveform


class WavFormatError(ValueError):
    pass


def read_wav(path: str | Path) -> Waveform:
    try:
        with wave.open(str(path), "rb") as f:
            channels, width, rate, n = f.getnchannels(), f.getsampwidth(), f.getframerate(), f.getnframes()
            raw = f.readframes(n)
    except (wave.Error, EOFError) as exc:
        raise WavFormatError(f"{path}: not a readable PCM WAV file ({exc})") from exc
    if channels != 1:
        raise WavFormatError(f"{path}: expected mono, got {channels} channels")
    if width != 2:
        raise WavFormatError(f"{path}: expected 16-bit samples, got {8 * width}-bit")
    if rate != SAMPLE_RATE:
        raise WavFormatError(f"{path}: expected {SAMPLE_RATE} Hz, got {rate} Hz (resampling is not supported)")
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    return Waveform(pcm / 32768.0, rate)


def write_wav(path: str | Path, wav: Waveform) -> None:
    if wav.sample_rate_hz != SAMPLE_RATE:
        raise WavFormatError(f"refusing to write {wav.sample_rate_hz} Hz audio")
    pcm = np.clip(np.round(wav.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(SAMPLE_RATE)
        f.writeframes(pcm.tobytes())

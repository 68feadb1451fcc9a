"""Deterministic synthetic speech-like corpus with white, speech-shaped and babble-like noise.

Clean utterances are a pitch-modulated harmonic source shaped by three moving
formant resonances and a 4 Hz syllabic envelope. They stand in for real
speech so the whole pipeline runs without a recorded corpus.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dsp
from .dsp import SAMPLE_RATE, Waveform, peak_normalize
from .estimator import ChunkSet
from .objectives import LossContext
from .signalmodel import Mixture, mix_at_snr, phase_difference
from .wavio import read_wav, write_wav

NOISE_KINDS = ("white", "ssn_proxy", "babble_proxy")
DEFAULT_SNR_GRID = tuple(float(s) for s in np.linspace(-20.0, 20.0, 9))
EVAL_SNR_GRID = (-15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0)
SPLITS = ("train", "validation", "test")
MIN_SECONDS = 0.2
BABBLE_TALKERS = 8
AUX_LEVELS = 8
AUX_FLOOR_DB = -60.0

# seed layout: corpus seed * 10^7 + split * 10^6 + (role offset) + index
_SPLIT_STRIDE = 1_000_000
_NOISE_OFFSET = 500_000
_BABBLE_NAMESPACE = 1 << 40
_LTAS_NAMESPACE = 1 << 41
MANIFEST_NAME = "manifest.tsv"
MANIFEST_FIELDS = ("id", "split", "noise_kind", "snr_db", "clean_seed", "noise_seed",
                   "clean_path", "noise_path", "noisy_path")


def _num_samples(seconds: float) -> int:
    if seconds < MIN_SECONDS:
        raise ValueError(f"need at least {MIN_SECONDS} s (one 20-frame chunk), got {seconds}")
    return int(round(seconds * SAMPLE_RATE))


def gen_clean(seed: int, seconds: float) -> Waveform:
    n = _num_samples(seconds)
    rng = np.random.default_rng(seed)
    t = np.arange(n) / SAMPLE_RATE

    base = rng.uniform(100.0, 220.0)
    f0 = base * (1.0 + 0.08 * np.sin(2 * np.pi * rng.uniform(1.0, 3.0) * t + rng.uniform(0, 2 * np.pi)))

    # one formant target per syllable, linearly interpolated between syllable centers
    n_syl = int(np.ceil(seconds * 4.0)) + 2
    syl_t = (np.arange(n_syl) - 0.5) / 4.0
    targets = np.column_stack([
        rng.uniform(300.0, 850.0, n_syl),
        rng.uniform(850.0, 2400.0, n_syl),
        rng.uniform(2300.0, 3300.0, n_syl),
    ])
    formants = np.column_stack([np.interp(t, syl_t, targets[:, i]) for i in range(3)])

    phase = 2 * np.pi * np.cumsum(f0) / SAMPLE_RATE + rng.uniform(0, 2 * np.pi)
    n_harm = int(7600.0 // f0.min())
    x = np.zeros(n)
    for h in range(1, n_harm + 1):
        fh = h * f0
        amp = _gain_at(fh, formants) / np.sqrt(h)
        amp[fh > 7800.0] = 0.0
        x += amp * np.sin(h * phase)

    loud = np.interp(t, syl_t, rng.uniform(0.4, 1.0, n_syl))
    env = (0.5 - 0.5 * np.cos(2 * np.pi * 4.0 * t + rng.uniform(0, 2 * np.pi))) ** 1.5
    return peak_normalize(Waveform(x * env * loud))


def _gain_at(f: np.ndarray, formants: np.ndarray) -> np.ndarray:
    g = np.zeros_like(f)
    for i, bw in enumerate((90.0, 130.0, 180.0)):
        g += 1.0 / (1.0 + ((f - formants[:, i]) / bw) ** 2)
    return g


@lru_cache(maxsize=1)
def clean_ltas() -> np.ndarray:
    """Long-term average power spectrum (321 bins) of reference clean utterances, lightly smoothed."""
    acc = np.zeros(dsp.NUM_BINS)
    for k in range(8):
        mag = dsp.stft(gen_clean(_LTAS_NAMESPACE + k, 2.0)).magnitude
        acc += np.mean(mag**2, axis=1)
    kernel = np.ones(5) / 5
    return np.convolve(acc / 8, kernel, mode="same")


def babble_seeds(seed: int) -> list[int]:
    return [_BABBLE_NAMESPACE + seed * BABBLE_TALKERS + j for j in range(BABBLE_TALKERS)]


def gen_noise(kind: str, seed: int, seconds: float) -> Waveform:
    n = _num_samples(seconds)
    if kind == "white":
        return peak_normalize(Waveform(np.random.default_rng(seed).standard_normal(n)))
    if kind == "ssn_proxy":
        white = np.random.default_rng(seed).standard_normal(n)
        spec = np.fft.rfft(white)
        freqs = np.fft.rfftfreq(n, 1.0 / SAMPLE_RATE)
        grid = np.linspace(0.0, SAMPLE_RATE / 2, dsp.NUM_BINS)
        shape = np.sqrt(np.interp(freqs, grid, clean_ltas()))
        return peak_normalize(Waveform(np.fft.irfft(spec * shape, n)))
    if kind == "babble_proxy":
        total = np.zeros(n)
        for s in babble_seeds(seed):
            total += gen_clean(s, seconds).samples
        return peak_normalize(Waveform(total))
    raise ValueError(f"unknown noise kind {kind!r}; choose from {NOISE_KINDS}")


def envelope_features(clean: Waveform, num_chunks: int, chunk_len: int = dsp.CHUNK_LEN) -> np.ndarray:
    """Per-chunk clean frame-energy envelope quantized to 8 levels in [0, 1].

    A phaseless, information-bearing stand-in for visual features; frames past
    the end of the signal read as level 0.
    """
    energy = np.sum(dsp.stft(clean).magnitude ** 2, axis=0)
    peak = energy.max()
    db = np.full_like(energy, AUX_FLOOR_DB) if peak == 0 else 10 * np.log10(np.maximum(energy / peak, 1e-30))
    db = np.clip(db, AUX_FLOOR_DB, 0.0)
    levels = np.minimum(np.floor((db - AUX_FLOOR_DB) / -AUX_FLOOR_DB * AUX_LEVELS), AUX_LEVELS - 1) / (AUX_LEVELS - 1)
    out = np.zeros(num_chunks * chunk_len)
    out[: len(levels)] = levels[: len(out)]
    return out.reshape(num_chunks, chunk_len)


@dataclass(frozen=True)
class CorpusSpec:
    num_utterances: int = 200
    utterance_seconds: float = 1.0
    noise_kinds: tuple[str, ...] = ("white",)
    snr_grid_db: tuple[float, ...] = DEFAULT_SNR_GRID
    seed: int = 0
    num_validation: int = 40
    num_test: int = 40
    test_snr_grid_db: tuple[float, ...] | None = None
    # False: every utterance is mixed under every (noise kind, SNR) pair.
    # True: utterance i gets only condition i mod (kinds x SNRs).
    cycle_conditions: bool = False

    def __post_init__(self):
        for k in self.noise_kinds:
            if k not in NOISE_KINDS:
                raise ValueError(f"unknown noise kind {k!r}")
        if min(self.num_utterances, self.num_validation, self.num_test) < 0:
            raise ValueError("utterance counts must be non-negative")
        if max(self.num_utterances, self.num_validation, self.num_test) >= _NOISE_OFFSET:
            raise ValueError("too many utterances for the seed layout")
        _num_samples(self.utterance_seconds)

    def count(self, split: str) -> int:
        return {"train": self.num_utterances, "validation": self.num_validation, "test": self.num_test}[split]

    def snrs(self, split: str) -> tuple[float, ...]:
        if split == "test" and self.test_snr_grid_db is not None:
            return tuple(self.test_snr_grid_db)
        return tuple(self.snr_grid_db)

    def conditions(self, split: str) -> list[tuple[str, float]]:
        return [(k, float(s)) for k in self.noise_kinds for s in self.snrs(split)]

    def utterance_conditions(self, split: str, index: int) -> list[tuple[str, float]]:
        conds = self.conditions(split)
        return [conds[index % len(conds)]] if self.cycle_conditions else conds


@dataclass
class CorpusItem:
    mixture: Mixture
    ctx: LossContext
    aux: np.ndarray  # (padded chunk count, 20)
    split: str
    noise_kind: str
    clean_seed: int
    noise_seed: int
    item_id: str = ""


@dataclass
class Corpus:
    train: list[CorpusItem] = field(default_factory=list)
    validation: list[CorpusItem] = field(default_factory=list)
    test: list[CorpusItem] = field(default_factory=list)

    def split(self, name: str) -> list[CorpusItem]:
        return getattr(self, name)

    def items(self):
        for s in SPLITS:
            yield from self.split(s)


def utterance_context(clean: Waveform, noisy: Waveform, fb=None) -> LossContext:
    fb = dsp.mel_filterbank() if fb is None else fb
    x, y = dsp.stft(clean), dsp.stft(noisy)
    return LossContext(x.magnitude, y.magnitude, phase_difference(y, x), fb)


def make_item(clean: Waveform, noise: Waveform, snr_db: float, split: str, kind: str,
              clean_seed: int, noise_seed: int, item_id: str = "", fb=None) -> CorpusItem:
    mix = mix_at_snr(clean, noise, snr_db)
    # one common gain keeps the SNR and y = x + d while bounding every signal by 1
    peak = max(np.max(np.abs(s.samples)) for s in (mix.clean, mix.noise_scaled, mix.noisy))
    if peak > 0:
        g = 1.0 / peak
        mix = Mixture(Waveform(mix.clean.samples * g), Waveform(mix.noise_scaled.samples * g),
                      Waveform(mix.noisy.samples * g), mix.snr_db)
    return item_from_mixture(mix, split, kind, clean_seed, noise_seed, item_id, fb)


def item_from_mixture(mix: Mixture, split: str, kind: str, clean_seed: int, noise_seed: int,
                      item_id: str = "", fb=None) -> CorpusItem:
    ctx = utterance_context(mix.clean, mix.noisy, fb)
    n_chunks = -(-ctx.T // dsp.CHUNK_LEN)
    return CorpusItem(mix, ctx, envelope_features(mix.clean, n_chunks), split, kind,
                      clean_seed, noise_seed, item_id)


def split_seeds(spec: CorpusSpec, split: str) -> tuple[list[int], list[int]]:
    """Clean and noise seeds of one split; disjoint across splits and roles by construction."""
    base = spec.seed * 10 * _SPLIT_STRIDE + SPLITS.index(split) * _SPLIT_STRIDE
    n = spec.count(split)
    n_noise = sum(len(spec.utterance_conditions(split, i)) for i in range(n))
    return [base + i for i in range(n)], [base + _NOISE_OFFSET + j for j in range(n_noise)]


def build_dataset(spec: CorpusSpec) -> Corpus:
    fb = dsp.mel_filterbank()
    corpus = Corpus()
    for split in SPLITS:
        clean_seeds, noise_seeds = split_seeds(spec, split)
        j = 0
        for i, cs in enumerate(clean_seeds):
            clean = gen_clean(cs, spec.utterance_seconds)
            for kind, snr in spec.utterance_conditions(split, i):
                ns = noise_seeds[j]
                j += 1
                noise = gen_noise(kind, ns, spec.utterance_seconds)
                item_id = f"{split}-{i:05d}-{kind}-{snr:+g}dB"
                corpus.split(split).append(
                    make_item(clean, noise, snr, split, kind, cs, ns, item_id, fb))
    return corpus


def to_chunks(items: Sequence[CorpusItem], with_aux: bool = True, chunk_len: int = dsp.CHUNK_LEN) -> ChunkSet:
    """Training chunks from full 20-frame parts of each utterance (trailing frames dropped)."""
    noisy, A, R, theta, aux = [], [], [], [], []
    B = None
    for it in items:
        c = it.ctx
        B = c.B
        n = c.T // chunk_len
        if n == 0:
            continue
        for k in range(n):
            sl = slice(k * chunk_len, (k + 1) * chunk_len)
            A.append(c.A[:, sl])
            R.append(c.R[:, sl])
            theta.append(c.theta[:, sl])
            aux.append(it.aux[k])
    if not A:
        raise ValueError("no complete chunks in the given items")
    R_arr = np.stack(R)
    ctx = LossContext(np.stack(A), R_arr, np.stack(theta), B)
    return ChunkSet(R_arr, ctx, np.stack(aux) if with_aux else None)


# -- on-disk corpus -----------------------------------------------------------


def write_corpus(corpus: Corpus, directory: str | Path) -> Path:
    """Write clean/noise/noisy WAVs for every item plus a tab-separated manifest."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for it in corpus.items():
        sub = root / it.split
        sub.mkdir(exist_ok=True)
        paths = {}
        for role, wav in (("clean", it.mixture.clean), ("noise", it.mixture.noise_scaled),
                          ("noisy", it.mixture.noisy)):
            rel = Path(it.split) / f"{it.item_id}.{role}.wav"
            write_wav(root / rel, wav)
            paths[role] = rel.as_posix()
        rows.append({
            "id": it.item_id, "split": it.split, "noise_kind": it.noise_kind,
            "snr_db": repr(float(it.mixture.snr_db)), "clean_seed": str(it.clean_seed),
            "noise_seed": str(it.noise_seed), "clean_path": paths["clean"],
            "noise_path": paths["noise"], "noisy_path": paths["noisy"],
        })
    manifest = root / MANIFEST_NAME
    with open(manifest, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=MANIFEST_FIELDS, delimiter="\t", lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return manifest


def read_manifest(directory: str | Path) -> list[dict]:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {directory}")
    with open(path, newline="") as f:
        return list(csv.DictReader(f, delimiter="\t"))


def load_corpus(directory: str | Path, splits: Sequence[str] = SPLITS) -> Corpus:
    root = Path(directory)
    fb = dsp.mel_filterbank()
    corpus = Corpus()
    for row in read_manifest(root):
        if row["split"] not in splits:
            continue
        clean = read_wav(root / row["clean_path"])
        noise = read_wav(root / row["noise_path"])
        noisy = read_wav(root / row["noisy_path"])
        mix = Mixture(clean, noise, noisy, float(row["snr_db"]))
        corpus.split(row["split"]).append(item_from_mixture(
            mix, row["split"], row["noise_kind"], int(row["clean_seed"]), int(row["noise_seed"]),
            row["id"], fb))
    return corpus

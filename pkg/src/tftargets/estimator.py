"""Feedforward mask/magnitude estimator trained with Adam.

The model maps a normalized, flattened ``F x chunk_len`` noisy magnitude chunk
(optionally concatenated with an auxiliary feature vector) through
leaky-rectifier hidden layers to ``F x chunk_len`` outputs, followed by the
output activation its objective requires.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dsp import CHUNK_LEN, NUM_BINS
from .objectives import (
    EXPONENTIAL,
    LINEAR,
    RECTIFIER,
    LossContext,
    ObjectiveId,
    as_objective,
    evaluate,
    output_activation_for,
    stack_contexts,
)

log = logging.getLogger(__name__)

LEAKY_SLOPE = 0.01
DEFAULT_HIDDEN = (512, 512)
# exp() overflow guard for the exponential output
MAX_EXP_ARG = 60.0
CHECKPOINT_MAGIC = "TFTARGETS-CHECKPOINT"
CHECKPOINT_VERSION = 1


@dataclass
class EstimatorModel:
    weights: list[np.ndarray]  # each (fan_in, fan_out)
    biases: list[np.ndarray]
    output_activation: str
    input_mean: np.ndarray
    input_std: np.ndarray
    aux_dim: int = 0
    num_bins: int = NUM_BINS
    chunk_len: int = CHUNK_LEN
    objective: str | None = None
    hidden_slope: float = LEAKY_SLOPE

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def num_features(self) -> int:
        return self.num_bins * self.chunk_len

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "EstimatorModel":
        return copy.deepcopy(self)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    initial_lr: float = 4e-4
    lr_decay_factor: float = 0.5
    validation_interval_epochs: int = 2
    early_stop_patience_epochs: int = 10
    max_epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        for name in ("batch_size", "initial_lr", "lr_decay_factor", "validation_interval_epochs",
                     "early_stop_patience_epochs", "max_epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class AdamState:
    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float) -> None:
        """Update ``params`` in place."""
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class ChunkSet:
    """Stacked training chunks: noisy magnitudes, loss contexts and optional aux features."""

    noisy: np.ndarray  # (N, F, C)
    ctx: LossContext  # batched, A/R/theta of shape (N, F, C)
    aux: np.ndarray | None = None  # (N, aux_dim)

    def __post_init__(self):
        if self.aux is not None and len(self.aux) != len(self.noisy):
            raise ValueError("aux rows must match chunk count")

    def __len__(self) -> int:
        return len(self.noisy)

    def subset(self, idx) -> "ChunkSet":
        return ChunkSet(self.noisy[idx], self.ctx[idx], None if self.aux is None else self.aux[idx])

    @classmethod
    def from_items(cls, items) -> "ChunkSet":
        """Build from a sequence of ``(noisy_chunk, LossContext, aux_or_None)``."""
        items = list(items)
        if not items:
            raise ValueError("empty batch")
        noisy = np.stack([np.asarray(it[0], dtype=np.float64) for it in items])
        ctx = stack_contexts(it[1] for it in items)
        auxes = [it[2] if len(it) > 2 else None for it in items]
        aux = None if auxes[0] is None else np.stack([np.asarray(a, dtype=np.float64) for a in auxes])
        return cls(noisy, ctx, aux)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float | None
    lr: float  # learning rate in effect after this epoch's validation step


@dataclass
class History:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    stopped_early: bool = False

    @property
    def train_losses(self) -> list[float]:
        return [e.train_loss for e in self.epochs]

    @property
    def lrs(self) -> list[float]:
        return [e.lr for e in self.epochs]


def default_layer_sizes(aux_dim: int = 0, hidden: Sequence[int] = DEFAULT_HIDDEN,
                        num_bins: int = NUM_BINS, chunk_len: int = CHUNK_LEN) -> list[int]:
    n = num_bins * chunk_len
    return [n + aux_dim, *hidden, n]


def init_model(layer_sizes: Sequence[int], out_act: str, seed: int, aux_dim: int = 0,
               num_bins: int = NUM_BINS, chunk_len: int = CHUNK_LEN,
               objective: str | None = None) -> EstimatorModel:
    """Xavier-uniform weights in ``+-sqrt(6 / (fan_in + fan_out))``, zero biases."""
    sizes = [int(s) for s in layer_sizes]
    n = num_bins * chunk_len
    if len(sizes) < 2:
        raise ValueError("need at least an input and an output size")
    if sizes[0] != n + aux_dim:
        raise ValueError(f"input size {sizes[0]} != {num_bins}*{chunk_len} + aux {aux_dim}")
    if sizes[-1] != n:
        raise ValueError(f"output size {sizes[-1]} != {num_bins}*{chunk_len}")
    if out_act not in (RECTIFIER, LINEAR, EXPONENTIAL):
        raise ValueError(f"unknown output activation {out_act!r}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return EstimatorModel(weights, biases, out_act, np.zeros(n), np.ones(n), aux_dim,
                          num_bins, chunk_len, objective)


def compute_input_norm(noisy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and std over ``(N, F, C)`` chunks; zero spreads become 1."""
    flat = noisy.reshape(len(noisy), -1)
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    std[std <= 1e-12] = 1.0
    return mean, std


def set_input_norm(model: EstimatorModel, mean: np.ndarray, std: np.ndarray) -> None:
    if mean.shape != (model.num_features,) or std.shape != (model.num_features,):
        raise ValueError("normalization vectors must have one entry per input feature")
    if np.any(std <= 0):
        raise ValueError("normalization std entries must be positive")
    model.input_mean = np.asarray(mean, dtype=np.float64).copy()
    model.input_std = np.asarray(std, dtype=np.float64).copy()


def _activate_output(z: np.ndarray, act: str) -> np.ndarray:
    if act == RECTIFIER:
        return np.maximum(z, 0.0)
    if act == EXPONENTIAL:
        return np.exp(np.minimum(z, MAX_EXP_ARG))
    return z


def _output_derivative(z: np.ndarray, y: np.ndarray, act: str) -> np.ndarray:
    if act == RECTIFIER:
        return (z > 0).astype(np.float64)
    if act == EXPONENTIAL:
        return np.where(z < MAX_EXP_ARG, y, 0.0)
    return np.ones_like(z)


def _inputs(model: EstimatorModel, noisy: np.ndarray, aux: np.ndarray | None) -> np.ndarray:
    n = len(noisy)
    if noisy.shape[1:] != (model.num_bins, model.chunk_len):
        raise ValueError(f"expected chunks of shape {(model.num_bins, model.chunk_len)}, got {noisy.shape[1:]}")
    x = (noisy.reshape(n, -1) - model.input_mean) / model.input_std
    if model.aux_dim:
        if aux is None:
            raise ValueError(f"model expects {model.aux_dim} auxiliary features per chunk")
        aux = np.asarray(aux, dtype=np.float64).reshape(n, -1)
        if aux.shape[1] != model.aux_dim:
            raise ValueError(f"aux width {aux.shape[1]} != model aux_dim {model.aux_dim}")
        x = np.concatenate([x, aux], axis=1)
    elif aux is not None and np.size(aux):
        raise ValueError("model takes no auxiliary features")
    return x


def _forward(model: EstimatorModel, x: np.ndarray):
    acts = [x]
    h = x
    last = len(model.weights) - 1
    z = None
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        if i < last:
            h = np.where(z > 0, z, model.hidden_slope * z)
            acts.append(h)
    return acts, z


def forward_batch(model: EstimatorModel, noisy: np.ndarray, aux: np.ndarray | None = None) -> np.ndarray:
    """``(N, F, C)`` chunks to ``(N, F, C)`` post-activation outputs."""
    noisy = np.asarray(noisy, dtype=np.float64)
    _, z = _forward(model, _inputs(model, noisy, aux))
    y = _activate_output(z, model.output_activation)
    return y.reshape(noisy.shape)


def forward(model: EstimatorModel, chunk: np.ndarray, aux: np.ndarray | None = None) -> np.ndarray:
    chunk = np.asarray(chunk, dtype=np.float64)
    if chunk.shape != (model.num_bins, model.chunk_len):
        raise ValueError(f"expected a {model.num_bins}x{model.chunk_len} chunk, got {chunk.shape}")
    aux_b = None if aux is None else np.asarray(aux, dtype=np.float64)[None, :]
    return forward_batch(model, chunk[None], aux_b)[0]


def loss_and_gradients(model: EstimatorModel, batch: ChunkSet, obj: ObjectiveId | str):
    """Mean batch loss, per-item losses and parameter gradients (same order as ``parameters()``)."""
    obj = as_objective(obj)
    acts, z = _forward(model, _inputs(model, batch.noisy, batch.aux))
    y = _activate_output(z, model.output_activation)
    n = len(batch)
    res = evaluate(obj, batch.ctx, y.reshape(batch.noisy.shape))
    per_item = np.atleast_1d(res.value)
    delta = res.gradient.reshape(n, -1) / n * _output_derivative(z, y, model.output_activation)

    grads_w, grads_b = [], []
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w.append(acts[i].T @ delta)
        grads_b.append(delta.sum(axis=0))
        if i > 0:
            pre = acts[i]
            delta = (delta @ model.weights[i].T) * np.where(pre > 0, 1.0, model.hidden_slope)
    grads = []
    for gw, gb in zip(reversed(grads_w), reversed(grads_b)):
        grads += [gw, gb]
    return float(per_item.mean()), per_item, grads


def train_step(model: EstimatorModel, optimizer: AdamState, batch, obj: ObjectiveId | str,
               lr: float) -> tuple[EstimatorModel, float]:
    """One Adam update on ``batch``; returns the model and its pre-update mean loss."""
    obj = as_objective(obj)
    if not isinstance(batch, ChunkSet):
        batch = ChunkSet.from_items(batch)
    if len(batch) == 0:
        raise ValueError("empty batch")
    expected = output_activation_for(obj)
    if model.output_activation != expected:
        raise ValueError(f"{obj.name} needs a {expected} output, model has {model.output_activation}")
    try:
        loss, per_item, grads = loss_and_gradients(model, batch, obj)
    except ValueError as exc:
        raise FloatingPointError(f"{obj.name}: {exc}") from exc
    bad = np.flatnonzero(~np.isfinite(per_item))
    if bad.size:
        raise FloatingPointError(f"{obj.name}: non-finite loss at batch item {int(bad[0])}")
    optimizer.step(model.parameters(), grads, lr)
    return model, loss


def dataset_loss(model: EstimatorModel, data: ChunkSet, obj: ObjectiveId | str, batch_size: int = 256) -> float:
    obj = as_objective(obj)
    total = 0.0
    for start in range(0, len(data), batch_size):
        part = data.subset(slice(start, start + batch_size))
        y = forward_batch(model, part.noisy, part.aux)
        total += float(np.sum(np.atleast_1d(evaluate(obj, part.ctx, y).value)))
    return total / len(data)


def fit(model: EstimatorModel, train: ChunkSet, val: ChunkSet, obj: ObjectiveId | str,
        cfg: TrainConfig = TrainConfig(),
        validate: Callable[[EstimatorModel], float] | None = None) -> tuple[EstimatorModel, History]:
    """Train with Adam, halving the learning rate when validation loss rises and stopping early.

    Validation runs every ``cfg.validation_interval_epochs`` epochs. A result
    above the best so far halves the learning rate; ``cfg.early_stop_patience_epochs``
    epochs without a new best stop training. The best-validation parameters are
    returned. ``validate`` overrides the validation-loss computation.
    """
    obj = as_objective(obj)
    if len(train) == 0 or len(val) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if validate is None:
        validate = lambda m: dataset_loss(m, val, obj)  # noqa: E731
    rng = np.random.default_rng(cfg.seed)
    opt = AdamState()
    lr = cfg.initial_lr
    hist = History()
    best_model = None
    last_improvement = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train))
        weighted = 0.0
        for start in range(0, len(train), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, loss = train_step(model, opt, train.subset(idx), obj, lr)
            weighted += loss * len(idx)
        train_loss = weighted / len(train)

        val_loss = None
        if epoch % cfg.validation_interval_epochs == 0:
            val_loss = float(validate(model))
            if val_loss < hist.best_val_loss:
                hist.best_val_loss = val_loss
                hist.best_epoch = epoch
                best_model = model.copy()
                last_improvement = epoch
            elif val_loss > hist.best_val_loss:
                lr *= cfg.lr_decay_factor
        hist.epochs.append(EpochRecord(epoch, train_loss, val_loss, lr))
        log.info("%s epoch %d train %.6g val %s lr %.3g", obj.name, epoch, train_loss,
                 "-" if val_loss is None else f"{val_loss:.6g}", lr)
        if epoch - last_improvement >= cfg.early_stop_patience_epochs:
            hist.stopped_early = True
            break

    return (best_model if best_model is not None else model), hist


def constant_model(value: float, out_act: str, num_bins: int = NUM_BINS, chunk_len: int = CHUNK_LEN,
                   objective: str | None = None) -> EstimatorModel:
    """Single-layer model that ignores its input and emits ``act(value)`` everywhere.

    Useful as a debugging stand-in (e.g. an all-ones mask).
    """
    n = num_bins * chunk_len
    m = init_model([n, n], out_act, 0, num_bins=num_bins, chunk_len=chunk_len, objective=objective)
    m.weights[0][:] = 0.0
    m.biases[0][:] = value
    return m


# -- checkpoint files ---------------------------------------------------------


def _floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_model(model: EstimatorModel, path: str | Path) -> None:
    """Text header followed by little-endian float64 parameters (weights row-major, then bias)."""
    header = [
        f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}",
        "layer_sizes " + " ".join(str(s) for s in model.layer_sizes),
        f"hidden_activation leaky_rectifier {model.hidden_slope!r}",
        f"output_activation {model.output_activation}",
        f"objective {model.objective or '-'}",
        f"num_bins {model.num_bins}",
        f"chunk_len {model.chunk_len}",
        f"aux_dim {model.aux_dim}",
        "input_mean " + _floats(model.input_mean),
        "input_std " + _floats(model.input_std),
        "end_header",
    ]
    blob = b"".join(
        np.ascontiguousarray(p, dtype="<f8").tobytes()
        for w, b in zip(model.weights, model.biases)
        for p in (w, b)
    )
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(blob)


def load_model(path: str | Path) -> EstimatorModel:
    with open(path, "rb") as f:
        data = f.read()
    fields = {}
    pos = 0
    first = True
    while True:
        end = data.find(b"\n", pos)
        if end < 0:
            raise ValueError(f"{path}: truncated checkpoint header")
        line = data[pos:end].decode("ascii")
        pos = end + 1
        if first:
            magic, _, version = line.partition(" ")
            if magic != CHECKPOINT_MAGIC:
                raise ValueError(f"{path}: not a checkpoint file")
            if int(version) != CHECKPOINT_VERSION:
                raise ValueError(f"{path}: unsupported checkpoint version {version}")
            first = False
            continue
        if line == "end_header":
            break
        key, _, rest = line.partition(" ")
        fields[key] = rest

    sizes = [int(s) for s in fields["layer_sizes"].split()]
    slope = float(fields["hidden_activation"].split()[1])
    params = np.frombuffer(data[pos:], dtype="<f8")
    weights, biases = [], []
    off = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(params[off : off + fan_in * fan_out].reshape(fan_in, fan_out).astype(np.float64))
        off += fan_in * fan_out
        biases.append(params[off : off + fan_out].astype(np.float64))
        off += fan_out
    if off != len(params):
        raise ValueError(f"{path}: parameter block size does not match layer sizes")
    objective = fields["objective"]
    return EstimatorModel(
        weights,
        biases,
        fields["output_activation"],
        np.array([float(v) for v in fields["input_mean"].split()]),
        np.array([float(v) for v in fields["input_std"].split()]),
        int(fields["aux_dim"]),
        int(fields["num_bins"]),
        int(fields["chunk_len"]),
        None if objective == "-" else objective,
        slope,
    )

"""Central finite-difference verification of objective and model gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import estimator
from .estimator import ChunkSet
from .objectives import ALL_OBJECTIVES, LossContext, ObjectiveId, evaluate, output_activation_for

OBJECTIVE_TOL = 1e-5
MODEL_TOL = 1e-4


@dataclass(frozen=True)
class GradCheck:
    objective: ObjectiveId
    rel_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.rel_error < self.tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def random_context(rng: np.random.Generator, F: int = 6, T: int = 4, Q: int = 3, batch: int | None = None) -> LossContext:
    shape = (F, T) if batch is None else (batch, F, T)
    A = rng.uniform(0.1, 2.0, shape)
    R = rng.uniform(0.1, 2.0, shape)
    theta = rng.uniform(-np.pi, np.pi, shape)
    B = rng.uniform(0.0, 1.0, (Q, F))
    return LossContext(A, R, theta, B)


def numeric_gradient(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def check_objective(obj: ObjectiveId, rng: np.random.Generator, F: int = 6, T: int = 4) -> GradCheck:
    ctx = random_context(rng, F, T)
    out = rng.uniform(0.2, 2.0, (F, T))
    analytic = evaluate(obj, ctx, out).gradient
    numeric = numeric_gradient(lambda: evaluate(obj, ctx, out).value, out)
    return GradCheck(obj, relative_error(analytic, numeric), OBJECTIVE_TOL)


def check_model(obj: ObjectiveId, rng: np.random.Generator, F: int = 6, T: int = 4,
                hidden: int = 5, aux_dim: int = 2, batch: int = 3) -> GradCheck:
    """Loss gradient with respect to every parameter of a tiny two-layer model."""
    n = F * T
    model = estimator.init_model([n + aux_dim, hidden, n], output_activation_for(obj),
                                 int(rng.integers(1 << 31)), aux_dim=aux_dim, num_bins=F, chunk_len=T)
    for b in model.biases:
        b[:] = rng.normal(0.0, 0.1, b.shape)
    if model.output_activation == "rectifier":
        # keep the rectified outputs away from the kink at zero
        model.biases[-1][:] = 1.0
    data = ChunkSet(rng.uniform(0.1, 2.0, (batch, F, T)), random_context(rng, F, T, batch=batch),
                    rng.uniform(0.0, 1.0, (batch, aux_dim)))
    _, _, grads = estimator.loss_and_gradients(model, data, obj)
    worst = 0.0
    for p, g in zip(model.parameters(), grads):
        numeric = numeric_gradient(lambda: estimator.loss_and_gradients(model, data, obj)[0], p)
        worst = max(worst, relative_error(g, numeric))
    return GradCheck(obj, worst, MODEL_TOL)


def run_all(seed: int = 0) -> tuple[list[GradCheck], list[GradCheck]]:
    rng = np.random.default_rng(seed)
    objective_checks = [check_objective(o, rng) for o in ALL_OBJECTIVES]
    model_checks = [check_model(o, rng) for o in ALL_OBJECTIVES]
    return objective_checks, model_checks

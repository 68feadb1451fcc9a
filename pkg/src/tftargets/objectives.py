"""The twelve target/objective combinations with closed-form gradients.

Each objective is identified by a spectral-amplitude domain (STSA, LSA, MSA,
LMSA, PSSA) and an approach:

* DM  -- the network output is the clean magnitude estimate,
* IM  -- the network output is a mask, compared after multiplying with the
  noisy magnitude,
* MA  -- the network output is a mask, compared with the ideal mask (IAM for
  STSA, PSM for PSSA).

All functions accept ``F x T`` arrays or ``(N, F, T)`` batches. Values are
per item (a float for 2-D input, an ``(N,)`` array for batches) and gradients
are those of each item's loss with respect to its own network output.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .dsp import MelFilterbank
from .signalmodel import EPS_DIV, IAM_RANGE, PSM_RANGE

EPS_LOG = 1e-7

DOMAINS = ("STSA", "LSA", "MSA", "LMSA", "PSSA")
APPROACHES = ("DM", "IM", "MA")

RECTIFIER = "rectifier"
LINEAR = "linear"
EXPONENTIAL = "exponential"


class InvalidObjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectiveId:
    domain: str
    approach: str

    def __post_init__(self):
        if self.domain not in DOMAINS or self.approach not in APPROACHES:
            raise InvalidObjectiveError(f"unknown objective {self.domain}-{self.approach}")
        if self.approach == "MA" and self.domain not in ("STSA", "PSSA"):
            raise InvalidObjectiveError(
                f"{self.domain}-MA is not defined; mask approximation exists only for STSA (IAM) and PSSA (PSM)"
            )

    @classmethod
    def parse(cls, name: str) -> "ObjectiveId":
        parts = name.strip().upper().split("-")
        if len(parts) != 2:
            raise InvalidObjectiveError(f"malformed objective name {name!r}; expected e.g. 'lsa-dm'")
        return cls(*parts)

    @property
    def name(self) -> str:
        return f"{self.domain.lower()}-{self.approach.lower()}"

    @property
    def is_mel(self) -> bool:
        return self.domain in ("MSA", "LMSA")

    @property
    def is_log(self) -> bool:
        return self.domain in ("LSA", "LMSA")

    @property
    def outputs_mask(self) -> bool:
        return self.approach in ("IM", "MA")

    @property
    def mask_kind(self) -> str | None:
        if not self.outputs_mask:
            return None
        return "PSM" if self.domain == "PSSA" else "IAM"

    def __str__(self) -> str:
        return self.name


OBJECTIVE_NAMES = (
    "stsa-dm", "lsa-dm", "msa-dm", "lmsa-dm", "pssa-dm",
    "stsa-im", "lsa-im", "msa-im", "lmsa-im", "pssa-im",
    "stsa-ma", "pssa-ma",
)
ALL_OBJECTIVES = tuple(ObjectiveId.parse(n) for n in OBJECTIVE_NAMES)


def as_objective(obj: ObjectiveId | str) -> ObjectiveId:
    return obj if isinstance(obj, ObjectiveId) else ObjectiveId.parse(obj)


@dataclass(frozen=True)
class LossContext:
    """Clean/noisy magnitudes, phase difference and the Mel filterbank for one item or batch."""

    A: np.ndarray
    R: np.ndarray
    theta: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        B = self.B.weights if isinstance(self.B, MelFilterbank) else self.B
        object.__setattr__(self, "B", np.asarray(B, dtype=np.float64))
        for name in ("A", "R", "theta"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if not self.A.shape == self.R.shape == self.theta.shape:
            raise ValueError("A, R and theta must share one shape")
        if self.B.shape[1] != self.A.shape[-2]:
            raise ValueError(f"filterbank has {self.B.shape[1]} bins, spectra have {self.A.shape[-2]}")

    @property
    def F(self) -> int:
        return self.A.shape[-2]

    @property
    def T(self) -> int:
        return self.A.shape[-1]

    @property
    def Q(self) -> int:
        return self.B.shape[0]

    @property
    def a(self) -> float:
        return 1.0 / (self.T * self.F)

    @property
    def b(self) -> float:
        return 1.0 / (self.T * self.Q)

    @cached_property
    def A_mel(self) -> np.ndarray:
        return np.matmul(self.B, self.A)

    @cached_property
    def R_mel(self) -> np.ndarray:
        return np.matmul(self.B, self.R)

    @cached_property
    def phase_sensitive_target(self) -> np.ndarray:
        return self.A * np.cos(self.theta)

    @cached_property
    def iam(self) -> np.ndarray:
        return np.clip(self.A / np.maximum(self.R, EPS_DIV), *IAM_RANGE)

    @cached_property
    def psm(self) -> np.ndarray:
        return np.clip(self.A / np.maximum(self.R, EPS_DIV) * np.cos(self.theta), *PSM_RANGE)

    def __getitem__(self, idx) -> "LossContext":
        if self.A.ndim != 3:
            raise TypeError("only batched contexts can be indexed")
        return LossContext(self.A[idx], self.R[idx], self.theta[idx], self.B)

    def __len__(self) -> int:
        return self.A.shape[0] if self.A.ndim == 3 else 1


def stack_contexts(ctxs) -> LossContext:
    ctxs = list(ctxs)
    return LossContext(
        np.stack([c.A for c in ctxs]),
        np.stack([c.R for c in ctxs]),
        np.stack([c.theta for c in ctxs]),
        ctxs[0].B,
    )


@dataclass(frozen=True)
class LossResult:
    value: float | np.ndarray
    gradient: np.ndarray


def _safe_log(x):
    return np.log(np.maximum(x, EPS_LOG))


def _dlog(x):
    # derivative of log(max(x, EPS_LOG))
    out = np.zeros_like(x)
    live = x > EPS_LOG
    out[live] = 1.0 / x[live]
    return out


def _reduce(sq: np.ndarray):
    total = sq.sum(axis=(-2, -1))
    return float(total) if np.ndim(total) == 0 else total


def evaluate(obj: ObjectiveId | str, ctx: LossContext, net_out: np.ndarray) -> LossResult:
    """Loss value and gradient with respect to the (post-activation) network output."""
    obj = as_objective(obj)
    out = np.asarray(net_out, dtype=np.float64)
    if out.shape != ctx.A.shape:
        raise ValueError(f"network output shape {out.shape} does not match context {ctx.A.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{obj.name}: network output contains non-finite values")

    if obj.approach == "MA":
        target = ctx.iam if obj.domain == "STSA" else ctx.psm
        err = target - out
        return LossResult(ctx.a * _reduce(err * err), -2.0 * ctx.a * err)

    est = out if obj.approach == "DM" else out * ctx.R
    target = ctx.phase_sensitive_target if obj.domain == "PSSA" else ctx.A

    if obj.domain in ("STSA", "PSSA"):
        err = target - est
        value = ctx.a * _reduce(err * err)
        d_est = -2.0 * ctx.a * err
    elif obj.domain == "LSA":
        err = _safe_log(target) - _safe_log(est)
        value = ctx.a * _reduce(err * err)
        d_est = -2.0 * ctx.a * err * _dlog(est)
    elif obj.domain == "MSA":
        err = ctx.A_mel - np.matmul(ctx.B, est)
        value = ctx.b * _reduce(err * err)
        d_est = np.matmul(ctx.B.T, -2.0 * ctx.b * err)
    else:  # LMSA
        est_mel = np.matmul(ctx.B, est)
        err = _safe_log(ctx.A_mel) - _safe_log(est_mel)
        value = ctx.b * _reduce(err * err)
        d_est = np.matmul(ctx.B.T, -2.0 * ctx.b * err * _dlog(est_mel))

    grad = d_est if obj.approach == "DM" else d_est * ctx.R
    return LossResult(value, grad)


def loss_value(obj: ObjectiveId | str, ctx: LossContext, net_out: np.ndarray):
    return evaluate(obj, ctx, net_out).value


def loss_gradient(obj: ObjectiveId | str, ctx: LossContext, net_out: np.ndarray) -> np.ndarray:
    return evaluate(obj, ctx, net_out).gradient


def weighted_im_value(ctx: LossContext, m_hat: np.ndarray, phase_sensitive: bool = False):
    """Reconstruction error of ``m_hat * R`` weighted by ``1 / R**2`` per bin.

    Identical to the STSA-MA (or PSSA-MA) loss whenever the ideal mask is not
    clipped.
    """
    R = np.maximum(ctx.R, EPS_DIV)
    target = ctx.phase_sensitive_target if phase_sensitive else ctx.A
    err = (target - m_hat * R) / R
    return ctx.a * _reduce(err * err)


def output_activation_for(obj: ObjectiveId | str) -> str:
    obj = as_objective(obj)
    if obj.approach == "DM":
        # PSSA targets can be negative, so no exponential compression
        return LINEAR if obj.domain == "PSSA" else EXPONENTIAL
    return LINEAR if obj.domain == "PSSA" else RECTIFIER

"""Training and evaluation drivers shared by the CLI and the acceptance suite."""

from __future__ import annotations

import logging
from dataclasses import replace
from typing import Sequence

import numpy as np

from . import estimator, metrics
from .enhance import enhance_utterance
from .estimator import EstimatorModel, History, TrainConfig
from .objectives import ObjectiveId, as_objective, output_activation_for
from .synthdata import Corpus, CorpusItem, to_chunks

log = logging.getLogger(__name__)

METRIC_NAMES = ("si_sdr_db", "seg_snr_db", "lsd_db")
UNPROCESSED = "unprocessed"


def train_objective(corpus: Corpus, obj: ObjectiveId | str, cfg: TrainConfig = TrainConfig(),
                    audio_only: bool = False, hidden: Sequence[int] = estimator.DEFAULT_HIDDEN
                    ) -> tuple[EstimatorModel, History]:
    obj = as_objective(obj)
    train = to_chunks(corpus.train, with_aux=not audio_only)
    val = to_chunks(corpus.validation, with_aux=not audio_only)
    aux_dim = 0 if audio_only else train.aux.shape[1]
    model = estimator.init_model(estimator.default_layer_sizes(aux_dim, hidden), output_activation_for(obj),
                                 cfg.seed, aux_dim=aux_dim, objective=obj.name)
    estimator.set_input_norm(model, *estimator.compute_input_norm(train.noisy))
    return estimator.fit(model, train, val, obj, cfg)


def enhance_item(model: EstimatorModel, obj: ObjectiveId | str, item: CorpusItem):
    aux = item.aux if model.aux_dim else None
    return enhance_utterance(model, obj, item.mixture.noisy, aux)


def evaluate_items(model: EstimatorModel, obj: ObjectiveId | str, items: Sequence[CorpusItem]):
    """``(snr_db, enhanced MetricReport)`` per item."""
    out = []
    for it in items:
        res = enhance_item(model, obj, it)
        out.append((it.mixture.snr_db, metrics.report(it.mixture.clean, res.enhanced)))
    return out


def unprocessed_reports(items: Sequence[CorpusItem]):
    return [(it.mixture.snr_db, metrics.report(it.mixture.clean, it.mixture.noisy)) for it in items]


def average_by_snr(reports, snrs: Sequence[float]) -> dict[str, list[float]]:
    """Mean of each metric per SNR (NaN where no item has that SNR), with the overall mean last."""
    table = {}
    for name in METRIC_NAMES:
        row = []
        for snr in snrs:
            vals = [getattr(r, name) for s, r in reports if np.isclose(s, snr)]
            row.append(float(np.nanmean(vals)) if vals else float("nan"))
        finite = [v for v in row if np.isfinite(v)]
        row.append(float(np.mean(finite)) if finite else float("nan"))
        table[name] = row
    return table


def compare(corpus: Corpus, objectives: Sequence[ObjectiveId | str], cfg: TrainConfig,
            snrs: Sequence[float], audio_only: bool = False,
            hidden: Sequence[int] = estimator.DEFAULT_HIDDEN) -> dict[str, dict[str, list[float]]]:
    """Train each objective with the same seed and average the test-set proxy metrics per SNR."""
    grid = {UNPROCESSED: average_by_snr(unprocessed_reports(corpus.test), snrs)}
    for obj in objectives:
        obj = as_objective(obj)
        log.info("training %s", obj.name)
        model, _ = train_objective(corpus, obj, replace(cfg), audio_only, hidden)
        grid[obj.name] = average_by_snr(evaluate_items(model, obj, corpus.test), snrs)
    return grid


def format_grid(grid: dict[str, dict[str, list[float]]], snrs: Sequence[float]) -> str:
    """Tab-separated grid: one row per objective, one column per (metric, SNR) plus averages."""
    labels = [f"{s:+g}" for s in snrs] + ["avg"]
    header = ["objective"] + [f"{m}@{lab}" for m in METRIC_NAMES for lab in labels]
    lines = ["\t".join(header)]
    for name, table in grid.items():
        cells = [name] + [f"{v:.4f}" for m in METRIC_NAMES for v in table[m]]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"

"""Evaluation metrics: area under the precision-recall curve and log-loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import as_labels
from .errors import InvalidInputError, UndefinedMetricError


@dataclass(frozen=True)
class EvaluationResult:
    auprc: float
    log_loss: float
    positives: int
    negatives: int


def auprc(scores, labels) -> float:
    """Area under the precision-recall curve by the step rule.

    Examples are ranked by descending score; tied scores are swept as one
    block, and the area is the recall increment at each distinct threshold
    times the precision there.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = as_labels(labels)
    if s.shape != y.shape:
        raise InvalidInputError("scores and labels differ in length")
    n_pos = int((y > 0).sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUPRC is undefined without positive labels")
    order = np.argsort(-s, kind="stable")
    ranked_scores = s[order]
    hits = (y[order] > 0).astype(np.float64)
    block_end = np.ones(len(s), dtype=bool)
    block_end[:-1] = ranked_scores[:-1] != ranked_scores[1:]
    true_pos = np.cumsum(hits)[block_end]
    predicted_pos = (np.arange(1, len(s) + 1))[block_end]
    precision = true_pos / predicted_pos
    recall = true_pos / n_pos
    recall_step = np.diff(recall, prepend=0.0)
    return float(np.dot(recall_step, precision))


def log_loss(scores, labels) -> float:
    """Mean negative log-probability of the true label; scores in (0, 1)."""
    s = np.asarray(scores, dtype=np.float64)
    y = as_labels(labels)
    if s.shape != y.shape:
        raise InvalidInputError("scores and labels differ in length")
    if np.any(s <= 0.0) or np.any(s >= 1.0):
        raise InvalidInputError("scores must lie strictly inside (0, 1)")
    per_example = np.where(y > 0, -np.log(s), -np.log1p(-s))
    return float(per_example.mean())


def evaluate_scores(scores, labels) -> EvaluationResult:
    y = as_labels(labels)
    return EvaluationResult(
        auprc=auprc(scores, y),
        log_loss=log_loss(scores, y),
        positives=int((y > 0).sum()),
        negatives=int((y < 0).sum()),
    )

"""Seeded synthetic fixtures: sparse logistic instances with known support."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import InvalidInputError
from .ingest import ByExampleRecord


@dataclass(frozen=True)
class SyntheticTruth:
    informative: np.ndarray
    weights: np.ndarray


def dense_logistic_instance(n: int, p: int, seed: int, informative: int | None = None,
                            margin_scale: float = 2.0):
    """Dense (X, y) drawn from a sparse-ground-truth logistic model."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    k = max(1, p // 5) if informative is None else informative
    support = rng.choice(p, size=k, replace=False)
    weights = np.zeros(p)
    weights[support] = rng.standard_normal(k)
    margins = X @ weights
    scale = margin_scale / max(margins.std(), 1e-12)
    y = np.where(rng.random(n) < expit(scale * margins), 1.0, -1.0)
    if np.all(y == y[0]):  # keep fixtures two-class
        y[0] = -y[0]
    return X, y


def sparse_logistic_records(
    n: int,
    p: int,
    informative: int,
    seed: int,
    informative_density: float = 0.5,
    noise_per_example: float = 40.0,
    weight_low: float = 3.0,
    weight_high: float = 6.0,
):
    """Sparse by-example records where only `informative` features carry signal.

    Informative features appear with probability informative_density and
    standard normal values; each example also carries on average
    noise_per_example irrelevant features. Labels are sampled from the
    logistic model of the informative margin, which the weight range keeps
    nearly deterministic.
    """
    if not 0 < informative <= p:
        raise InvalidInputError("informative must lie in [1, p]")
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(p, size=informative, replace=False))
    weights = np.zeros(p)
    signs = rng.choice((-1.0, 1.0), size=informative)
    weights[support] = signs * rng.uniform(weight_low, weight_high, size=informative)

    inf_mask = rng.random((n, informative)) < informative_density
    inf_values = np.where(inf_mask, rng.standard_normal((n, informative)), 0.0)
    margins = inf_values @ weights[support]
    labels = np.where(rng.random(n) < expit(margins), 1, -1)

    rows = [np.repeat(np.arange(n), inf_mask.sum(axis=1))]
    cols = [np.broadcast_to(support, (n, informative))[inf_mask]]
    values = [inf_values[inf_mask]]

    noise_density = min(1.0, noise_per_example / max(p - informative, 1))
    noise_features = np.setdiff1d(np.arange(p), support)
    if noise_features.size and noise_density > 0.0:
        noise_mask = rng.random((n, noise_features.size)) < noise_density
        noise_values = np.where(noise_mask, rng.standard_normal(noise_mask.shape), 0.0)
        keep = noise_mask & (noise_values != 0.0)
        rows.append(np.repeat(np.arange(n), keep.sum(axis=1)))
        cols.append(np.broadcast_to(noise_features, keep.shape)[keep])
        values.append(noise_values[keep])

    row_idx = np.concatenate(rows)
    col_idx = np.concatenate(cols)
    val = np.concatenate(values)
    keep = val != 0.0
    row_idx, col_idx, val = row_idx[keep], col_idx[keep], val[keep]
    order = np.lexsort((col_idx, row_idx))
    row_idx, col_idx, val = row_idx[order], col_idx[order], val[order]
    starts = np.searchsorted(row_idx, np.arange(n + 1))

    records = []
    for i in range(n):
        lo, hi = starts[i], starts[i + 1]
        features = tuple(
            (int(j), float(v)) for j, v in zip(col_idx[lo:hi], val[lo:hi])
        )
        records.append(ByExampleRecord(int(labels[i]), features))
    return records, SyntheticTruth(support, weights)


def split_records(records, fraction: float, seed: int):
    """Deterministic shuffle split into (head, tail) with |head| = fraction * n."""
    if not 0.0 < fraction < 1.0:
        raise InvalidInputError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    cut = int(round(fraction * len(records)))
    head = [records[i] for i in order[:cut]]
    tail = [records[i] for i in order[cut:]]
    return head, tail

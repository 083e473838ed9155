"""Logistic-model mathematics evaluated on cached margin vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import InvalidInputError

# Probabilities are kept strictly inside (0, 1) and curvature weights strictly
# positive so working responses and coordinate denominators stay finite.
PROBABILITY_CLAMP = 1e-15
WEIGHT_FLOOR = 1e-12


def class_probability(margin):
    """P(y = +1 | x) = sigmoid(margin), clamped to [1e-15, 1 - 1e-15]."""
    m = np.asarray(margin, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("margin must be finite")
    prob = np.clip(expit(m), PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP)
    return float(prob) if np.ndim(margin) == 0 else prob


def negated_log_likelihood(labels, margins) -> float:
    """Sum over examples of log(1 + exp(-y_i * margin_i)), overflow-safe."""
    y = np.asarray(labels, dtype=np.float64)
    m = np.asarray(margins, dtype=np.float64)
    if y.shape != m.shape:
        raise InvalidInputError(
            f"labels and margins differ in length ({y.shape} vs {m.shape})"
        )
    return float(np.logaddexp(0.0, -y * m).sum())


def objective(loss: float, beta, lam: float) -> float:
    """Penalized objective: loss + lam * ||beta||_1."""
    if lam < 0:
        raise InvalidInputError("penalty strength must be non-negative")
    return float(loss + lam * np.abs(beta).sum())


@dataclass(frozen=True, eq=False)
class QuadraticWorkspace:
    """Per-example curvature weights and working responses, frozen at one beta.

    weights[i] = p_i (1 - p_i), floored; responses[i] = (target_i - p_i) / weights[i]
    with target_i = (y_i + 1) / 2. Never mutated while a subproblem is solved.
    """

    weights: np.ndarray
    responses: np.ndarray
    snapshot_loss: float


def build_workspace(labels, margins) -> QuadraticWorkspace:
    """Freeze the least-squares model of the loss at the current margins."""
    y = np.asarray(labels, dtype=np.float64)
    m = np.asarray(margins, dtype=np.float64)
    if y.shape != m.shape:
        raise InvalidInputError("labels and margins differ in length")
    prob = class_probability(m)
    weights = np.maximum(prob * (1.0 - prob), WEIGHT_FLOOR)
    responses = ((y + 1.0) / 2.0 - prob) / weights
    return QuadraticWorkspace(weights, responses, negated_log_likelihood(y, m))


def gradient_direction_product(labels, margins, delta_margins) -> float:
    """Directional derivative of the loss along the direction behind delta_margins."""
    y = np.asarray(labels, dtype=np.float64)
    m = np.asarray(margins, dtype=np.float64)
    dm = np.asarray(delta_margins, dtype=np.float64)
    if y.shape != m.shape or y.shape != dm.shape:
        raise InvalidInputError("labels, margins and delta_margins must align")
    return float(np.dot(class_probability(m) - (y + 1.0) / 2.0, dm))


def quadratic_model_loss(workspace: QuadraticWorkspace, delta_margins) -> float:
    """Weighted least-squares value 0.5 * sum_i w_i (z_i - dm_i)^2.

    Differs from the second-order expansion of the loss by a constant that does
    not depend on the step, so only differences of this value are meaningful.
    """
    r = workspace.responses - np.asarray(delta_margins, dtype=np.float64)
    return float(0.5 * np.dot(workspace.weights * r, r))

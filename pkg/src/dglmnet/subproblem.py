"""Per-worker one-cycle coordinate descent on the penalized quadratic model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import FeatureShard
from .errors import InvalidInputError
from .glm import QuadraticWorkspace


def soft_threshold(x, a):
    """Shrinkage operator sgn(x) * max(|x| - a, 0); exact zero inside [-a, a]."""
    if np.any(np.asarray(a) < 0):
        raise InvalidInputError("threshold must be non-negative")
    return np.sign(x) * np.maximum(np.abs(x) - a, 0.0)


def coordinate_moments(example_ids, values, workspace, delta_margins, shifted_coef):
    """Raw numerator/denominator sums of the single-coordinate minimizer.

    shifted_coef is beta_j + delta_beta_j, the coefficient the partial residual
    is re-centered on. Damping is added by the caller.
    """
    w_vals = workspace.weights[example_ids] * values
    partial = (
        workspace.responses[example_ids]
        - delta_margins[example_ids]
        + shifted_coef * values
    )
    return float(np.dot(w_vals, partial)), float(np.dot(w_vals, values))


def coordinate_update(
    example_ids,
    values,
    workspace: QuadraticWorkspace,
    beta_j: float,
    delta_beta_j: float,
    delta_margins: np.ndarray,
    lam: float,
    damping: float,
) -> float:
    """Exact minimization of the penalized quadratic over one coordinate.

    Solves for the new total coefficient u via the soft threshold, with the
    ridge damping term entering as +damping*beta_j in the numerator and
    +damping in the denominator, then returns the step u - beta_j.
    delta_margins is updated in place for the posted examples.
    """
    num, den = coordinate_moments(
        example_ids, values, workspace, delta_margins, beta_j + delta_beta_j
    )
    u = soft_threshold(num + damping * beta_j, lam) / (den + damping)
    new_delta = u - beta_j
    if new_delta != delta_beta_j:
        delta_margins[example_ids] += (new_delta - delta_beta_j) * values
    return new_delta


@dataclass
class SubproblemResult:
    """One worker's block direction: sparse coefficient steps plus their margins."""

    shard_id: int
    n: int
    p: int
    delta_beta: dict[int, float] = field(default_factory=dict)
    delta_margins: np.ndarray = None

    def dense_delta_beta(self, p: int | None = None) -> np.ndarray:
        out = np.zeros(self.p if p is None else p)
        for j, d in self.delta_beta.items():
            out[j] = d
        return out


def solve_subproblem(
    shard: FeatureShard,
    workspace: QuadraticWorkspace,
    beta: np.ndarray,
    lam: float,
    damping: float,
) -> SubproblemResult:
    """One cycle of coordinate descent over the shard's owned features.

    Features are visited exactly once in ascending id order, each solved in
    closed form against the residual left by the previous updates. Runs in
    O(nnz_local) plus O(n) for the delta-margin buffer.
    """
    if workspace.weights.shape[0] != shard.n:
        raise InvalidInputError("workspace length does not match the shard")
    if beta.shape[0] != shard.p:
        raise InvalidInputError("beta length does not match the shard")
    result = SubproblemResult(shard.shard_id, shard.n, shard.p)
    result.delta_margins = np.zeros(shard.n)
    indptr = shard.indptr
    for k in range(shard.n_features):
        j = int(shard.feature_ids[k])
        lo, hi = indptr[k], indptr[k + 1]
        if lo == hi and beta[j] == 0.0:
            continue
        d = coordinate_update(
            shard.example_ids[lo:hi],
            shard.values[lo:hi],
            workspace,
            float(beta[j]),
            0.0,
            result.delta_margins,
            lam,
            damping,
        )
        if d != 0.0:
            result.delta_beta[j] = d
    return result

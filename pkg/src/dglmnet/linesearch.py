"""Step-size selection on the merged direction, using only O(n + p) cached data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ModelState
from .errors import InvalidInputError, NumericalError, StalledLineSearchError
from .glm import gradient_direction_product, negated_log_likelihood


@dataclass(frozen=True)
class LineSearchConfig:
    """Constants of the backtracking search.

    backtrack_factor shrinks trial steps, sufficient_decrease is the fraction
    of the model decrease a step must realize, curvature_weight scales the
    optional quadratic term of the acceptance bound, min_alpha bounds the
    initial-step grid from below, and skip_decrease is the relative objective
    drop at the full step that bypasses the search entirely.
    """

    backtrack_factor: float = 0.5
    sufficient_decrease: float = 0.01
    curvature_weight: float = 0.0
    min_alpha: float = 2.0**-10
    skip_decrease: float = 1e-4
    max_backtracks: int = 50

    def __post_init__(self):
        if not 0.0 < self.backtrack_factor < 1.0:
            raise InvalidInputError("backtrack_factor must lie in (0, 1)")
        if not 0.0 < self.sufficient_decrease < 1.0:
            raise InvalidInputError("sufficient_decrease must lie in (0, 1)")
        if not 0.0 <= self.curvature_weight < 1.0:
            raise InvalidInputError("curvature_weight must lie in [0, 1)")
        if not 0.0 < self.min_alpha < 1.0:
            raise InvalidInputError("min_alpha must lie in (0, 1)")
        if self.max_backtracks < 1:
            raise InvalidInputError("max_backtracks must be at least 1")


@dataclass(frozen=True)
class LineSearchResult:
    alpha: float
    objective: float
    evaluations: int


def candidate_objective(
    alpha: float, labels, margins, delta_margins, beta, delta_beta, lam: float
) -> float:
    """Objective at beta + alpha * delta_beta, from cached vectors only.

    Uses the margin and delta-margin caches, so the cost is O(n + p) and the
    training matrix is never touched.
    """
    loss = negated_log_likelihood(labels, margins + alpha * delta_margins)
    return float(loss + lam * np.abs(beta + alpha * delta_beta).sum())


def armijo_slope(
    grad_dir: float,
    quad_term: float,
    beta,
    delta_beta,
    lam: float,
    curvature_weight: float = 0.0,
) -> float:
    """Model decrease bound used by the acceptance rule.

    grad_dir is the directional derivative of the loss; quad_term, weighted by
    curvature_weight, is ignored at the default weight of zero and need not be
    computed then.
    """
    penalty_change = lam * (
        np.abs(beta + delta_beta).sum() - np.abs(beta).sum()
    )
    if curvature_weight == 0.0:
        return float(grad_dir + penalty_change)
    return float(grad_dir + curvature_weight * quad_term + penalty_change)


def line_search(
    state: ModelState, labels, lam: float, config: LineSearchConfig | None = None
) -> LineSearchResult:
    """Pick a step size in (0, 1] along the merged direction.

    Three stages: return 1 outright when the full step already achieves a
    sufficient relative decrease (this protects coordinates that stepped back
    to exactly zero); otherwise take the best step on the geometric grid
    inside (min_alpha, 1] as the starting point; then backtrack from it until
    the accepted objective sits below f(beta) + alpha * sufficient_decrease * D
    with D the (negative) model decrease bound.
    """
    cfg = LineSearchConfig() if config is None else cfg_check(config)
    if not np.any(state.delta_beta):
        raise InvalidInputError("line search requires a nonzero direction")
    if cfg.curvature_weight != 0.0:
        raise InvalidInputError(
            "line_search only supports curvature_weight = 0; the quadratic "
            "term is not available from the cached vectors"
        )

    evals = 0

    def f_at(alpha: float) -> float:
        nonlocal evals
        evals += 1
        return candidate_objective(
            alpha, labels, state.margins, state.delta_margins,
            state.beta, state.delta_beta, lam,
        )

    f_base = f_at(0.0)
    f_full = f_at(1.0)
    if f_full <= f_base * (1.0 - cfg.skip_decrease * np.sign(f_base)):
        return LineSearchResult(1.0, f_full, evals)

    grad_dir = gradient_direction_product(labels, state.margins, state.delta_margins)
    slope = armijo_slope(grad_dir, 0.0, state.beta, state.delta_beta, lam)
    if slope >= 0.0:
        raise NumericalError(
            f"non-descent direction: model decrease bound is {slope:.6e}"
        )

    best_alpha, best_f = 1.0, f_full
    alpha = cfg.backtrack_factor
    while alpha > cfg.min_alpha:
        f_alpha = f_at(alpha)
        if f_alpha < best_f:
            best_alpha, best_f = alpha, f_alpha
        alpha *= cfg.backtrack_factor

    alpha, f_alpha = best_alpha, best_f
    for _ in range(cfg.max_backtracks):
        if f_alpha <= f_base + alpha * cfg.sufficient_decrease * slope:
            return LineSearchResult(alpha, f_alpha, evals)
        alpha *= cfg.backtrack_factor
        f_alpha = f_at(alpha)
    raise StalledLineSearchError(
        f"no step satisfied the acceptance rule within {cfg.max_backtracks} "
        f"backtracks (bound {slope:.6e})"
    )


def cfg_check(config: LineSearchConfig) -> LineSearchConfig:
    if not isinstance(config, LineSearchConfig):
        raise InvalidInputError("config must be a LineSearchConfig")
    return config

"""Independent reference implementations used to certify the solver.

Everything here works on small dense instances and deliberately shares no
code with the production path: a proximal-gradient solver, the first-order
optimality residual, and finite-difference derivatives.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import InvalidInputError, NoConvergenceError


def _nll(margins, y):
    return float(np.logaddexp(0.0, -y * margins).sum())


def logistic_gradient(X, y, beta) -> np.ndarray:
    """Gradient of the logistic loss: X^T (sigmoid(X beta) - (y + 1) / 2)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return X.T @ (expit(X @ beta) - (y + 1.0) / 2.0)


def kkt_residual(X, y, beta, lam: float) -> float:
    """Largest first-order optimality violation of the penalized problem.

    For active coordinates this is |grad_j + lam * sign(beta_j)|; for zero
    coordinates the overshoot of |grad_j| beyond lam.
    """
    grad = logistic_gradient(X, y, beta)
    beta = np.asarray(beta, dtype=np.float64)
    active = beta != 0.0
    res = np.where(
        active,
        np.abs(grad + lam * np.sign(beta)),
        np.maximum(np.abs(grad) - lam, 0.0),
    )
    return float(res.max()) if res.size else 0.0


def _prox(point, amount):
    return np.sign(point) * np.maximum(np.abs(point) - amount, 0.0)


def proximal_gradient_oracle(
    X,
    y,
    lam: float,
    tol: float = 1e-8,
    max_iter: int = 1_000_000,
    accelerate: bool = True,
) -> np.ndarray:
    """Minimize the L1-penalized logistic loss by proximal gradient descent.

    Forward-backward steps with a backtracked step size floored at the exact
    global curvature bound (backtracking below 1/L can only be triggered by
    rounding, never by the majorization itself). With `accelerate` the steps
    carry Nesterov momentum that resets whenever the objective rises, which
    keeps the method monotone. Stops once the first-order residual reaches
    tol, so the returned point is self-certifying. Test-scale instances only.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise InvalidInputError("X must be (n, p) with matching labels")
    n, p = X.shape
    target = (y + 1.0) / 2.0
    # Smoothness constant of the loss; sigmoid curvature is at most 1/4.
    lipschitz = max(0.25 * np.linalg.norm(X, 2) ** 2, 1e-12)
    min_step = 1.0 / lipschitz

    beta = np.zeros(p)
    margins = np.zeros(n)
    lookout = beta
    lookout_margins = margins
    momentum = 1.0
    step = 1.0
    f_prev = _nll(margins, y)
    just_restarted = False
    for _ in range(max_iter):
        grad_here = X.T @ (expit(lookout_margins) - target)
        loss_here = _nll(lookout_margins, y)
        step = min(step * 2.0, 1e8)
        while True:
            cand = _prox(lookout - step * grad_here, step * lam)
            diff = cand - lookout
            cand_margins = X @ cand
            if step <= min_step:
                break
            bound = loss_here + grad_here @ diff + diff @ diff / (2.0 * step)
            if _nll(cand_margins, y) <= bound:
                break
            step = max(step * 0.5, min_step)

        residual = kkt_residual(X, y, cand, lam)
        if residual <= tol:
            return cand
        f_cand = _nll(cand_margins, y) + lam * np.abs(cand).sum()
        if accelerate and f_cand > f_prev and not just_restarted:
            # momentum overshot; replay this iteration as a plain step
            momentum = 1.0
            lookout = beta
            lookout_margins = margins
            just_restarted = True
            continue
        if accelerate:
            next_momentum = (1.0 + np.sqrt(1.0 + 4.0 * momentum * momentum)) / 2.0
            lookout = cand + ((momentum - 1.0) / next_momentum) * (cand - beta)
            lookout_margins = X @ lookout
            momentum = next_momentum
        else:
            lookout = cand
            lookout_margins = cand_margins
        beta, margins = cand, cand_margins
        f_prev = f_cand
        just_restarted = False
    raise NoConvergenceError(
        f"proximal gradient did not reach tolerance {tol} in {max_iter} iterations"
    )


def finite_difference_gradient(func, beta, step: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar black-box function at beta."""
    beta = np.asarray(beta, dtype=np.float64)
    out = np.zeros_like(beta)
    for j in range(beta.size):
        bump = np.zeros_like(beta)
        bump[j] = step
        out[j] = (func(beta + bump) - func(beta - bump)) / (2.0 * step)
    return out

"""Bulk-synchronous outer loop: parallel block solves, one all-reduce per
iteration, a shared line search, and the sparsity-aware stopping rule.

Every worker runs the identical `fit_rank` loop on its own shard. The only
communication is the summed (delta_beta, delta_margins) payload, after which
each worker deterministically reproduces the same line search and state
update, so no designated master is needed.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .data import (
    FeatureShard,
    FitReport,
    IterationStats,
    ModelState,
    as_labels,
    nnz,
    validate_shard_set,
)
from .errors import InvalidInputError
from .glm import build_workspace, negated_log_likelihood, objective
from .linesearch import LineSearchConfig, candidate_objective, line_search
from .reduction import InProcessReduction
from .subproblem import solve_subproblem


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of one fit: penalty, damping, line search, and stopping rules.

    rel_tol is the relative objective decrease under which the loop stops;
    full_step_tol is the relative objective increase tolerated when restoring
    the full step at termination (which recovers coefficients the last partial
    step left just short of exact zero).
    """

    lam: float
    damping: float = 1e-6
    line_search: LineSearchConfig = field(default_factory=LineSearchConfig)
    max_iter: int = 100
    rel_tol: float = 1e-6
    full_step_tol: float = 1e-6

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidInputError("penalty strength must be non-negative")
        if self.damping <= 0:
            raise InvalidInputError("damping must be positive")
        if self.rel_tol <= 0 or self.full_step_tol <= 0:
            raise InvalidInputError("tolerances must be positive")
        if self.max_iter < 1:
            raise InvalidInputError("max_iter must be at least 1")


@dataclass
class OuterStep:
    beta: np.ndarray
    margins: np.ndarray
    objective: float
    alpha: float
    line_search_evals: int
    delta_beta: np.ndarray
    delta_margins: np.ndarray


def check_convergence(iteration: int, f_prev: float, f_current: float,
                      config: SolverConfig) -> bool:
    """True when the outer loop should finish after this iteration."""
    rel = (f_prev - f_current) / max(abs(f_prev), 1.0)
    return rel < config.rel_tol or iteration >= config.max_iter


def outer_step(shard: FeatureShard, labels, beta, margins,
               config: SolverConfig, member) -> OuterStep | None:
    """One outer iteration from (beta, margins) as seen by one worker.

    Builds the frozen quadratic workspace, solves the local block, merges all
    blocks through the group's all-reduce, line-searches the merged direction,
    and returns the updated state. Returns None when the merged direction is
    exactly zero, which certifies the current point is a fixed point of the
    model.
    """
    workspace = build_workspace(labels, margins)
    local = solve_subproblem(shard, workspace, beta, config.lam, config.damping)
    payload = np.concatenate([local.dense_delta_beta(), local.delta_margins])
    total = member.allreduce_sum(payload)
    delta_beta = total[: shard.p]
    delta_margins = total[shard.p :]
    if not delta_beta.any():
        return None
    state = ModelState(beta, margins, delta_beta, delta_margins)
    ls = line_search(state, labels, config.lam, config.line_search)
    if ls.alpha == 1.0:
        new_beta = beta + delta_beta
        new_margins = margins + delta_margins
    else:
        new_beta = beta + ls.alpha * delta_beta
        new_margins = margins + ls.alpha * delta_margins
    return OuterStep(new_beta, new_margins, ls.objective, ls.alpha,
                     ls.evaluations, delta_beta, delta_margins)


def fit_rank(shard: FeatureShard, labels, config: SolverConfig, member,
             warmstart_beta=None) -> tuple[np.ndarray, FitReport]:
    """Run the full outer loop as one rank of a reduction group.

    With a warmstart the margins are rebuilt collectively (each rank sums its
    own features' contribution, one extra all-reduce merges them). All ranks
    return bitwise-identical coefficients.
    """
    y = as_labels(labels)
    if y.shape[0] != shard.n:
        raise InvalidInputError("label vector does not match the shard")
    started = time.perf_counter()
    if warmstart_beta is None:
        beta = np.zeros(shard.p)
        margins = np.zeros(shard.n)
    else:
        beta = np.array(warmstart_beta, dtype=np.float64)
        if beta.shape != (shard.p,):
            raise InvalidInputError("warmstart beta has the wrong length")
        margins = member.allreduce_sum(shard.margins_contribution(beta))
    f_current = objective(negated_log_likelihood(y, margins), beta, config.lam)
    report = FitReport(initial_objective=f_current)

    for iteration in range(1, config.max_iter + 1):
        tick = time.perf_counter()
        step = outer_step(shard, y, beta, margins, config, member)
        if step is None:
            report.termination = "direction_zero"
            break
        f_prev = f_current
        beta_prev, margins_prev = beta, margins
        beta, margins, f_current = step.beta, step.margins, step.objective
        report.iterations.append(IterationStats(
            iteration, f_current, step.alpha, nnz(beta),
            step.line_search_evals, time.perf_counter() - tick,
        ))
        if check_convergence(iteration, f_prev, f_current, config):
            rel = (f_prev - f_current) / max(abs(f_prev), 1.0)
            report.termination = (
                "objective_tolerance" if rel < config.rel_tol else "max_iterations"
            )
            if step.alpha != 1.0:
                f_full = candidate_objective(
                    1.0, y, margins_prev, step.delta_margins,
                    beta_prev, step.delta_beta, config.lam,
                )
                if f_full <= f_current * (1.0 + config.full_step_tol):
                    beta = beta_prev + step.delta_beta
                    margins = margins_prev + step.delta_margins
                    f_current = f_full
                    report.full_step_restored = True
            break

    report.final_objective = f_current
    report.seconds = time.perf_counter() - started
    return beta, report


def fit(shards, labels, config: SolverConfig, warmstart_beta=None,
        reduction=None, timeout: float = 60.0) -> tuple[np.ndarray, FitReport]:
    """Train over a full shard set with one in-process worker per shard.

    Workers are co-scheduled threads joined through an in-process reduction
    group; the algorithmic path is identical to the multi-process transport.
    Returns rank 0's (coefficients, report); all ranks agree bitwise.
    """
    shards = list(shards)
    validate_shard_set(shards)
    world = len(shards)
    if reduction is None:
        reduction = InProcessReduction(world, timeout=timeout)
    if world == 1:
        return fit_rank(shards[0], labels, config, reduction.member(0), warmstart_beta)

    results: list = [None] * world
    failures: list = [None] * world

    def run(rank: int) -> None:
        try:
            results[rank] = fit_rank(
                shards[rank], labels, config, reduction.member(rank), warmstart_beta
            )
        except BaseException as exc:  # noqa: BLE001 - re-raised on the caller
            failures[rank] = exc

    threads = [
        threading.Thread(target=run, args=(rank,), name=f"dglmnet-worker-{rank}")
        for rank in range(world)
    ]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    for exc in failures:
        if exc is not None:
            raise exc
    assert all(
        np.array_equal(results[0][0], results[rank][0]) for rank in range(1, world)
    ), "workers diverged; the reduction should make them bitwise identical"
    return results[0]

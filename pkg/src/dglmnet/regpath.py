"""Regularization path: threshold penalty detection and the warmstarted
geometric schedule, with optional held-out scoring per step."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np

from .data import nnz as count_nnz
from .data import as_labels
from .driver import SolverConfig, fit
from .errors import DataError, InvalidInputError
from .glm import build_workspace, class_probability
from .ingest import record_labels, record_margins
from .metrics import auprc, log_loss
from .reduction import allreduce_max
from .subproblem import coordinate_moments

PATH_CSV_HEADER = "lambda,nnz,train_objective,test_auprc,test_logloss,iterations,seconds"


@dataclass(frozen=True)
class PathConfig:
    """Schedule of penalties: the detected threshold halved `steps` times,
    or an explicit strictly decreasing grid."""

    steps: int = 20
    lambdas: Sequence[float] | None = None

    def schedule(self, lam_threshold: float) -> list[float]:
        if self.lambdas is not None:
            grid = [float(v) for v in self.lambdas]
            if not grid or any(v <= 0 for v in grid):
                raise InvalidInputError("explicit penalty grid must be positive")
            if any(b >= a for a, b in zip(grid, grid[1:])):
                raise InvalidInputError("explicit penalty grid must be strictly decreasing")
            return grid
        if self.steps < 1:
            raise InvalidInputError("steps must be at least 1")
        return [lam_threshold * 2.0 ** -i for i in range(1, self.steps + 1)]


@dataclass
class PathPoint:
    lam: float
    beta: np.ndarray
    nnz: int
    train_objective: float
    test_auprc: float | None
    test_logloss: float | None
    iterations: int
    seconds: float


def _shard_gradient_peak(shard, workspace) -> float:
    """Largest |coordinate numerator| at the zero model over owned features.

    Reuses the coordinate-update moments so the threshold compares bitwise
    with what the first solver cycle computes.
    """
    zero_margins = np.zeros(shard.n)
    peak = 0.0
    for k in range(shard.n_features):
        lo, hi = shard.indptr[k], shard.indptr[k + 1]
        if lo == hi:
            continue
        num, _ = coordinate_moments(
            shard.example_ids[lo:hi], shard.values[lo:hi],
            workspace, zero_margins, 0.0,
        )
        peak = max(peak, abs(num))
    return peak


def lambda_max(shards, labels) -> float:
    """Smallest penalty whose optimality region contains the zero model."""
    y = as_labels(labels)
    workspace = build_workspace(y, np.zeros(y.shape[0]))
    peak = max(_shard_gradient_peak(shard, workspace) for shard in shards)
    if peak == 0.0:
        raise DataError("degenerate dataset: the zero-model gradient vanishes")
    return peak


def lambda_max_rank(shard, labels, member) -> float:
    """Collective variant of lambda_max for one rank of a reduction group."""
    y = as_labels(labels)
    workspace = build_workspace(y, np.zeros(y.shape[0]))
    peak = allreduce_max(member, _shard_gradient_peak(shard, workspace))
    if peak == 0.0:
        raise DataError("degenerate dataset: the zero-model gradient vanishes")
    return peak


def iter_regularization_path(
    shards,
    labels,
    solver_config: SolverConfig,
    path_config: PathConfig | None = None,
    eval_records=None,
    timeout: float = 60.0,
) -> Iterator[PathPoint]:
    """Yield one fitted point per schedule step, warmstarting each from the last.

    Streaming lets callers flush partial results; a failing step propagates
    its error after everything before it has been yielded.
    """
    path_config = path_config or PathConfig()
    eval_labels = record_labels(eval_records) if eval_records else None
    warm = None
    for lam in path_config.schedule(lambda_max(shards, labels)):
        config = replace(solver_config, lam=lam)
        beta, report = fit(shards, labels, config, warmstart_beta=warm, timeout=timeout)
        warm = beta
        test_auprc = test_logloss = None
        if eval_records:
            scores = class_probability(record_margins(eval_records, beta))
            test_auprc = auprc(scores, eval_labels)
            test_logloss = log_loss(scores, eval_labels)
        yield PathPoint(
            lam=lam,
            beta=beta,
            nnz=count_nnz(beta),
            train_objective=report.final_objective,
            test_auprc=test_auprc,
            test_logloss=test_logloss,
            iterations=len(report.iterations),
            seconds=report.seconds,
        )


def regularization_path(*args, **kwargs) -> list[PathPoint]:
    return list(iter_regularization_path(*args, **kwargs))


def path_point_row(point: PathPoint) -> str:
    """One CSV row matching PATH_CSV_HEADER."""
    def cell(value):
        return "" if value is None else repr(float(value))

    return ",".join([
        repr(float(point.lam)),
        str(point.nnz),
        repr(float(point.train_objective)),
        cell(point.test_auprc),
        cell(point.test_logloss),
        str(point.iterations),
        repr(float(point.seconds)),
    ])


def write_path_csv(points, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(PATH_CSV_HEADER + "\n")
        for point in points:
            handle.write(path_point_row(point) + "\n")

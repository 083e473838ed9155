"""Core dataset and model containers.

The training matrix is held column-wise ("by feature"): each worker owns a
disjoint set of feature columns, with every column stored as a posting list
of (example_id, value) pairs for the nonzero entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, NamedTuple

import numpy as np

from .errors import InvalidInputError


class FeaturePosting(NamedTuple):
    """One nonzero matrix entry inside a feature's posting list."""

    example_id: int
    value: float


def as_labels(values) -> np.ndarray:
    """Validate and return a float64 label vector with entries in {-1, +1}."""
    y = np.asarray(values, dtype=np.float64)
    if y.ndim != 1:
        raise InvalidInputError("labels must be a 1-d vector")
    if not np.all((y == 1.0) | (y == -1.0)):
        raise InvalidInputError("labels must be -1 or +1")
    return y


def nnz(beta) -> int:
    """Number of exactly nonzero coefficients (the solver writes exact zeros)."""
    return int(np.count_nonzero(np.asarray(beta)))


@dataclass(frozen=True, eq=False)
class FeatureShard:
    """One worker's slice of the dataset: posting lists for its owned features.

    Columns are stored CSC-style: ``feature_ids[k]`` owns the postings in
    ``example_ids[indptr[k]:indptr[k+1]]`` / ``values[indptr[k]:indptr[k+1]]``.
    Immutable after construction and safe to share across workers.
    """

    shard_id: int
    n: int
    p: int
    feature_ids: np.ndarray
    indptr: np.ndarray
    example_ids: np.ndarray
    values: np.ndarray

    @property
    def nnz_local(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.feature_ids.shape[0])

    @classmethod
    def from_columns(
        cls,
        shard_id: int,
        n: int,
        p: int,
        columns: Mapping[int, tuple[np.ndarray, np.ndarray]],
    ) -> "FeatureShard":
        """Build a shard from a mapping feature_id -> (example_ids, values)."""
        feature_ids = np.array(sorted(columns), dtype=np.int64)
        indptr = np.zeros(len(feature_ids) + 1, dtype=np.int64)
        ids_parts = []
        val_parts = []
        for k, j in enumerate(feature_ids):
            ids, vals = columns[int(j)]
            ids_parts.append(np.asarray(ids, dtype=np.int64))
            val_parts.append(np.asarray(vals, dtype=np.float64))
            indptr[k + 1] = indptr[k] + len(ids_parts[-1])
        example_ids = np.concatenate(ids_parts) if ids_parts else np.zeros(0, np.int64)
        values = np.concatenate(val_parts) if val_parts else np.zeros(0, np.float64)
        shard = cls(shard_id, n, p, feature_ids, indptr, example_ids, values)
        shard.validate()
        return shard

    def validate(self) -> None:
        """Check the shard's structural invariants, raising on violation."""
        if self.n < 0 or self.p < 0:
            raise InvalidInputError("n and p must be non-negative")
        if self.feature_ids.ndim != 1:
            raise InvalidInputError("feature_ids must be 1-d")
        if len(self.feature_ids) and (
            np.any(np.diff(self.feature_ids) <= 0)
            or self.feature_ids[0] < 0
            or self.feature_ids[-1] >= self.p
        ):
            raise InvalidInputError("feature ids must be strictly increasing in [0, p)")
        if len(self.indptr) != len(self.feature_ids) + 1 or self.indptr[0] != 0:
            raise InvalidInputError("indptr does not match the feature list")
        if np.any(np.diff(self.indptr) < 0) or self.indptr[-1] != len(self.values):
            raise InvalidInputError("indptr must be monotone and span the postings")
        if len(self.example_ids) != len(self.values):
            raise InvalidInputError("example_ids and values must align")
        if len(self.example_ids) and (
            self.example_ids.min() < 0 or self.example_ids.max() >= self.n
        ):
            raise InvalidInputError("example ids must lie in [0, n)")
        for k in range(self.n_features):
            ids = self.example_ids[self.indptr[k] : self.indptr[k + 1]]
            if len(ids) > 1 and np.any(np.diff(ids) <= 0):
                raise InvalidInputError(
                    f"postings of feature {int(self.feature_ids[k])} are not "
                    "strictly increasing by example id"
                )
        if np.any(self.values == 0.0) or not np.all(np.isfinite(self.values)):
            raise InvalidInputError("posting values must be finite and nonzero")

    def column(self, feature_id: int) -> tuple[np.ndarray, np.ndarray]:
        """Posting arrays (example_ids, values) of one owned feature."""
        k = int(np.searchsorted(self.feature_ids, feature_id))
        if k >= self.n_features or self.feature_ids[k] != feature_id:
            raise KeyError(f"feature {feature_id} is not owned by shard {self.shard_id}")
        lo, hi = self.indptr[k], self.indptr[k + 1]
        return self.example_ids[lo:hi], self.values[lo:hi]

    def postings_for(self, feature_id: int) -> list[FeaturePosting]:
        ids, vals = self.column(feature_id)
        return [FeaturePosting(int(i), float(v)) for i, v in zip(ids, vals)]

    def triples(self) -> Iterator[tuple[int, int, float]]:
        """Yield (example_id, feature_id, value) for every stored entry."""
        for k in range(self.n_features):
            j = int(self.feature_ids[k])
            lo, hi = self.indptr[k], self.indptr[k + 1]
            for i, v in zip(self.example_ids[lo:hi], self.values[lo:hi]):
                yield int(i), j, float(v)

    def margins_contribution(self, beta: np.ndarray) -> np.ndarray:
        """Partial margins over owned features: sum_j beta_j * x_ij."""
        out = np.zeros(self.n)
        for k in range(self.n_features):
            b = beta[self.feature_ids[k]]
            if b == 0.0:
                continue
            lo, hi = self.indptr[k], self.indptr[k + 1]
            out[self.example_ids[lo:hi]] += b * self.values[lo:hi]
        return out


def validate_shard_set(shards, p: int | None = None) -> None:
    """Check that shards are disjoint and together cover every feature id."""
    if not shards:
        raise InvalidInputError("empty shard set")
    p = shards[0].p if p is None else p
    n = shards[0].n
    seen = np.zeros(p, dtype=np.int64)
    for shard in shards:
        if shard.p != p or shard.n != n:
            raise InvalidInputError("shards disagree on dataset dimensions")
        seen[shard.feature_ids] += 1
    if np.any(seen > 1):
        dup = int(np.argmax(seen > 1))
        raise InvalidInputError(f"feature {dup} is owned by more than one shard")
    if np.any(seen == 0):
        miss = int(np.argmax(seen == 0))
        raise InvalidInputError(f"feature {miss} is not owned by any shard")


def to_dense(shards) -> np.ndarray:
    """Reassemble the dense (n, p) matrix from a shard set. Test-scale only."""
    n, p = shards[0].n, shards[0].p
    dense = np.zeros((n, p))
    for shard in shards:
        for i, j, v in shard.triples():
            dense[i, j] = v
    return dense


def recompute_margins(shards, beta: np.ndarray) -> np.ndarray:
    """Margins beta^T x_i recomputed from scratch over a full shard set."""
    out = np.zeros(shards[0].n)
    for shard in shards:
        out += shard.margins_contribution(beta)
    return out


@dataclass
class ModelState:
    """Coefficients plus the cached vectors that make line search dataset-free.

    margins holds beta^T x_i and delta_margins holds delta_beta^T x_i; both are
    maintained incrementally so no step ever rereads the training matrix.
    """

    beta: np.ndarray
    margins: np.ndarray
    delta_beta: np.ndarray
    delta_margins: np.ndarray


@dataclass
class IterationStats:
    iteration: int
    objective: float
    alpha: float
    nnz: int
    line_search_evals: int
    seconds: float


@dataclass
class FitReport:
    """Per-iteration trace of one fit plus its termination summary."""

    initial_objective: float
    iterations: list[IterationStats] = field(default_factory=list)
    termination: str = ""
    final_objective: float = float("nan")
    full_step_restored: bool = False
    seconds: float = 0.0

    def objectives(self) -> list[float]:
        return [rec.objective for rec in self.iterations]

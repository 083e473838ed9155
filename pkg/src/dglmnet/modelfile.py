"""Model serialization: TSV of nonzero weights behind a one-line header."""

from __future__ import annotations

import re

import numpy as np

from .data import nnz
from .errors import DataError

_MODEL_HEADER = re.compile(r"^#dglmnet-model v1 p=(\d+) lambda=(\S+) nnz=(\d+)$")


def save_model(path, beta, lam: float) -> None:
    """Write `feature_id<TAB>weight` rows for the nonzero coefficients."""
    beta = np.asarray(beta, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(
            f"#dglmnet-model v1 p={beta.shape[0]} lambda={float(lam)!r} nnz={nnz(beta)}\n"
        )
        for j in np.flatnonzero(beta):
            handle.write(f"{int(j)}\t{float(beta[j])!r}\n")


def load_model(path) -> tuple[np.ndarray, float]:
    """Read a model file back into (dense beta, penalty strength)."""
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"could not open model file {path}: {exc}") from exc
    with handle:
        header = handle.readline().rstrip("\n")
        match = _MODEL_HEADER.match(header)
        if not match:
            raise DataError(f"{path}: bad model header {header!r}")
        p = int(match.group(1))
        lam = float(match.group(2))
        declared_nnz = int(match.group(3))
        beta = np.zeros(p)
        for line_no, raw in enumerate(handle, start=2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split("\t")
            try:
                j = int(parts[0])
                weight = float(parts[1])
            except (IndexError, ValueError):
                raise DataError(f"{path}: line {line_no}: bad row {line!r}") from None
            if not 0 <= j < p:
                raise DataError(f"{path}: line {line_no}: feature id {j} outside [0, {p})")
            beta[j] = weight
        if nnz(beta) != declared_nnz:
            raise DataError(
                f"{path}: header declares nnz={declared_nnz} but file has {nnz(beta)}"
            )
    return beta, lam

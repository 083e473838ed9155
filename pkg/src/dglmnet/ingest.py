"""Dataset ingestion: by-example parsing, feature partitioning, transposition
to per-shard by-feature files, and shard loading.

File formats
------------
by-example text: one example per line, ``<label> <id>:<value> ...`` with
label in {+1, 1, -1, 0} ("0" maps to -1) and only nonzero values.

by-feature shard: header ``#dglmnet v1 shard=<m> of=<M> n=<n> p=<p>`` then one
line per owned feature, ``<feature_id> <example_id>:<value> ...``, features
ascending, example ids ascending, values written with shortest round-trip
decimals so conversion is bit-exact.

labels file: one label per line. manifest.json records n, p, the shard count,
total nonzeros, per-shard feature counts, and the file names.
"""

from __future__ import annotations

import heapq
import json
import os
import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .data import FeatureShard, as_labels
from .errors import DataError, InvalidInputError

MANIFEST_NAME = "manifest.json"
LABELS_NAME = "labels.txt"
_SHARD_HEADER = re.compile(r"^#dglmnet v1 shard=(\d+) of=(\d+) n=(\d+) p=(\d+)$")

_LABEL_TOKENS = {"+1": 1, "1": 1, "-1": -1, "0": -1}


class ByExampleRecord(NamedTuple):
    """One parsed example: its label and sorted (feature_id, value) pairs."""

    label: int
    features: tuple[tuple[int, float], ...]


def _parse_feature_token(token: str, line_no: int) -> tuple[int, float]:
    head, sep, tail = token.partition(":")
    if not sep:
        raise DataError(f"line {line_no}: malformed token {token!r}")
    try:
        feature_id = int(head)
        value = float(tail)
    except ValueError:
        raise DataError(f"line {line_no}: malformed token {token!r}") from None
    if feature_id < 0:
        raise DataError(f"line {line_no}: negative feature id {feature_id}")
    if value == 0.0:
        raise DataError(f"line {line_no}: explicit zero value for feature {feature_id}")
    if not np.isfinite(value):
        raise DataError(f"line {line_no}: non-finite value for feature {feature_id}")
    return feature_id, value


def parse_by_example(lines: Iterable[str]):
    """Parse a by-example text stream.

    Returns (records, n, p, nnz) with p = 1 + the largest feature id seen.
    """
    records: list[ByExampleRecord] = []
    max_feature = -1
    nnz = 0
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split()
        label = _LABEL_TOKENS.get(tokens[0])
        if label is None:
            raise DataError(f"line {line_no}: bad label {tokens[0]!r}")
        features = sorted(_parse_feature_token(t, line_no) for t in tokens[1:])
        for (a, _), (b, _) in zip(features, features[1:]):
            if a == b:
                raise DataError(f"line {line_no}: duplicate feature id {a}")
        if features:
            max_feature = max(max_feature, features[-1][0])
            nnz += len(features)
        records.append(ByExampleRecord(label, tuple(features)))
    if not records:
        raise DataError("dataset is empty")
    return records, len(records), max_feature + 1, nnz


def parse_by_example_file(path):
    with open(path, "r", encoding="utf-8") as handle:
        try:
            return parse_by_example(handle)
        except DataError as exc:
            raise DataError(f"{path}: {exc}") from None


def write_by_example(records: Sequence[ByExampleRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            fields = [f"{record.label:+d}"]
            fields += [f"{j}:{value!r}" for j, value in record.features]
            handle.write(" ".join(fields) + "\n")


@dataclass(frozen=True)
class FeaturePartition:
    """Assignment of every feature id to one shard, with per-shard loads."""

    world: int
    assignment: np.ndarray
    shard_nnz: np.ndarray

    def owned(self, shard_id: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == shard_id)


def partition_features(nnz_per_feature, world: int) -> FeaturePartition:
    """Greedy balanced partition: heaviest features first, lightest shard wins.

    Ties on shard load break toward the lower shard id; features of equal
    weight are placed in ascending id order. Deterministic.
    """
    if world < 1:
        raise InvalidInputError("shard count must be at least 1")
    loads = np.asarray(nnz_per_feature, dtype=np.int64)
    p = loads.shape[0]
    assignment = np.zeros(p, dtype=np.int64)
    shard_nnz = np.zeros(world, dtype=np.int64)
    heap = [(0, m) for m in range(world)]
    heapq.heapify(heap)
    order = sorted(range(p), key=lambda j: (-loads[j], j))
    for j in order:
        load, shard = heapq.heappop(heap)
        assignment[j] = shard
        heapq.heappush(heap, (load + int(loads[j]), shard))
    for m in range(world):
        shard_nnz[m] = loads[assignment == m].sum()
    return FeaturePartition(world, assignment, shard_nnz)


def feature_nnz(records: Sequence[ByExampleRecord], p: int) -> np.ndarray:
    counts = np.zeros(p, dtype=np.int64)
    for record in records:
        for j, _ in record.features:
            counts[j] += 1
    return counts


def shard_file_name(shard_id: int) -> str:
    return f"shard_{shard_id}.txt"


def convert_to_by_feature(
    records: Sequence[ByExampleRecord],
    partition: FeaturePartition,
    out_dir,
) -> dict:
    """Transpose by-example records into per-shard by-feature files.

    Writes one shard file per partition bucket, the shared labels file, and
    the manifest; returns the manifest dict. The (example, feature, value)
    triple multiset is preserved exactly.
    """
    n = len(records)
    p = partition.assignment.shape[0]
    world = partition.world
    os.makedirs(out_dir, exist_ok=True)

    columns: dict[int, list[tuple[int, float]]] = {}
    nnz = 0
    for i, record in enumerate(records):
        for j, value in record.features:
            columns.setdefault(j, []).append((i, value))
            nnz += 1

    per_shard_features = []
    for m in range(world):
        owned = partition.owned(m)
        per_shard_features.append(int(owned.shape[0]))
        path = os.path.join(out_dir, shard_file_name(m))
        try:
            with open(path, "w", encoding="utf-8") as handle:
                handle.write(f"#dglmnet v1 shard={m} of={world} n={n} p={p}\n")
                for j in owned:
                    postings = columns.get(int(j), [])
                    fields = [str(int(j))]
                    fields += [f"{i}:{value!r}" for i, value in postings]
                    handle.write(" ".join(fields) + "\n")
        except OSError as exc:
            raise DataError(f"could not write shard file {path}: {exc}") from exc

    labels_path = os.path.join(out_dir, LABELS_NAME)
    with open(labels_path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(f"{record.label:+d}\n")

    manifest = {
        "format": "dglmnet-v1",
        "n": n,
        "p": p,
        "shards": world,
        "nnz": nnz,
        "per_shard_feature_counts": per_shard_features,
        "labels_file": LABELS_NAME,
        "shard_files": [shard_file_name(m) for m in range(world)],
    }
    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return manifest


def load_shard(path) -> FeatureShard:
    """Stream one shard file into memory, validating as it reads.

    Errors include the byte offset of the offending line. Memory use is the
    shard's own postings plus the posting-list index.
    """
    offset = 0
    columns: dict[int, tuple[list[int], list[float]]] = {}
    try:
        handle = open(path, "rb")
    except OSError as exc:
        raise DataError(f"could not open shard file {path}: {exc}") from exc
    with handle:
        header_raw = handle.readline()
        header = header_raw.decode("utf-8", errors="replace").rstrip("\n")
        match = _SHARD_HEADER.match(header)
        if not match:
            raise DataError(f"{path}: byte 0: bad shard header {header!r}")
        shard_id, world, n, p = (int(g) for g in match.groups())
        if shard_id >= world:
            raise DataError(f"{path}: byte 0: shard id {shard_id} >= shard count {world}")
        offset += len(header_raw)
        last_feature = -1
        for raw in handle:
            line = raw.decode("utf-8", errors="replace").strip()
            if line:
                tokens = line.split()
                try:
                    feature_id = int(tokens[0])
                except ValueError:
                    raise DataError(
                        f"{path}: byte {offset}: bad feature id {tokens[0]!r}"
                    ) from None
                if feature_id <= last_feature:
                    raise DataError(
                        f"{path}: byte {offset}: feature ids must be strictly "
                        f"increasing (saw {feature_id} after {last_feature})"
                    )
                if feature_id >= p:
                    raise DataError(
                        f"{path}: byte {offset}: feature id {feature_id} outside [0, {p})"
                    )
                last_feature = feature_id
                ids: list[int] = []
                values: list[float] = []
                for token in tokens[1:]:
                    head, sep, tail = token.partition(":")
                    try:
                        example_id = int(head)
                        value = float(tail) if sep else 0.0
                    except ValueError:
                        example_id, value = -1, 0.0
                    if not sep or example_id < 0 or value == 0.0 or not np.isfinite(value):
                        raise DataError(
                            f"{path}: byte {offset}: bad posting {token!r} "
                            f"for feature {feature_id}"
                        )
                    if example_id >= n:
                        raise DataError(
                            f"{path}: byte {offset}: example id {example_id} "
                            f"outside [0, {n}) for feature {feature_id}"
                        )
                    if ids and example_id <= ids[-1]:
                        raise DataError(
                            f"{path}: byte {offset}: example ids must be strictly "
                            f"increasing for feature {feature_id}"
                        )
                    ids.append(example_id)
                    values.append(value)
                columns[feature_id] = (
                    np.asarray(ids, dtype=np.int64),
                    np.asarray(values, dtype=np.float64),
                )
            offset += len(raw)
    try:
        return FeatureShard.from_columns(shard_id, n, p, columns)
    except InvalidInputError as exc:
        raise DataError(f"{path}: {exc}") from exc


def load_labels(path) -> np.ndarray:
    labels = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            token = raw.strip()
            if not token:
                continue
            label = _LABEL_TOKENS.get(token)
            if label is None:
                raise DataError(f"{path}: line {line_no}: bad label {token!r}")
            labels.append(label)
    if not labels:
        raise DataError(f"{path}: empty labels file")
    return as_labels(np.asarray(labels, dtype=np.float64))


def load_manifest(directory) -> dict:
    path = os.path.join(directory, MANIFEST_NAME)
    try:
        with open(path, "r", encoding="utf-8") as handle:
            manifest = json.load(handle)
    except OSError as exc:
        raise DataError(f"could not open manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    if manifest.get("format") != "dglmnet-v1":
        raise DataError(f"{path}: unknown manifest format {manifest.get('format')!r}")
    return manifest


def load_dataset(directory):
    """Load every shard plus labels from a converted directory."""
    manifest = load_manifest(directory)
    labels = load_labels(os.path.join(directory, manifest["labels_file"]))
    shards = []
    for name in manifest["shard_files"]:
        shard = load_shard(os.path.join(directory, name))
        if shard.n != manifest["n"] or shard.p != manifest["p"]:
            raise DataError(f"{name}: dimensions disagree with the manifest")
        shards.append(shard)
    if labels.shape[0] != manifest["n"]:
        raise DataError("labels file length disagrees with the manifest")
    return shards, labels


def reshard(shards, world: int) -> list[FeatureShard]:
    """Repartition loaded shards into a different number of balanced shards."""
    columns: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    n, p = shards[0].n, shards[0].p
    counts = np.zeros(p, dtype=np.int64)
    for shard in shards:
        for k in range(shard.n_features):
            j = int(shard.feature_ids[k])
            lo, hi = shard.indptr[k], shard.indptr[k + 1]
            columns[j] = (shard.example_ids[lo:hi], shard.values[lo:hi])
            counts[j] = hi - lo
    partition = partition_features(counts, world)
    empty = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64))
    return [
        FeatureShard.from_columns(
            m, n, p, {int(j): columns.get(int(j), empty) for j in partition.owned(m)}
        )
        for m in range(world)
    ]


def records_to_shards(records: Sequence[ByExampleRecord], p: int, world: int):
    """Partition features and build in-memory shards straight from records."""
    columns: dict[int, tuple[list, list]] = {}
    for i, record in enumerate(records):
        for j, value in record.features:
            ids, values = columns.setdefault(j, ([], []))
            ids.append(i)
            values.append(value)
    counts = np.zeros(p, dtype=np.int64)
    for j, (ids, _) in columns.items():
        counts[j] = len(ids)
    partition = partition_features(counts, world)
    empty = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64))
    shards = []
    for m in range(world):
        owned = {}
        for j in partition.owned(m):
            ids, values = columns.get(int(j), empty)
            owned[int(j)] = (
                np.asarray(ids, dtype=np.int64),
                np.asarray(values, dtype=np.float64),
            )
        shards.append(FeatureShard.from_columns(m, len(records), p, owned))
    return shards


def records_to_dense(records: Sequence[ByExampleRecord], p: int) -> np.ndarray:
    dense = np.zeros((len(records), p))
    for i, record in enumerate(records):
        for j, value in record.features:
            dense[i, j] = value
    return dense


def record_labels(records: Sequence[ByExampleRecord]) -> np.ndarray:
    return as_labels(np.asarray([r.label for r in records], dtype=np.float64))


def record_margins(records: Sequence[ByExampleRecord], beta) -> np.ndarray:
    """Margins beta^T x_i for by-example records."""
    beta = np.asarray(beta, dtype=np.float64)
    out = np.zeros(len(records))
    for i, record in enumerate(records):
        total = 0.0
        for j, value in record.features:
            if j < beta.shape[0]:
                total += beta[j] * value
        out[i] = total
    return out

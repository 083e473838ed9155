"""All-reduce summation over a fixed binary tree of ranks.

Every collective sums in the same deterministic order (own vector, then the
left subtree, then the right subtree, recursively), so results are bitwise
identical across runs, across transports, and across participants.
"""

from __future__ import annotations

import queue

import numpy as np

from .errors import ProtocolError, ReductionError

SUM_KIND = "sum"
BARRIER_KIND = "barrier"


def tree_parent(rank: int) -> int:
    return (rank - 1) // 2


def tree_children(rank: int, world: int) -> list[int]:
    return [c for c in (2 * rank + 1, 2 * rank + 2) if c < world]


def tree_allreduce_reference(vectors) -> np.ndarray:
    """Single-threaded oracle for the tree-order sum over all ranks' vectors."""
    world = len(vectors)

    def subtree(rank: int) -> np.ndarray:
        acc = np.array(vectors[rank], dtype=np.float64)
        for child in tree_children(rank, world):
            acc += subtree(child)
        return acc

    return subtree(0)


def allreduce_max(member, value: float) -> float:
    """Max-reduce built on the sum primitive: one slot per rank, then max."""
    slots = np.zeros(member.world)
    slots[member.rank] = value
    return float(member.allreduce_sum(slots).max())


class InProcessMember:
    """One rank's handle on an in-process reduction group."""

    def __init__(self, group: "InProcessReduction", rank: int):
        self._group = group
        self.rank = rank
        self.world = group.world

    def allreduce_sum(self, local) -> np.ndarray:
        """Blocking collective sum; every rank receives the identical total."""
        vec = np.array(local, dtype=np.float64)
        if vec.ndim != 1:
            raise ProtocolError("allreduce payload must be a 1-d vector")
        return self._group._collective(self.rank, SUM_KIND, vec)

    def barrier(self) -> None:
        """Return only after every rank of the group has arrived."""
        self._group._collective(self.rank, BARRIER_KIND, None)

    def close(self) -> None:
        pass


class InProcessReduction:
    """Rendezvous cells for M co-scheduled workers in one process.

    All ranks must issue the same sequence of collectives; the per-rank queues
    keep successive collectives aligned without sequence numbers.
    """

    def __init__(self, world: int, timeout: float = 60.0):
        if world < 1:
            raise ProtocolError("group size must be at least 1")
        self.world = world
        self.timeout = timeout
        self._up = [queue.Queue() for _ in range(world)]
        self._down = [queue.Queue() for _ in range(world)]

    def member(self, rank: int) -> InProcessMember:
        if not 0 <= rank < self.world:
            raise ProtocolError(f"rank {rank} outside group of size {self.world}")
        return InProcessMember(self, rank)

    def _take(self, q: queue.Queue, waiting_for: int):
        try:
            return q.get(timeout=self.timeout)
        except queue.Empty:
            raise ReductionError(
                f"collective timed out after {self.timeout}s waiting for rank "
                f"{waiting_for}"
            ) from None

    def _check(self, kind, length, got_kind, got_length, peer: int):
        if kind != got_kind:
            raise ProtocolError(
                f"rank {peer} joined a {got_kind} collective while this rank "
                f"runs {kind}"
            )
        if length != got_length:
            raise ProtocolError(
                f"payload length mismatch with rank {peer}: {length} vs {got_length}"
            )

    def _collective(self, rank: int, kind: str, vec):
        length = -1 if vec is None else len(vec)
        acc = None if vec is None else vec.copy()
        for child in tree_children(rank, self.world):
            got_kind, got_length, payload = self._take(self._up[child], child)
            self._check(kind, length, got_kind, got_length, child)
            if acc is not None:
                acc += payload
        if rank == 0:
            result = acc
        else:
            self._up[rank].put((kind, length, acc))
            got_kind, got_length, result = self._take(
                self._down[rank], tree_parent(rank)
            )
            self._check(kind, length, got_kind, got_length, tree_parent(rank))
        for child in tree_children(rank, self.world):
            self._down[child].put((kind, length, result))
        return None if result is None else result.copy()

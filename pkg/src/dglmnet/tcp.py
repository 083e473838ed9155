"""TCP tree transport for the reduction group.

Wire format: every message is one frame of
``b"DGLM" | version:u16 | type:u8 | payload_length:u64 | payload``
with all integers little-endian. Data payloads are packed little-endian
float64; control payloads (register, topology, hello) are UTF-8 JSON.

Join protocol: every rank opens a listener for its tree children, then
connects to the coordinator (hosted by rank 0) and registers rank, group
size, payload length, and its listener address. Once all ranks registered,
the coordinator answers each with its parent's address; children then dial
their parents and the tree stays connected for all collectives. The
coordinator is used for join and teardown only; reduction traffic flows
along tree edges, O(payload * log M) per node.
"""

from __future__ import annotations

import json
import socket
import struct
import threading
import time

import numpy as np

from .errors import ProtocolError, ReductionError
from .reduction import tree_children, tree_parent

MAGIC = b"DGLM"
VERSION = 1
_HEADER = struct.Struct("<4sHBQ")

MSG_REGISTER = 1
MSG_TOPOLOGY = 2
MSG_HELLO = 3
MSG_CONTRIBUTE = 4
MSG_PARTIAL_SUM = 5
MSG_BROADCAST = 6
MSG_BARRIER = 7


def parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise ProtocolError(f"endpoint must look like host:port, got {text!r}")
    return host, int(port)


def send_frame(sock: socket.socket, msg_type: int, payload: bytes, peer: str) -> None:
    try:
        sock.sendall(_HEADER.pack(MAGIC, VERSION, msg_type, len(payload)) + payload)
    except (OSError, ValueError) as exc:
        raise ReductionError(f"send to {peer} failed: {exc}") from exc


def _recv_exact(sock: socket.socket, count: int, peer: str) -> bytes:
    chunks = []
    remaining = count
    while remaining:
        try:
            chunk = sock.recv(min(remaining, 1 << 20))
        except socket.timeout:
            raise ReductionError(f"timed out waiting for {peer}") from None
        except OSError as exc:
            raise ReductionError(f"connection to {peer} failed: {exc}") from exc
        if not chunk:
            raise ReductionError(f"{peer} disconnected")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def recv_frame(sock: socket.socket, peer: str) -> tuple[int, bytes]:
    header = _recv_exact(sock, _HEADER.size, peer)
    magic, version, msg_type, length = _HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError(f"bad frame magic from {peer}: {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported protocol version {version} from {peer}")
    return msg_type, _recv_exact(sock, length, peer)


def _send_json(sock, msg_type, obj, peer):
    send_frame(sock, msg_type, json.dumps(obj).encode(), peer)


def _recv_json(sock, expected_type, peer):
    msg_type, payload = recv_frame(sock, peer)
    if msg_type != expected_type:
        raise ProtocolError(f"expected message type {expected_type} from {peer}, got {msg_type}")
    return json.loads(payload.decode())


class _Coordinator(threading.Thread):
    """Rank 0's registration service: collect M registrations, reply topology."""

    def __init__(self, endpoint, world, timeout):
        super().__init__(name="dglmnet-coordinator", daemon=True)
        self.world = world
        self.timeout = timeout
        self.error: Exception | None = None
        self._server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._server.settimeout(timeout)
        self._server.bind(endpoint)
        self._server.listen(world)

    def run(self):
        conns: dict[int, socket.socket] = {}
        listeners: dict[int, tuple[str, int]] = {}
        try:
            payload_len = None
            deadline = time.monotonic() + self.timeout
            while len(conns) < self.world:
                if time.monotonic() > deadline:
                    missing = sorted(set(range(self.world)) - set(conns))
                    raise ReductionError(
                        f"registration timed out; missing ranks {missing}"
                    )
                conn, _ = self._server.accept()
                conn.settimeout(self.timeout)
                reg = _recv_json(conn, MSG_REGISTER, "registering member")
                rank = reg["rank"]
                if not 0 <= rank < self.world:
                    raise ProtocolError(f"registered rank {rank} outside [0, {self.world})")
                if rank in conns:
                    raise ProtocolError(f"rank {rank} registered twice")
                if reg["world"] != self.world:
                    raise ProtocolError(
                        f"rank {rank} registered group size {reg['world']}, "
                        f"expected {self.world}"
                    )
                if payload_len is None:
                    payload_len = reg["payload_len"]
                elif reg["payload_len"] != payload_len:
                    raise ProtocolError(
                        f"rank {rank} registered payload length {reg['payload_len']}, "
                        f"others use {payload_len}"
                    )
                conns[rank] = conn
                listeners[rank] = (reg["host"], reg["port"])
            for rank, conn in conns.items():
                parent = None if rank == 0 else list(listeners[tree_parent(rank)])
                _send_json(conn, MSG_TOPOLOGY, {"parent": parent}, f"rank {rank}")
        except Exception as exc:  # noqa: BLE001 - forwarded to members and rank 0
            self.error = exc
            for conn in conns.values():
                try:
                    _send_json(conn, MSG_TOPOLOGY, {"error": str(exc)}, "member")
                except Exception:
                    pass
        finally:
            for conn in conns.values():
                conn.close()
            self._server.close()


def _dial(endpoint, timeout, what) -> socket.socket:
    deadline = time.monotonic() + timeout
    while True:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.settimeout(timeout)
        try:
            sock.connect(endpoint)
            return sock
        except OSError as exc:
            sock.close()
            if time.monotonic() > deadline:
                raise ReductionError(f"could not reach {what} at {endpoint}: {exc}") from exc
            time.sleep(0.02)


class TcpReductionGroup:
    """One rank of an M-participant reduction group over TCP tree edges.

    Construction is collective: it returns once this rank is wired to its
    tree neighbors. All ranks must then issue the same sequence of
    collectives. Rank 0 additionally hosts the coordinator.
    """

    def __init__(
        self,
        coordinator: str | tuple[str, int],
        rank: int,
        world: int,
        payload_len: int,
        timeout: float = 60.0,
        listen_host: str = "127.0.0.1",
    ):
        if isinstance(coordinator, str):
            coordinator = parse_endpoint(coordinator)
        if not 0 <= rank < world:
            raise ProtocolError(f"rank {rank} outside group of size {world}")
        self.rank = rank
        self.world = world
        self.timeout = timeout
        self._coordinator_thread = None
        self._parent_sock: socket.socket | None = None
        self._child_socks: dict[int, socket.socket] = {}

        if rank == 0:
            self._coordinator_thread = _Coordinator(coordinator, world, timeout)
            self._coordinator_thread.start()

        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.settimeout(timeout)
        listener.bind((listen_host, 0))
        listener.listen(2)
        try:
            reg_sock = _dial(coordinator, timeout, "coordinator")
            try:
                _send_json(
                    reg_sock,
                    MSG_REGISTER,
                    {
                        "rank": rank,
                        "world": world,
                        "payload_len": int(payload_len),
                        "host": listen_host,
                        "port": listener.getsockname()[1],
                    },
                    "coordinator",
                )
                topology = _recv_json(reg_sock, MSG_TOPOLOGY, "coordinator")
            finally:
                reg_sock.close()
            if "error" in topology:
                raise ProtocolError(f"registration rejected: {topology['error']}")

            if topology["parent"] is not None:
                host, port = topology["parent"]
                self._parent_sock = _dial((host, port), timeout, f"rank {tree_parent(rank)}")
                _send_json(self._parent_sock, MSG_HELLO, {"rank": rank}, f"rank {tree_parent(rank)}")

            expected = set(tree_children(rank, world))
            while expected - set(self._child_socks):
                try:
                    conn, _ = listener.accept()
                except socket.timeout:
                    missing = sorted(expected - set(self._child_socks))
                    raise ReductionError(
                        f"timed out waiting for child ranks {missing}"
                    ) from None
                conn.settimeout(timeout)
                hello = _recv_json(conn, MSG_HELLO, "connecting child")
                child = hello["rank"]
                if child not in expected or child in self._child_socks:
                    raise ProtocolError(f"unexpected child rank {child} for rank {rank}")
                self._child_socks[child] = conn
        finally:
            listener.close()

    def _check_coordinator(self):
        thread = self._coordinator_thread
        if thread is not None and thread.error is not None:
            raise thread.error

    def _exchange(self, up_type: int, payload: bytes, length: int, kind: str):
        """Run one collective: gather up the tree, broadcast back down."""
        self._check_coordinator()
        acc = None
        if up_type != MSG_BARRIER:
            acc = np.frombuffer(payload, dtype="<f8").copy()
        for child in sorted(self._child_socks):
            peer = f"rank {child}"
            msg_type, child_payload = recv_frame(self._child_socks[child], peer)
            if up_type == MSG_BARRIER:
                if msg_type != MSG_BARRIER:
                    raise ProtocolError(f"{peer} sent message type {msg_type} during a barrier")
                continue
            if msg_type not in (MSG_CONTRIBUTE, MSG_PARTIAL_SUM):
                raise ProtocolError(f"{peer} sent message type {msg_type} during a {kind}")
            child_vec = np.frombuffer(child_payload, dtype="<f8")
            if len(child_vec) != length:
                raise ProtocolError(
                    f"payload length mismatch with {peer}: {length} vs {len(child_vec)}"
                )
            acc += child_vec
        if self.rank == 0:
            result_bytes = b"" if acc is None else acc.astype("<f8").tobytes()
        else:
            parent = f"rank {tree_parent(self.rank)}"
            if up_type == MSG_BARRIER:
                send_frame(self._parent_sock, MSG_BARRIER, b"", parent)
            else:
                out_type = MSG_PARTIAL_SUM if self._child_socks else MSG_CONTRIBUTE
                send_frame(self._parent_sock, out_type, acc.astype("<f8").tobytes(), parent)
            msg_type, result_bytes = recv_frame(self._parent_sock, parent)
            want = MSG_BARRIER if up_type == MSG_BARRIER else MSG_BROADCAST
            if msg_type != want:
                raise ProtocolError(f"{parent} sent message type {msg_type}, expected {want}")
            if up_type != MSG_BARRIER and len(result_bytes) != 8 * length:
                raise ProtocolError(
                    f"broadcast length mismatch from {parent}: "
                    f"{len(result_bytes) // 8} vs {length}"
                )
        down_type = MSG_BARRIER if up_type == MSG_BARRIER else MSG_BROADCAST
        for child in sorted(self._child_socks):
            send_frame(self._child_socks[child], down_type, result_bytes, f"rank {child}")
        if up_type == MSG_BARRIER:
            return None
        return np.frombuffer(result_bytes, dtype="<f8").copy()

    def allreduce_sum(self, local) -> np.ndarray:
        vec = np.ascontiguousarray(np.asarray(local, dtype="<f8"))
        if vec.ndim != 1:
            raise ProtocolError("allreduce payload must be a 1-d vector")
        return self._exchange(MSG_CONTRIBUTE, vec.tobytes(), len(vec), "sum")

    def barrier(self) -> None:
        self._exchange(MSG_BARRIER, b"", 0, "barrier")

    def close(self) -> None:
        for sock in self._child_socks.values():
            sock.close()
        self._child_socks.clear()
        if self._parent_sock is not None:
            self._parent_sock.close()
            self._parent_sock = None
        if self._coordinator_thread is not None:
            self._coordinator_thread.join(timeout=self.timeout)
            self._coordinator_thread = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

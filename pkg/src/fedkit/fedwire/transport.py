"""Boundary-preserving message transports: in-process queues and TCP.

Every transport speaks whole frames from the codec, so a message arrives
bit-exact or not at all. A connection has one logical owner; the coordinator
gives each client connection its own handler.
"""

from __future__ import annotations

import os
import queue
import socket
import ssl
import time
from dataclasses import dataclass

from . import codec
from .messages import (
    DEFAULT_PORT,
    MAX_FRAME_BYTES,
    ConnectionLostError,
    Message,
    TransportTimeoutError,
)

IN_PROCESS = "in_process"
TCP_PLAIN = "tcp_plain"
TCP_SECURE = "tcp_secure"
TRANSPORT_MODES = (IN_PROCESS, TCP_PLAIN, TCP_SECURE)


@dataclass(frozen=True)
class Endpoint:
    host: str
    port: int

    def __str__(self) -> str:
        return f"{self.host}:{self.port}"


def parse_endpoint(text: str) -> Endpoint:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must look like host:port, got {text!r}")
    return Endpoint(host=host, port=int(port))


def default_endpoint() -> Endpoint:
    """127.0.0.1:7787 unless the FEDKIT_ADDR env var overrides it."""
    override = os.environ.get("FEDKIT_ADDR")
    if override:
        return parse_endpoint(override)
    return Endpoint("127.0.0.1", DEFAULT_PORT)


class _ClosedMarker:
    pass


_CLOSED = _ClosedMarker()


class InProcessConnection:
    """One side of a queue pair; frames still pass through the codec."""

    def __init__(self, inbox: "queue.Queue", outbox: "queue.Queue"):
        self._inbox = inbox
        self._outbox = outbox
        self._closed = False

    def send(self, msg: Message) -> None:
        if self._closed:
            raise ConnectionLostError("connection closed locally")
        self._outbox.put(codec.encode(msg))

    def recv(self, timeout: float | None = None) -> Message:
        start = time.perf_counter()
        try:
            frame = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise TransportTimeoutError(time.perf_counter() - start) from None
        if isinstance(frame, _ClosedMarker):
            # Keep the marker visible for any later recv call.
            self._inbox.put(frame)
            raise ConnectionLostError("peer closed the connection")
        msg, consumed = codec.decode(frame)
        if consumed != len(frame):
            raise ConnectionLostError("in-process frame boundary violated")
        return msg

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._outbox.put(_CLOSED)


def in_process_pair() -> tuple[InProcessConnection, InProcessConnection]:
    a_to_b: queue.Queue = queue.Queue()
    b_to_a: queue.Queue = queue.Queue()
    return (
        InProcessConnection(inbox=b_to_a, outbox=a_to_b),
        InProcessConnection(inbox=a_to_b, outbox=b_to_a),
    )


class TcpConnection:
    """Length-delimited frames over a (possibly TLS-wrapped) stream socket."""

    def __init__(self, sock: socket.socket, max_frame_bytes: int = MAX_FRAME_BYTES):
        self._sock = sock
        self._max_frame_bytes = max_frame_bytes
        self._buffer = b""

    def send(self, msg: Message) -> None:
        try:
            self._sock.sendall(codec.encode(msg))
        except (BrokenPipeError, ConnectionResetError, OSError) as exc:
            raise ConnectionLostError(f"send failed: {exc}") from exc

    def _fill(self, needed: int, deadline: float | None, start: float) -> None:
        while len(self._buffer) < needed:
            if deadline is not None:
                remaining = deadline - time.perf_counter()
                if remaining <= 0:
                    raise TransportTimeoutError(time.perf_counter() - start)
                self._sock.settimeout(remaining)
            else:
                self._sock.settimeout(None)
            try:
                chunk = self._sock.recv(min(1 << 20, max(4096, needed - len(self._buffer))))
            except (socket.timeout, ssl.SSLWantReadError):
                raise TransportTimeoutError(time.perf_counter() - start) from None
            except (ConnectionResetError, OSError) as exc:
                raise ConnectionLostError(f"recv failed: {exc}") from exc
            if not chunk:
                raise ConnectionLostError("peer closed the connection")
            self._buffer += chunk

    def recv(self, timeout: float | None = None) -> Message:
        start = time.perf_counter()
        deadline = None if timeout is None else start + timeout
        self._fill(15, deadline, start)
        total = codec.frame_size(self._buffer, self._max_frame_bytes)
        self._fill(total, deadline, start)
        msg, consumed = codec.decode(self._buffer[:total], self._max_frame_bytes)
        self._buffer = self._buffer[consumed:]
        return msg

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class Listener:
    """Accepts framed-message connections, optionally TLS-wrapped."""

    def __init__(self, host: str, port: int, ssl_context: ssl.SSLContext | None = None,
                 max_frame_bytes: int = MAX_FRAME_BYTES):
        self._ssl_context = ssl_context
        self._max_frame_bytes = max_frame_bytes
        self._sock = socket.create_server((host, port))

    @property
    def endpoint(self) -> Endpoint:
        host, port = self._sock.getsockname()[:2]
        return Endpoint(host, port)

    def accept(self, timeout: float | None = None) -> TcpConnection:
        start = time.perf_counter()
        self._sock.settimeout(timeout)
        try:
            conn, _ = self._sock.accept()
        except socket.timeout:
            raise TransportTimeoutError(time.perf_counter() - start) from None
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        if self._ssl_context is not None:
            conn = self._ssl_context.wrap_socket(conn, server_side=True)
        return TcpConnection(conn, self._max_frame_bytes)

    def close(self) -> None:
        self._sock.close()


def connect(endpoint: Endpoint, ssl_context: ssl.SSLContext | None = None,
            server_hostname: str | None = None, timeout: float | None = 10.0,
            max_frame_bytes: int = MAX_FRAME_BYTES) -> TcpConnection:
    sock = socket.create_connection((endpoint.host, endpoint.port), timeout=timeout)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    if ssl_context is not None:
        sock = ssl_context.wrap_socket(sock, server_hostname=server_hostname or endpoint.host)
    sock.settimeout(None)
    return TcpConnection(sock, max_frame_bytes)

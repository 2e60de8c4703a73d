"""Frame transports: an in-process queue pair and a TCP socket wrapper.

Both move whole frames (length prefix included), so the session layer sees
identical bytes either way.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading

from ..errors import FrameError, SessionError
from .messages import HEADER_SIZE, MAX_FRAME_SIZE

__all__ = [
    "LocalTransport",
    "make_local_pair",
    "TcpTransport",
    "connect_tcp",
    "TcpServer",
]

_CLOSED = None  # queue sentinel


class LocalTransport:
    """One endpoint of an in-process frame pipe."""

    def __init__(self, outbox: queue.Queue, inbox: queue.Queue, timeout: float = 60.0):
        self._outbox = outbox
        self._inbox = inbox
        self._timeout = timeout
        self._closed = False

    def send_frame(self, frame: bytes) -> None:
        if self._closed:
            raise SessionError("transport is closed")
        self._outbox.put(frame)

    def recv_frame(self) -> bytes:
        try:
            frame = self._inbox.get(timeout=self._timeout)
        except queue.Empty:
            raise SessionError("timed out waiting for the peer") from None
        if frame is _CLOSED:
            raise SessionError("peer closed the transport")
        return frame

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._outbox.put(_CLOSED)


def make_local_pair(timeout: float = 60.0) -> tuple[LocalTransport, LocalTransport]:
    a_to_b: queue.Queue = queue.Queue()
    b_to_a: queue.Queue = queue.Queue()
    return (
        LocalTransport(a_to_b, b_to_a, timeout),
        LocalTransport(b_to_a, a_to_b, timeout),
    )


class TcpTransport:
    """Frame reader/writer over a connected socket."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def _recv_exact(self, size: int) -> bytes:
        chunks = []
        remaining = size
        while remaining:
            try:
                chunk = self._sock.recv(min(remaining, 1 << 20))
            except OSError as exc:
                raise SessionError(f"socket error: {exc}") from exc
            if not chunk:
                raise SessionError("connection closed mid-frame")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def send_frame(self, frame: bytes) -> None:
        try:
            self._sock.sendall(frame)
        except OSError as exc:
            raise SessionError(f"socket error: {exc}") from exc

    def recv_frame(self) -> bytes:
        header = self._recv_exact(HEADER_SIZE)
        (length,) = struct.unpack("<I", header)
        if length > MAX_FRAME_SIZE:
            raise FrameError(f"declared payload of {length} bytes exceeds the limit")
        return header + self._recv_exact(length)

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


def connect_tcp(host: str, port: int, timeout: float = 30.0) -> TcpTransport:
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise SessionError(f"cannot connect to {host}:{port}: {exc}") from exc
    sock.settimeout(timeout)
    return TcpTransport(sock)


class TcpServer:
    """Accept loop that runs one responder per incoming connection.

    ``responder_factory`` builds a fresh object with a ``serve(transport)``
    method for every connection; finished responders stay in ``responders``
    so callers can read their counters.
    """

    def __init__(self, responder_factory, host: str = "127.0.0.1", port: int = 0):
        self._factory = responder_factory
        self._listener = socket.create_server((host, port))
        self._listener.settimeout(0.2)
        self.host, self.port = self._listener.getsockname()[:2]
        self.responders: list = []
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._workers: list[threading.Thread] = []

    def _handle(self, conn: socket.socket) -> None:
        transport = TcpTransport(conn)
        responder = self._factory()
        self.responders.append(responder)
        try:
            responder.serve(transport)
        except Exception:
            pass  # a broken session must not kill the accept loop
        finally:
            transport.close()

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            conn.settimeout(60.0)
            worker = threading.Thread(target=self._handle, args=(conn,), daemon=True)
            worker.start()
            self._workers.append(worker)

    def start(self) -> "TcpServer":
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
        for worker in self._workers:
            worker.join(timeout=5.0)
        self._listener.close()

    def __enter__(self) -> "TcpServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

"""Byte-stream transports.

A transport hands out connection objects with a tiny contract: send_frame,
close, and two callbacks the router installs (on_frame, on_close). The TCP
implementation here gives every connection a reader thread; the simulated
implementation lives in the simharness and delivers frames as logical-clock
events. Both exchange the HLO1 preamble before any frame.
"""

from __future__ import annotations

import socket
import threading

from ..errors import E_CONNECT_REFUSED, EngineError
from .frames import Frame, FrameDecoder, FrameError, PREAMBLE, encode_frame


class TcpConnection:
    def __init__(self, sock: socket.socket, label: str):
        self.sock = sock
        self.label = label
        self.on_frame = None
        self.on_close = None
        self._wlock = threading.Lock()
        self._closed = False
        self._reader: threading.Thread | None = None

    def start_reader(self, expect_preamble: bool) -> None:
        self._reader = threading.Thread(target=self._read_loop,
                                        args=(expect_preamble,), daemon=True,
                                        name=f"mh-read-{self.label}")
        self._reader.start()

    def send_frame(self, frame: Frame) -> None:
        data = encode_frame(frame)
        try:
            with self._wlock:
                self.sock.sendall(data)
        except OSError as exc:
            raise EngineError("HostUnreachable", f"send failed: {exc}") from exc

    def send_preamble(self) -> None:
        with self._wlock:
            self.sock.sendall(PREAMBLE)

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()

    def _read_loop(self, expect_preamble: bool) -> None:
        decoder = FrameDecoder()
        try:
            if expect_preamble:
                got = b""
                while len(got) < len(PREAMBLE):
                    chunk = self.sock.recv(len(PREAMBLE) - len(got))
                    if not chunk:
                        raise FrameError("closed before preamble")
                    got += chunk
                if got != PREAMBLE:
                    raise FrameError(f"bad preamble {got!r}")
            while True:
                data = self.sock.recv(65536)
                if not data:
                    break
                for frame in decoder.feed(data):
                    if self.on_frame is not None:
                        self.on_frame(self, frame)
        except (OSError, FrameError):
            pass
        finally:
            self.close()
            if self.on_close is not None:
                self.on_close(self)


def _parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, _, port = endpoint.rpartition(":")
    return host or "127.0.0.1", int(port)


class TcpTransport:
    def __init__(self):
        self._listener: socket.socket | None = None
        self._accept_thread: threading.Thread | None = None
        self._stopping = False

    def listen(self, endpoint: str, on_accept) -> None:
        host, port = _parse_endpoint(endpoint)
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((host, port))
        sock.listen(16)
        self._listener = sock
        self.bound_port = sock.getsockname()[1]

        def loop():
            while not self._stopping:
                try:
                    client, addr = sock.accept()
                except OSError:
                    return
                conn = TcpConnection(client, f"{addr[0]}:{addr[1]}")
                on_accept(conn)
                conn.send_preamble()
                conn.start_reader(expect_preamble=True)

        self._accept_thread = threading.Thread(target=loop, daemon=True,
                                               name="mh-accept")
        self._accept_thread.start()

    def dial(self, endpoint: str) -> TcpConnection:
        host, port = _parse_endpoint(endpoint)
        try:
            sock = socket.create_connection((host, port), timeout=10)
        except OSError as exc:
            raise EngineError(E_CONNECT_REFUSED, f"{endpoint}: {exc}") from exc
        sock.settimeout(None)
        conn = TcpConnection(sock, endpoint)
        conn.send_preamble()
        return conn

    def start_dialed(self, conn: TcpConnection) -> None:
        conn.start_reader(expect_preamble=True)

    def close(self) -> None:
        self._stopping = True
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass

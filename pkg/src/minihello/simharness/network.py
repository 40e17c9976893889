"""Simulated transport: links with integer-tick latency, FIFO per direction.

Frames are encoded to bytes exactly as on TCP, so sizes, codecs, and the
frame log match the real transport. A dropped link makes in-flight and
future frames vanish; a killed host stops receiving.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from ..errors import E_CONNECT_REFUSED, EngineError
from ..net.frames import Frame, decode_frame_bytes, encode_frame
from .scheduler import SimScheduler


@dataclass
class _Link:
    a: str
    b: str
    latency: int = 1
    up: bool = True
    extra_delay: int = 0


class SimConnection:
    def __init__(self, network: "SimNetwork", local: str, remote: str):
        self.network = network
        self.local = local
        self.remote = remote
        self.label = f"{local}->{remote}"
        self.on_frame = None
        self.on_close = None
        self.peer: "SimConnection | None" = None
        self.alive = True
        self.outbox: deque[bytes] = deque()

    def send_frame(self, frame: Frame) -> None:
        if not self.alive:
            raise EngineError("HostUnreachable", "connection closed")
        self.network.transmit(self, encode_frame(frame))

    def close(self) -> None:
        if not self.alive:
            return
        self.alive = False
        peer = self.peer
        if peer is not None and peer.alive:
            self.network.schedule_peer_close(peer)


class SimNetwork:
    def __init__(self, scheduler: SimScheduler):
        self.scheduler = scheduler
        self.links: dict[frozenset, _Link] = {}
        self.listeners: dict[str, object] = {}
        self.host_alive: dict[str, bool] = {}
        self.frame_log: list[tuple] = []  # (tick, src, dst, kind, size, info)
        self.frame_info = None  # optional callable(Frame) -> str

    # topology -----------------------------------------------------------

    def add_host(self, name: str) -> None:
        self.host_alive[name] = True

    def add_link(self, a: str, b: str, latency: int = 1) -> None:
        self.links[frozenset((a, b))] = _Link(a, b, latency)

    def link_between(self, a: str, b: str) -> _Link | None:
        return self.links.get(frozenset((a, b)))

    def drop_link(self, a: str, b: str) -> None:
        link = self.link_between(a, b)
        if link is None:
            raise EngineError("UnknownEntity", f"no link {a}-{b}")
        link.up = False

    def set_extra_delay(self, a: str, b: str, delay: int) -> None:
        link = self.link_between(a, b)
        if link is None:
            raise EngineError("UnknownEntity", f"no link {a}-{b}")
        link.extra_delay = delay

    def kill_host(self, name: str) -> None:
        if name not in self.host_alive:
            raise EngineError("UnknownEntity", f"no host {name}")
        self.host_alive[name] = False
        self.scheduler.kill(name)

    # transport interface (per-host facade) --------------------------------

    def transport_for(self, name: str) -> "SimTransport":
        return SimTransport(self, name)

    def dial(self, src: str, dst: str) -> SimConnection:
        link = self.link_between(src, dst)
        if link is None or not link.up:
            raise EngineError(E_CONNECT_REFUSED, f"no link {src}-{dst}")
        listener = self.listeners.get(dst)
        if listener is None or not self.host_alive.get(dst, False):
            raise EngineError(E_CONNECT_REFUSED, f"{dst} is not listening")
        out = SimConnection(self, src, dst)
        back = SimConnection(self, dst, src)
        out.peer, back.peer = back, out
        listener(back)
        return out

    # delivery -------------------------------------------------------------

    def transmit(self, conn: SimConnection, data: bytes) -> None:
        link = self.link_between(conn.local, conn.remote)
        if link is None or not link.up:
            return  # vanishes
        conn.outbox.append(data)
        delay = link.latency + link.extra_delay
        self.scheduler.schedule(delay, lambda: self._pump(conn, link),
                                conn.remote)

    def _pump(self, conn: SimConnection, link: _Link) -> None:
        if not conn.outbox:
            return
        data = conn.outbox.popleft()
        if not link.up or not self.host_alive.get(conn.remote, False):
            return
        peer = conn.peer
        if peer is None or not peer.alive or peer.on_frame is None:
            return
        frame = decode_frame_bytes(data)
        info = self.frame_info(frame) if self.frame_info else frame.kind_name
        self.frame_log.append((self.scheduler.now, conn.local, conn.remote,
                               frame.kind_name, len(frame.payload), info))
        peer.on_frame(peer, frame)

    def schedule_peer_close(self, peer: SimConnection) -> None:
        def do_close():
            if peer.alive:
                peer.alive = False
                if peer.on_close is not None:
                    peer.on_close(peer)
        self.scheduler.schedule(1, do_close, peer.local)


class SimTransport:
    """The per-host transport facade handed to a Router."""

    def __init__(self, network: SimNetwork, host: str):
        self.network = network
        self.host = host

    def listen(self, endpoint: str, on_accept) -> None:
        self.network.listeners[self.host] = on_accept

    def dial(self, endpoint: str) -> SimConnection:
        return self.network.dial(self.host, endpoint)

    def close(self) -> None:
        self.network.listeners.pop(self.host, None)

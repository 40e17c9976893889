"""Real-time host assembly: engine + router + TCP transport + thread scheduler."""

from __future__ import annotations

import random
import sys
import time

from .engine.engine import Engine, EngineConfig
from .errors import EngineError
from .net.router import Router
from .net.transport import TcpTransport
from .runpack.image import RunpackImage
from .runtime import ThreadScheduler


class Node:
    def __init__(self, config: EngineConfig):
        self.config = config
        self.scheduler = ThreadScheduler()
        rng = random.Random(time.time_ns() ^ hash(config.host_name))
        self.engine = Engine(config, self.scheduler, rng,
                             incarnation=time.time_ns() & 0xFFFFFFFF)
        self.transport = TcpTransport()
        self.router = Router(config.host_name, self.transport, self.scheduler,
                             config, self.engine)
        self._stdout_file = None
        if config.stdout_path:
            self._stdout_file = open(config.stdout_path, "ab", buffering=0)
            self.engine.stdout_sink = self._stdout_file.write
            self.engine.capture_stdout = False
        else:
            self.engine.stdout_sink = self._write_stdout
            self.engine.capture_stdout = False

    @staticmethod
    def _write_stdout(data: bytes) -> None:
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()

    def start(self) -> None:
        self.router.listen()

    @property
    def bound_port(self) -> int | None:
        return getattr(self.transport, "bound_port", None)

    def connect_seeds(self) -> None:
        for seed in self.config.seeds:
            self.router.connect(seed).wait_blocking()

    def run_main(self, image: RunpackImage, argv: list[str]) -> int:
        fut = self.engine.run_main(image, argv)
        code = fut.wait_blocking()
        self.drain()
        return code if isinstance(code, int) else 0

    def drain(self, timeout_s: float = 30.0) -> None:
        deadline = time.monotonic() + timeout_s
        while time.monotonic() < deadline:
            if self.engine.queues_idle():
                return
            time.sleep(0.01)

    def shutdown(self) -> None:
        self.router.shutdown()
        self.transport.close()
        self.scheduler.shutdown()
        if self._stdout_file is not None:
            self._stdout_file.close()


def start_node(config: EngineConfig) -> Node:
    node = Node(config)
    node.start()
    node.connect_seeds()
    return node


__all__ = ["Node", "start_node", "EngineError"]

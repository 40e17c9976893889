"""Big-endian binary reader/writer used by the image format and the wire codecs."""

from __future__ import annotations

import struct


class ShortRead(Exception):
    """Raised when a reader runs past the end of its buffer."""


class Writer:
    __slots__ = ("buf",)

    def __init__(self):
        self.buf = bytearray()

    def u8(self, n: int) -> "Writer":
        self.buf.append(n & 0xFF)
        return self

    def u16(self, n: int) -> "Writer":
        self.buf += struct.pack(">H", n)
        return self

    def u32(self, n: int) -> "Writer":
        self.buf += struct.pack(">I", n)
        return self

    def u64(self, n: int) -> "Writer":
        self.buf += struct.pack(">Q", n)
        return self

    def i64(self, n: int) -> "Writer":
        self.buf += struct.pack(">q", n)
        return self

    def raw(self, data: bytes | bytearray) -> "Writer":
        self.buf += data
        return self

    def wstr(self, s: str) -> "Writer":
        data = s.encode("utf-8")
        if len(data) > 0xFFFF:
            raise ValueError("string too long for wire")
        self.u16(len(data))
        self.buf += data
        return self

    def lp_bytes(self, data: bytes | bytearray) -> "Writer":
        """Length-prefixed (u32) byte block."""
        self.u32(len(data))
        self.buf += data
        return self

    def getvalue(self) -> bytes:
        return bytes(self.buf)


class Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes | bytearray | memoryview):
        self.data = memoryview(data) if not isinstance(data, memoryview) else data
        self.pos = 0

    def _take(self, n: int) -> memoryview:
        if self.pos + n > len(self.data):
            raise ShortRead(f"need {n} bytes at {self.pos}, have {len(self.data) - self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self._take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def i64(self) -> int:
        return struct.unpack(">q", self._take(8))[0]

    def raw(self, n: int) -> bytes:
        return bytes(self._take(n))

    def wstr(self) -> str:
        n = self.u16()
        return bytes(self._take(n)).decode("utf-8")

    def lp_bytes(self) -> bytes:
        n = self.u32()
        return bytes(self._take(n))

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def at_end(self) -> bool:
        return self.pos >= len(self.data)

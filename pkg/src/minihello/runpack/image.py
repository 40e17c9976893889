"""Runpack image format and the per-engine pack store.

A .rpk file is: magic HRPK, u16 format version, then length-prefixed
sections in order: package name, content hash, class table, constant pool,
method bodies. All integers big-endian. The content hash is SHA-256 over
the serialized name/class-table/constants/bodies sections (everything but
the magic, version, and the hash section itself), so identical packages
compile to byte-identical, identically-hashed images.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field

from ..bio import Reader, ShortRead, Writer
from ..errors import E_HASH_MISMATCH, EngineError
from . import ir

MAGIC = b"HRPK"
FORMAT_VERSION = 1


class ImageFormatError(Exception):
    """Raised on a bad image: code is one of BadMagic, VersionUnsupported,
    HashMismatch, TruncatedImage, MalformedImage."""

    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


@dataclass
class RunpackImage:
    package: str
    classes: list[ir.ClassCode]
    constants: list[bytes]
    content_hash: bytes = b""
    version: int = FORMAT_VERSION
    _by_name: dict = field(default_factory=dict, repr=False)

    def find_class(self, name: str) -> ir.ClassCode | None:
        if not self._by_name:
            self._by_name = {c.name: c for c in self.classes}
        return self._by_name.get(name)

    def find_main(self) -> tuple[ir.ClassCode, ir.MethodCode] | None:
        for cls in self.classes:
            for m in cls.methods:
                if m.name == "main" and m.has(ir.MQ_STATIC):
                    return cls, m
        return None


# --- section writers ----------------------------------------------------------

def _write_classes(image: RunpackImage) -> bytes:
    w = Writer()
    w.u16(len(image.classes))
    for cls in image.classes:
        w.wstr(cls.name)
        w.u8(cls.quals)
        w.u16(len(cls.fields))
        for fname, fty in cls.fields:
            w.wstr(fname)
            ir.write_type(w, fty)
        w.u16(len(cls.methods))
        for m in cls.methods:
            w.wstr(m.name)
            w.u8(m.quals)
            w.u8(len(m.params))
            for p in m.params:
                w.wstr(p.name)
                ir.write_type(w, p.ty)
                w.u8(1 if p.copy else 0)
            ir.write_type(w, m.ret)
            w.u8(1 if m.ret_copy else 0)
            w.u16(m.n_slots)
    return w.getvalue()


def _write_constants(image: RunpackImage) -> bytes:
    w = Writer()
    w.u32(len(image.constants))
    for c in image.constants:
        w.lp_bytes(c)
    return w.getvalue()


def _write_bodies(image: RunpackImage) -> bytes:
    w = Writer()
    for cls in image.classes:
        for m in cls.methods:
            bw = Writer()
            ir.write_node(bw, m.body)
            w.lp_bytes(bw.getvalue())
    return w.getvalue()


def _hashed_sections(image: RunpackImage) -> bytes:
    w = Writer()
    w.wstr(image.package)
    name_sec = w.getvalue()
    body = Writer()
    body.lp_bytes(name_sec)
    body.lp_bytes(_write_classes(image))
    body.lp_bytes(_write_constants(image))
    body.lp_bytes(_write_bodies(image))
    return body.getvalue()


def compute_hash(image: RunpackImage) -> bytes:
    return hashlib.sha256(_hashed_sections(image)).digest()


def serialize(image: RunpackImage) -> bytes:
    hashed = _hashed_sections(image)
    digest = hashlib.sha256(hashed).digest()
    r = Reader(hashed)
    name_sec = r.lp_bytes()
    classes_sec = r.lp_bytes()
    constants_sec = r.lp_bytes()
    bodies_sec = r.lp_bytes()
    w = Writer()
    w.raw(MAGIC)
    w.u16(image.version)
    w.lp_bytes(name_sec)
    w.lp_bytes(digest)
    w.lp_bytes(classes_sec)
    w.lp_bytes(constants_sec)
    w.lp_bytes(bodies_sec)
    return w.getvalue()


# --- section readers ------------------------------------------------------------

def _read_classes(data: bytes) -> list[ir.ClassCode]:
    r = Reader(data)
    classes = []
    for _ in range(r.u16()):
        name = r.wstr()
        quals = r.u8()
        fields = []
        for _ in range(r.u16()):
            fields.append((r.wstr(), ir.read_type(r)))
        methods = []
        for _ in range(r.u16()):
            mname = r.wstr()
            mquals = r.u8()
            params = []
            for _ in range(r.u8()):
                pname = r.wstr()
                pty = ir.read_type(r)
                params.append(ir.IrParam(pname, pty, r.u8() != 0))
            ret = ir.read_type(r)
            ret_copy = r.u8() != 0
            n_slots = r.u16()
            methods.append(ir.MethodCode(mname, mquals, params, ret, ret_copy,
                                         n_slots, ir.IrBlock([])))
        classes.append(ir.ClassCode(name, quals, fields, methods))
    if not r.at_end():
        raise ImageFormatError("MalformedImage", "trailing bytes in class table")
    return classes


def deserialize(data: bytes) -> RunpackImage:
    try:
        r = Reader(data)
        magic = r.raw(4)
        if magic != MAGIC:
            raise ImageFormatError("BadMagic", f"expected {MAGIC!r}")
        version = r.u16()
        if version != FORMAT_VERSION:
            raise ImageFormatError("VersionUnsupported", f"version {version}")
        name_sec = r.lp_bytes()
        digest = r.lp_bytes()
        classes_sec = r.lp_bytes()
        constants_sec = r.lp_bytes()
        bodies_sec = r.lp_bytes()
    except ShortRead as exc:
        raise ImageFormatError("TruncatedImage", str(exc)) from exc

    recount = Writer()
    recount.lp_bytes(name_sec)
    recount.lp_bytes(classes_sec)
    recount.lp_bytes(constants_sec)
    recount.lp_bytes(bodies_sec)
    actual = hashlib.sha256(recount.getvalue()).digest()
    if actual != digest:
        raise ImageFormatError("HashMismatch",
                               f"header {digest.hex()[:12]}.. body {actual.hex()[:12]}..")

    try:
        package = Reader(name_sec).wstr()
        classes = _read_classes(classes_sec)
        cr = Reader(constants_sec)
        constants = [cr.lp_bytes() for _ in range(cr.u32())]
        br = Reader(bodies_sec)
        for cls in classes:
            for m in cls.methods:
                body_bytes = br.lp_bytes()
                body = ir.read_node(Reader(body_bytes))
                if not isinstance(body, ir.IrBlock):
                    raise ImageFormatError("MalformedImage", "method body is not a block")
                ir.validate_refs(body, len(constants), max(m.n_slots, 1))
                m.body = body
        if not br.at_end():
            raise ImageFormatError("MalformedImage", "trailing bytes in bodies")
    except ShortRead as exc:
        raise ImageFormatError("TruncatedImage", str(exc)) from exc
    except ir.IrFormatError as exc:
        raise ImageFormatError("MalformedImage", str(exc)) from exc

    return RunpackImage(package, classes, constants, digest, version)


def load_file(path: str) -> RunpackImage:
    with open(path, "rb") as f:
        return deserialize(f.read())


# --- pack store -------------------------------------------------------------------

ORIGIN_LOCAL = "local-disk"
ORIGIN_NETWORK = "network-fetched"


class PackStore:
    """Name -> image map with atomic installs and concurrent readers.

    A network-fetched image is never silently replaced by an image with a
    different content hash.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: dict[str, tuple[RunpackImage, str]] = {}

    def install(self, image: RunpackImage, origin: str = ORIGIN_LOCAL) -> None:
        if not image.content_hash:
            image.content_hash = compute_hash(image)
        with self._lock:
            existing = self._entries.get(image.package)
            if existing is not None:
                old_image, old_origin = existing
                if old_image.content_hash != image.content_hash:
                    if old_origin == ORIGIN_NETWORK:
                        raise EngineError(
                            E_HASH_MISMATCH,
                            f"refusing to replace fetched package '{image.package}' "
                            "with a different image")
                else:
                    return  # identical image already present
            self._entries[image.package] = (image, origin)

    def resolve(self, name: str) -> RunpackImage | None:
        with self._lock:
            entry = self._entries.get(name)
        return entry[0] if entry else None

    def origin(self, name: str) -> str | None:
        with self._lock:
            entry = self._entries.get(name)
        return entry[1] if entry else None

    def names(self) -> list[str]:
        with self._lock:
            return sorted(self._entries)

"""Wire encoding of runtime values.

Tag-length-value, big-endian. Tags: 0 null, 1 bool, 2 int, 3 char, 4 array,
5 object-node, 6 remote-ref, 7 back-ref. Object graphs travel as a node
list: the first visit of a node emits tag 5 with its class and fields, every
revisit emits tag 7 with the node's index, so shared nodes and cycles
round-trip exactly. char arrays are encoded as raw bytes for bulk transfer.
"""

from __future__ import annotations

from ..bio import Reader, ShortRead, Writer
from ..values import (Array, Char, CharArray, ClassKey, ObjectRef, TAG_ARRAY,
                      TAG_BACK_REF, TAG_BOOL, TAG_CHAR, TAG_INT, TAG_NULL,
                      TAG_OBJECT, TAG_REMOTE_REF, WireObject)

_ELEM_TAGS = (TAG_BOOL, TAG_INT, TAG_CHAR, TAG_ARRAY, TAG_OBJECT)
_MAX_DEPTH = 200


class MalformedEncoding(Exception):
    pass


class UnknownTag(MalformedEncoding):
    pass


def encode_value(v) -> bytes:
    w = Writer()
    _encode(w, v, {}, 0)
    return w.getvalue()


def _encode(w: Writer, v, seen: dict[int, int], depth: int) -> None:
    if depth > _MAX_DEPTH:
        raise MalformedEncoding("value nesting too deep")
    if v is None:
        w.u8(TAG_NULL)
    elif isinstance(v, bool):
        w.u8(TAG_BOOL)
        w.u8(1 if v else 0)
    elif isinstance(v, int):
        w.u8(TAG_INT)
        w.i64(v)
    elif isinstance(v, Char):
        w.u8(TAG_CHAR)
        w.u8(v.code)
    elif isinstance(v, CharArray):
        w.u8(TAG_ARRAY)
        w.u8(TAG_CHAR)
        w.u32(len(v.data))
        w.raw(v.data)
    elif isinstance(v, Array):
        w.u8(TAG_ARRAY)
        w.u8(v.elem_tag)
        w.u32(len(v.items))
        for item in v.items:
            _encode(w, item, seen, depth + 1)
    elif isinstance(v, WireObject):
        idx = seen.get(id(v))
        if idx is not None:
            w.u8(TAG_BACK_REF)
            w.u32(idx)
            return
        seen[id(v)] = len(seen)
        w.u8(TAG_OBJECT)
        w.wstr(v.cls.package)
        w.wstr(v.cls.name)
        w.u16(len(v.fields))
        for f in v.fields:
            _encode(w, f, seen, depth + 1)
    elif isinstance(v, ObjectRef):
        w.u8(TAG_REMOTE_REF)
        w.wstr(v.host)
        if v.partition is None:
            w.u8(0)
            w.u32(0)
        else:
            w.u8(1)
            w.u32(v.partition)
        w.u64(v.oid)
        w.wstr(v.cls.package)
        w.wstr(v.cls.name)
    else:
        raise MalformedEncoding(f"not an encodable value: {v!r}")


def decode_value(data: bytes):
    r = Reader(data)
    try:
        v = _decode(r, [], 0)
    except ShortRead as exc:
        raise MalformedEncoding(str(exc)) from exc
    except (UnicodeDecodeError, RecursionError) as exc:
        raise MalformedEncoding(str(exc)) from exc
    if not r.at_end():
        raise MalformedEncoding("trailing bytes after value")
    return v


def decode_value_prefix(r: Reader):
    """Decode one value from the reader's current position."""
    try:
        return _decode(r, [], 0)
    except ShortRead as exc:
        raise MalformedEncoding(str(exc)) from exc
    except (UnicodeDecodeError, RecursionError) as exc:
        raise MalformedEncoding(str(exc)) from exc


def _decode(r: Reader, nodes: list, depth: int):
    if depth > _MAX_DEPTH:
        raise MalformedEncoding("value nesting too deep")
    tag = r.u8()
    if tag == TAG_NULL:
        return None
    if tag == TAG_BOOL:
        return r.u8() != 0
    if tag == TAG_INT:
        return r.i64()
    if tag == TAG_CHAR:
        return Char(r.u8())
    if tag == TAG_ARRAY:
        elem = r.u8()
        if elem not in _ELEM_TAGS:
            raise MalformedEncoding(f"bad array element tag {elem}")
        count = r.u32()
        if elem == TAG_CHAR:
            return CharArray(r.raw(count))
        items = [_decode(r, nodes, depth + 1) for _ in range(count)]
        return Array(elem, items)
    if tag == TAG_OBJECT:
        cls = ClassKey(r.wstr(), r.wstr())
        n_fields = r.u16()
        node = WireObject(cls)
        nodes.append(node)  # registered before fields so cycles resolve
        node.fields = [_decode(r, nodes, depth + 1) for _ in range(n_fields)]
        return node
    if tag == TAG_REMOTE_REF:
        host = r.wstr()
        space = r.u8()
        pid = r.u32()
        oid = r.u64()
        cls = ClassKey(r.wstr(), r.wstr())
        if space not in (0, 1):
            raise MalformedEncoding(f"bad ref space {space}")
        return ObjectRef(host, None if space == 0 else pid, oid, cls)
    if tag == TAG_BACK_REF:
        idx = r.u32()
        if idx >= len(nodes):
            raise MalformedEncoding(f"back-ref {idx} out of range")
        return nodes[idx]
    raise UnknownTag(f"unknown value tag {tag}")

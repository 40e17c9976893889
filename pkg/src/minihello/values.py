"""Runtime value model shared by the interpreter, the marshaler, and the wire codec.

A runtime value is one of: None (null), bool, int (64-bit two's-complement,
wrapping), Char, CharArray (char[], the string representation), Array,
ObjectRef (a local or remote object reference), or WireObject (a node of a
marshaled object graph in transit between hosts).
"""

from __future__ import annotations

from dataclasses import dataclass

# Wire tags; also used as array element tags.
TAG_NULL = 0
TAG_BOOL = 1
TAG_INT = 2
TAG_CHAR = 3
TAG_ARRAY = 4
TAG_OBJECT = 5
TAG_REMOTE_REF = 6
TAG_BACK_REF = 7

_U64 = (1 << 64) - 1
_I64_SIGN = 1 << 63
INT_MIN = -(1 << 63)
INT_MAX = (1 << 63) - 1


def wrap_i64(n: int) -> int:
    """Reduce an arbitrary Python int to 64-bit two's-complement."""
    n &= _U64
    return n - (1 << 64) if n & _I64_SIGN else n


@dataclass(frozen=True, slots=True)
class ClassKey:
    """Package-qualified class name; stable across hosts and images."""
    package: str
    name: str

    def __str__(self) -> str:
        return f"{self.package}.{self.name}"


@dataclass(frozen=True, slots=True)
class Char:
    code: int  # 0..255


@dataclass(frozen=True, slots=True)
class ObjectRef:
    """Reference to an object. partition None means the owner engine's heap;
    a heap ref is only dereferenceable at its owning host."""
    host: str
    partition: int | None
    oid: int
    cls: ClassKey

    @property
    def in_heap(self) -> bool:
        return self.partition is None


class CharArray:
    """Mutable byte string; the runtime representation of char[]."""

    __slots__ = ("data",)
    elem_tag = TAG_CHAR

    def __init__(self, data: bytes | bytearray = b""):
        self.data = bytearray(data)

    @classmethod
    def from_str(cls, s: str) -> "CharArray":
        return cls(s.encode("utf-8"))

    def to_str(self) -> str:
        return self.data.decode("utf-8", errors="replace")

    def __len__(self) -> int:
        return len(self.data)

    def concat(self, other: "CharArray") -> "CharArray":
        return CharArray(self.data + other.data)

    def append(self, other: "CharArray") -> None:
        self.data += other.data

    def copy(self) -> "CharArray":
        return CharArray(self.data)

    def __repr__(self) -> str:
        return f"CharArray({bytes(self.data)!r})"


class Array:
    """Homogeneous array of non-char elements. elem_tag names the element kind
    (TAG_ARRAY for nested arrays, TAG_OBJECT for reference elements)."""

    __slots__ = ("elem_tag", "items")

    def __init__(self, elem_tag: int, items: list | None = None):
        self.elem_tag = elem_tag
        self.items = items if items is not None else []

    def __len__(self) -> int:
        return len(self.items)

    def __repr__(self) -> str:
        return f"Array(tag={self.elem_tag}, n={len(self.items)})"


class WireObject:
    """Identity-bearing node of a marshaled object graph.

    Produced by the marshaler on the sending side and by the wire decoder on
    the receiving side; never stored in a heap or partition.
    """

    __slots__ = ("cls", "fields")

    def __init__(self, cls: ClassKey, fields: list | None = None):
        self.cls = cls
        self.fields = fields if fields is not None else []

    def __repr__(self) -> str:
        return f"WireObject({self.cls}, {len(self.fields)} fields)"


def type_tag(v) -> int:
    """Runtime tag of a value, matching the wire tag table."""
    if v is None:
        return TAG_NULL
    if isinstance(v, bool):
        return TAG_BOOL
    if isinstance(v, int):
        return TAG_INT
    if isinstance(v, Char):
        return TAG_CHAR
    if isinstance(v, CharArray):
        return TAG_ARRAY
    if isinstance(v, Array):
        return TAG_ARRAY
    if isinstance(v, WireObject):
        return TAG_OBJECT
    if isinstance(v, ObjectRef):
        return TAG_REMOTE_REF
    raise TypeError(f"not a runtime value: {v!r}")


def values_equal(a, b) -> bool:
    """Shallow equality as defined by the language's == operator: primitives
    by value, references by identity triple, null only equal to null."""
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, ObjectRef) and isinstance(b, ObjectRef):
        return (a.host, a.partition, a.oid) == (b.host, b.partition, b.oid)
    if isinstance(a, Char) and isinstance(b, Char):
        return a.code == b.code
    if isinstance(a, bool) or isinstance(b, bool):
        return a is b
    if isinstance(a, int) and isinstance(b, int):
        return a == b
    return a is b

"""Heap and partition object storage."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..security import CredentialSet
from ..values import ClassKey


class ObjectRecord:
    """One live object: its class, field values, and an optional ACL."""

    __slots__ = ("cls", "fields", "acl", "partition", "oid")

    def __init__(self, cls: ClassKey, fields: list, partition: int | None, oid: int):
        self.cls = cls
        self.fields = fields
        self.acl: CredentialSet | None = None
        self.partition = partition
        self.oid = oid


@dataclass
class Partition:
    """Host-scoped shared object table; objects here are remotely reachable.
    Object ids are never reused (the engine allocates them monotonically)."""

    pid: int
    objects: dict[int, ObjectRecord] = field(default_factory=dict)
    acl: CredentialSet | None = None


@dataclass
class EventRecord:
    """A deferred method call. Fires exactly once, when the last argument
    slot fills; firing enqueues the call on the owner queue."""

    eid: int
    queue_id: int
    target: object  # ObjectRef
    method: str
    slots: list  # of [filled: bool, value]
    fired: bool = False

    @property
    def arity(self) -> int:
        return len(self.slots)

    def unfilled(self) -> int:
        return sum(1 for s in self.slots if not s[0])

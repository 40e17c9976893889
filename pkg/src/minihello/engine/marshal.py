"""Argument and return-value marshaling: deep copy, reference translation,
and conversion to/from wire graphs.

Rules, applied per parameter (and to return values under the return's copy
flag):

- primitives always travel by value;
- arrays travel by value across hosts; locally they pass by reference unless
  the parameter is copy-qualified (message posts additionally snapshot array
  arguments at enqueue time so callers may reuse buffers);
- under a copy-qualified parameter, the reachable local object graph is
  copied with aliasing and cycles preserved; objects living on other hosts
  stay references; builtin instances (hosts, queues, group nodes) always
  stay references;
- without the copy qualifier an object travels as a remote reference back to
  the original;
- a non-external user object that would have to cross hosts is refused with
  NonCopyableValue.
"""

from __future__ import annotations

from ..errors import E_NON_COPYABLE, EngineError
from ..frontend.types import STD_PACKAGE
from ..runpack import ir
from ..values import Array, CharArray, ObjectRef, WireObject


def _is_builtin(cls) -> bool:
    return cls.package == STD_PACKAGE


def local_copy(engine, v, memo: dict | None = None):
    """Structural deep copy inside one engine: fresh arrays, fresh heap
    objects, aliasing and cycles preserved. References to builtin instances
    and to remote objects are preserved as references."""
    if memo is None:
        memo = {}
    if isinstance(v, CharArray):
        return CharArray(v.data)
    if isinstance(v, Array):
        key = id(v)
        if key in memo:
            return memo[key]
        out = Array(v.elem_tag, [])
        memo[key] = out
        out.items = [local_copy(engine, item, memo) for item in v.items]
        return out
    if isinstance(v, ObjectRef):
        if v.host != engine.host_name or _is_builtin(v.cls):
            return v
        key = ("obj", v.partition, v.oid)
        if key in memo:
            return memo[key]
        record = engine.deref(v)
        new_ref = engine.alloc_object(record.cls, None, [None] * len(record.fields))
        memo[key] = new_ref
        new_record = engine.deref(new_ref)
        new_record.fields = [local_copy(engine, f, memo) for f in record.fields]
        return new_ref
    return v


def snapshot_arrays(engine, v):
    """Copy used at message-post enqueue: arrays are snapshotted, object
    references pass through untouched."""
    if isinstance(v, CharArray):
        return CharArray(v.data)
    if isinstance(v, Array):
        return Array(v.elem_tag, [snapshot_arrays(engine, item) for item in v.items])
    return v


def to_wire(engine, v, copy: bool, memo: dict | None = None):
    """Convert a runtime value into a self-contained wire value for a
    cross-host transfer."""
    if memo is None:
        memo = {}
    if isinstance(v, CharArray):
        return CharArray(v.data)
    if isinstance(v, Array):
        return Array(v.elem_tag, [to_wire(engine, item, copy, memo) for item in v.items])
    if isinstance(v, ObjectRef):
        if v.host != engine.host_name or _is_builtin(v.cls):
            return v
        rc = engine.runtime_class(v.cls)
        external = rc is not None and rc.has(ir.CQ_EXTERNAL)
        if not copy:
            if not external:
                raise EngineError(
                    E_NON_COPYABLE,
                    f"{v.cls} is not external; it can neither cross hosts by "
                    "value nor be referenced remotely")
            return v
        if not external:
            raise EngineError(
                E_NON_COPYABLE,
                f"object of non-external class {v.cls} inside a copied graph "
                "crossing hosts")
        key = ("obj", v.partition, v.oid)
        if key in memo:
            return memo[key]
        record = engine.deref(v)
        node = WireObject(v.cls)
        memo[key] = node
        node.fields = [to_wire(engine, f, copy, memo) for f in record.fields]
        return node
    if isinstance(v, WireObject):  # already marshaled (relay)
        return v
    return v


def from_wire(engine, v, fetch_from: str | None, ctx, memo: dict | None = None):
    """Materialize a wire value at this engine. WireObject graphs become
    fresh heap objects (identity preserved); classes missing locally are
    fetched on demand from `fetch_from`. Generator: may wait on a fetch."""
    if memo is None:
        memo = {}
    if isinstance(v, CharArray):
        return CharArray(v.data)
    if isinstance(v, Array):
        out = Array(v.elem_tag, [])
        for item in v.items:
            value = yield from from_wire(engine, item, fetch_from, ctx, memo)
            out.items.append(value)
        return out
    if isinstance(v, WireObject):
        key = id(v)
        if key in memo:
            return memo[key]
        yield from engine.ensure_class(v.cls, fetch_from, ctx)
        ref = engine.alloc_object(v.cls, None, [None] * len(v.fields))
        memo[key] = ref
        record = engine.deref(ref)
        fields = []
        for f in v.fields:
            value = yield from from_wire(engine, f, fetch_from, ctx, memo)
            fields.append(value)
        record.fields = fields
        return ref
    return v


def marshal_args(engine, params: list[ir.IrParam] | None, args: list, *,
                 crossing: bool, post: bool):
    """Marshal an argument list for an invocation.

    `params` may be None when the callee's signature is not known locally;
    arrays then travel by value and objects as references.
    """
    memo: dict = {}
    out = []
    for i, arg in enumerate(args):
        copy = params[i].copy if params is not None and i < len(params) else False
        if crossing:
            out.append(to_wire(engine, arg, copy, memo))
        elif copy:
            out.append(local_copy(engine, arg, memo))
        elif post:
            out.append(snapshot_arrays(engine, arg))
        else:
            out.append(arg)
    return out


def marshal_result(engine, v, ret_copy: bool, *, crossing: bool):
    if crossing:
        return to_wire(engine, v, ret_copy)
    if ret_copy:
        return local_copy(engine, v)
    return v


def wire_node_count(v, seen: set | None = None) -> int:
    """Number of distinct object nodes in a wire graph (diagnostics)."""
    if seen is None:
        seen = set()
    if isinstance(v, WireObject):
        if id(v) in seen:
            return 0
        seen.add(id(v))
        return 1 + sum(wire_node_count(f, seen) for f in v.fields)
    if isinstance(v, Array):
        return sum(wire_node_count(item, seen) for item in v.items)
    return 0

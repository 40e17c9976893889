"""The runtime engine: one per host.

Owns the heap, partitions, queues, events, pack store, and security map;
executes IR through the machine module; and speaks the INVOKE/REPLY wire
protocol through a router port. All potentially-blocking operations are
generators that yield Futures, driven by the active scheduler.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

from .. import groups
from ..bio import Reader, ShortRead, Writer
from ..errors import (E_ACCESS_DENIED, E_ACCESS_VIOLATION, E_HANDLE_CLOSED,
                      E_HASH_MISMATCH, E_HOST_UNREACHABLE, E_NO_MAIN,
                      E_NULL_REF, E_PACK_NOT_FOUND, E_QUEUE_CLOSED, E_TIMEOUT,
                      E_UNKNOWN_CLASS, E_UNKNOWN_METHOD, E_UNKNOWN_OBJECT,
                      EngineError, wrap_remote)
from ..frontend.types import QUEUE_KEY, STD_PACKAGE
from ..net import frames
from ..net.wirevalues import (MalformedEncoding, decode_value_prefix,
                              encode_value)
from ..runpack import ir
from ..runpack.image import (ORIGIN_NETWORK, ImageFormatError, PackStore,
                             RunpackImage, deserialize, serialize)
from ..runtime import Future, Queue, Request, Scheduler
from ..security import (ANONYMOUS_SID, ALL_PRIVS, CREATE, CredentialSet, EXEC,
                        READ, SID_LEN, WRITE, check_access)
from ..stdlib import (HOST_OBJECT_OID, HOSTS_NODE_OID, INTRINSICS,
                      NATIVE_METHODS, SERVICE_QUEUE_OID, host_ref,
                      hosts_node_ref)
from ..values import (Array, CharArray, ClassKey, ObjectRef, TAG_ARRAY,
                      TAG_OBJECT)
from . import machine
from .marshal import (from_wire, local_copy, marshal_args, marshal_result,
                      to_wire)
from .objects import EventRecord, ObjectRecord, Partition

HOST_KEY = ClassKey(STD_PACKAGE, "host")
HOST_GROUP_KEY = ClassKey(STD_PACKAGE, "host_group")

PACK_CHUNK = 64 * 1024

# INVOKE sub-operations.
OP_INVOKE = 0
OP_POST = 1
OP_CREATE = 2
OP_BARRIER = 3

# System methods: name -> (privilege, per-parameter copy flags).
SYS_METHODS = {
    "$echo": (EXEC, (True,)),
    "$traverse": (EXEC, (False, True, False, False)),
    "$getf": (READ, (False,)),
    "$setf": (WRITE, (False, False)),
}


@dataclass
class EngineConfig:
    host_name: str
    listen: str | None = None
    seeds: tuple = ()
    primary: bool = False
    call_timeout_ms: int = 30_000
    fetch_timeout_ms: int = 30_000
    ping_interval_ms: int = 2_000
    ping_miss_limit: int = 3
    gossip_interval_ms: int = 500
    grants: tuple = ()          # (sid, mask) pairs for the host map
    lockdown: bool = False      # True: no implicit anonymous grant
    stdout_path: str | None = None
    capture_stdout: bool = True


@dataclass
class TaskCtx:
    queue: Queue
    origin: str | None = None  # host to fetch missing packages from

    @property
    def queue_id(self) -> int:
        return self.queue.qid

    def sids(self) -> list[bytes]:
        return sorted(self.queue.creds.sids())


@dataclass(frozen=True)
class FrameMeta:
    src: str
    reverse_path: tuple = ()


class RuntimeClass:
    """A loaded class: IR code plus any native method bindings."""

    __slots__ = ("key", "code", "consts", "natives")

    def __init__(self, key: ClassKey, code: ir.ClassCode, consts: list[bytes],
                 natives: dict | None = None):
        self.key = key
        self.code = code
        self.consts = consts
        self.natives = natives or {}

    def has(self, bit: int) -> bool:
        return self.code.has(bit)

    def method(self, name: str) -> ir.MethodCode | None:
        return self.code.method(name)

    def native(self, name: str):
        return self.natives.get(name)

    def field_index(self, name: str) -> int | None:
        for i, (fname, _) in enumerate(self.code.fields):
            if fname == name:
                return i
        return None


def _builtin_runtime_classes() -> dict[ClassKey, RuntimeClass]:
    host_code = ir.ClassCode("host", ir.CQ_EXTERNAL | ir.CQ_PUBLIC, [], [
        ir.MethodCode("name", ir.MQ_PUBLIC | ir.MQ_EXTERNAL, [],
                      ir.TypeDesc("char", 1), False, 0, ir.IrBlock([])),
        ir.MethodCode("print", ir.MQ_PUBLIC | ir.MQ_EXTERNAL,
                      [ir.IrParam("str", ir.TypeDesc("char", 1), True)],
                      ir.TD_VOID, False, 1, ir.IrBlock([])),
    ])
    group_code = ir.ClassCode(
        "host_group", ir.CQ_EXTERNAL | ir.CQ_GROUP | ir.CQ_PUBLIC,
        [("current_host", ir.TypeDesc("class", 0, HOST_KEY))], [
            ir.MethodCode("children", ir.MQ_PUBLIC | ir.MQ_EXTERNAL, [],
                          ir.TypeDesc("class", 1, HOST_GROUP_KEY), True, 0,
                          ir.IrBlock([])),
            ir.MethodCode("print",
                          ir.MQ_PUBLIC | ir.MQ_EXTERNAL | ir.MQ_ITERATOR,
                          [ir.IrParam("str", ir.TypeDesc("char", 1), True)],
                          ir.TD_VOID, False, 1, ir.IrBlock([])),
        ])
    queue_code = ir.ClassCode("queue", ir.CQ_EXTERNAL | ir.CQ_PUBLIC,
                              [("qid", ir.TD_INT)], [])
    out = {}
    for key, code in ((HOST_KEY, host_code), (HOST_GROUP_KEY, group_code),
                      (QUEUE_KEY, queue_code)):
        natives = {name: fn for (ckey, name), fn in NATIVE_METHODS.items()
                   if ckey == key}
        out[key] = RuntimeClass(key, code, [], natives)
    return out


@dataclass
class _PendingCall:
    future: Future
    timer: object
    target: str
    next_hop: str
    direct: bool


class Engine:
    def __init__(self, config: EngineConfig, scheduler: Scheduler, rng,
                 port=None, incarnation: int = 1):
        self.config = config
        self.host_name = config.host_name
        self.scheduler = scheduler
        self.rng = rng
        self.port = port
        self.incarnation = incarnation

        self.packstore = PackStore()
        self.classes: dict[ClassKey, RuntimeClass] = _builtin_runtime_classes()

        self.heap: dict[int, ObjectRecord] = {}
        self.partitions: dict[int, Partition] = {0: Partition(0)}
        self._oid = itertools.count(10)
        self._pid = itertools.count(1)

        self.queues: dict[int, Queue] = {}
        self._qid = itertools.count(0)

        self.host_map = CredentialSet()
        if not config.lockdown:
            self.host_map.grant(ANONYMOUS_SID, ALL_PRIVS)
        for sid, mask in config.grants:
            self.host_map.grant(sid, mask)
        self.default_creds = CredentialSet.permissive()
        self.audit_count = 0

        self.events: dict[int, EventRecord] = {}
        self._eid = itertools.count(1)

        self._corr = itertools.count(1)
        self.pending: dict[int, _PendingCall] = {}
        self._fetch_inflight: dict[str, Future] = {}
        self._pack_buffers: dict[int, tuple[str, list[bytes]]] = {}
        self.fetch_frames_sent = 0

        self._exec_handles: dict[int, tuple[object, int]] = {}
        self._exec_id = itertools.count(1)

        self._traversals_seen: set[str] = set()
        self._traversal_order: deque[str] = deque()
        self._traversal_counter = itertools.count(1)

        self.stdout_sink = None
        self.capture_stdout = config.capture_stdout
        self.stdout_bytes = bytearray()
        import threading
        self._out_lock = threading.Lock()

        self.error_log: list[tuple[str, str]] = []
        self.on_host_event = None  # callable(kind, detail) set by the node
        self.group_edges: set[tuple[str, str]] = set()
        self.main_running = False

        self.service_queue = self.new_queue(label="service")
        self._bootstrap_objects()

    # ------------------------------------------------------------------ setup

    def _bootstrap_objects(self) -> None:
        p0 = self.partitions[0]
        p0.objects[HOST_OBJECT_OID] = ObjectRecord(HOST_KEY, [], 0, HOST_OBJECT_OID)
        p0.objects[HOSTS_NODE_OID] = ObjectRecord(
            HOST_GROUP_KEY, [host_ref(self.host_name)], 0, HOSTS_NODE_OID)
        p0.objects[SERVICE_QUEUE_OID] = ObjectRecord(
            QUEUE_KEY, [self.service_queue.qid], 0, SERVICE_QUEUE_OID)

    # ---------------------------------------------------------------- storage

    def new_queue(self, creds: CredentialSet | None = None, label: str = "") -> Queue:
        qid = next(self._qid)
        q = Queue(qid, self.host_name, creds.copy() if creds else self.default_creds.copy())
        self.queues[qid] = q
        return q

    def queue_object_ref(self, queue: Queue) -> ObjectRef:
        ref = self.alloc_object(QUEUE_KEY, 0, [queue.qid])
        return ref

    def create_partition(self) -> int:
        pid = next(self._pid)
        self.partitions[pid] = Partition(pid)
        return pid

    def alloc_object(self, cls: ClassKey, partition: int | None,
                     fields: list) -> ObjectRef:
        oid = next(self._oid)
        record = ObjectRecord(cls, fields, partition, oid)
        if partition is None:
            self.heap[oid] = record
        else:
            part = self.partitions.get(partition)
            if part is None:
                raise EngineError(E_UNKNOWN_OBJECT, f"no partition {partition}")
            part.objects[oid] = record
        return ObjectRef(self.host_name, partition, oid, cls)

    def deref(self, ref: ObjectRef) -> ObjectRecord:
        if ref.host != self.host_name:
            raise EngineError(E_UNKNOWN_OBJECT,
                              f"ref to {ref.host} dereferenced at {self.host_name}")
        if ref.partition is None:
            record = self.heap.get(ref.oid)
        else:
            part = self.partitions.get(ref.partition)
            record = part.objects.get(ref.oid) if part else None
        if record is None:
            raise EngineError(E_UNKNOWN_OBJECT, f"no object {ref.oid}")
        return record

    def try_deref(self, ref: ObjectRef) -> ObjectRecord | None:
        try:
            return self.deref(ref)
        except EngineError:
            return None

    def set_object_acl(self, ref: ObjectRef, acl: CredentialSet | None) -> None:
        self.deref(ref).acl = acl

    # ----------------------------------------------------------------- classes

    def runtime_class(self, key: ClassKey) -> RuntimeClass | None:
        return self.classes.get(key)

    def install_image(self, image: RunpackImage, origin: str = "local-disk") -> None:
        self.packstore.install(image, origin)
        for code in image.classes:
            self.classes[ClassKey(image.package, code.name)] = RuntimeClass(
                ClassKey(image.package, code.name), code, image.constants)

    def ensure_class(self, key: ClassKey, fetch_from: str | None, ctx):
        rc = self.classes.get(key)
        if rc is not None:
            return rc
        if self.packstore.resolve(key.package) is not None or fetch_from is None \
                or fetch_from == self.host_name:
            raise EngineError(E_UNKNOWN_CLASS, f"unknown class {key}")
        fut = self.fetch_pack(fetch_from, key.package)
        yield fut
        rc = self.classes.get(key)
        if rc is None:
            raise EngineError(E_UNKNOWN_CLASS, f"{key} missing after fetch")
        return rc

    def field_index(self, cls: ClassKey, name: str, hint: int) -> int:
        rc = self.classes.get(cls)
        if rc is not None:
            idx = rc.field_index(name)
            if idx is not None:
                return idx
        return hint

    def param_sigs(self, cls: ClassKey, method: str):
        if method in SYS_METHODS:
            flags = SYS_METHODS[method][1]
            return [ir.IrParam(f"a{i}", ir.TypeDesc("class", 0, None), f)
                    for i, f in enumerate(flags)]
        rc = self.classes.get(cls)
        if rc is None:
            return None
        mc = rc.method(method)
        return list(mc.params) if mc is not None else None

    # ---------------------------------------------------------------- security

    def check_remote_request(self, priv: int, sids: list[bytes],
                             acl: CredentialSet | None) -> None:
        self.audit_count += 1
        queue_creds = CredentialSet({sid: 0 for sid in sids})
        decision = check_access(queue_creds, acl, self.host_map, priv)
        if not decision:
            raise EngineError(E_ACCESS_DENIED,
                              f"denied at {decision.denied_layer} layer")

    def check_local_object(self, ref: ObjectRef, record: ObjectRecord, *,
                           write: bool, ctx) -> None:
        if record.acl is None:
            return
        self.audit_count += 1
        priv = WRITE if write else READ
        if not record.acl.allows(ctx.sids(), priv):
            raise EngineError(E_ACCESS_DENIED, "denied at object layer")

    def _check_local_invoke(self, record: ObjectRecord, ctx) -> None:
        if record.acl is None:
            return
        self.audit_count += 1
        if not record.acl.allows(ctx.sids(), EXEC):
            raise EngineError(E_ACCESS_DENIED, "denied at object layer")

    # ------------------------------------------------------------- invocation

    def invoke(self, ref, method: str, args: list, ctx):
        """Call a method through a reference, local or remote. Generator."""
        if ref is None:
            raise wrap_remote(EngineError(E_NULL_REF, f"call of '{method}' on null"))
        if not isinstance(ref, ObjectRef):
            raise wrap_remote(EngineError(E_NULL_REF, f"'{method}' target is not an object"))
        if ref.host == self.host_name:
            return (yield from self.invoke_local(ref, method, args, ctx))
        params = self.param_sigs(ref.cls, method)
        wire_args = marshal_args(self, params, args, crossing=True, post=False)
        payload = self._payload_invoke(OP_INVOKE, ctx, [
            ("value", ref), ("str", method), ("values", wire_args)])
        fut = self.send_request(ref.host, frames.INVOKE, payload)
        raw = yield fut
        return (yield from from_wire(self, raw, ref.host, ctx))

    def invoke_local(self, ref: ObjectRef, method: str, args: list, ctx, *,
                     from_remote: bool = False, args_materialized: bool = False):
        record = self.deref(ref)
        rc = self.classes.get(record.cls)
        if rc is None:
            raise EngineError(E_UNKNOWN_CLASS, f"unloaded class {record.cls}")
        native = rc.native(method)
        mc = rc.method(method)
        if native is None and mc is None:
            raise wrap_remote(EngineError(
                E_UNKNOWN_METHOD, f"{record.cls} has no method '{method}'"))
        if from_remote and mc is not None and not mc.has(ir.MQ_EXTERNAL):
            raise EngineError(E_ACCESS_VIOLATION,
                              f"method '{method}' is not external")
        if not from_remote:
            self._check_local_invoke(record, ctx)
        if args_materialized:
            call_args = list(args)
        else:
            call_args = marshal_args(self, list(mc.params) if mc else None,
                                     args, crossing=False, post=False)
        try:
            if native is not None:
                result = native(self, ctx, ref, call_args)
                if hasattr(result, "send"):
                    result = yield from result
            else:
                result = yield from self._run_body(rc, mc, ref, call_args, ctx)
        except EngineError as err:
            raise wrap_remote(err) from None
        if from_remote:
            return result  # the reply path applies the crossing marshal
        ret_copy = mc.ret_copy if mc is not None else False
        return marshal_result(self, result, ret_copy, crossing=False)

    def invoke_static(self, cls: ClassKey, method: str, args: list, ctx):
        rc = self.classes.get(cls)
        if rc is None:
            raise EngineError(E_UNKNOWN_CLASS, f"unknown class {cls}")
        mc = rc.method(method)
        if mc is None or not mc.has(ir.MQ_STATIC):
            raise EngineError(E_UNKNOWN_METHOD, f"{cls} has no static '{method}'")
        call_args = marshal_args(self, list(mc.params), args, crossing=False,
                                 post=False)
        # faults in a static body propagate bare: there is no caller-callee
        # hop to wrap them for
        result = yield from self._run_body(rc, mc, None, call_args, ctx)
        return marshal_result(self, result, mc.ret_copy, crossing=False)

    def _run_body(self, rc: RuntimeClass, mc: ir.MethodCode, this_ref,
                  args: list, ctx):
        locals_ = list(args) + [None] * (mc.n_slots - len(args))
        frame = machine.Frame(this_ref, locals_, rc.consts, ctx)
        return (yield from machine.exec_method_body(self, frame, mc.body))

    # --------------------------------------------------------------- creation

    def create_object(self, cls: ClassKey, placement: tuple, args: list, ctx):
        """placement: ('heap',) | ('partition', pid) | ('remote', host, pid|None)."""
        if placement[0] == "remote":
            return (yield from self._create_remote(cls, placement[1],
                                                   placement[2], args, ctx))
        rc = yield from self.ensure_class(cls, ctx.origin, ctx)
        pid = None if placement[0] == "heap" else placement[1]
        if cls == QUEUE_KEY:
            q = self.new_queue()
            return self.alloc_object(QUEUE_KEY, 0 if pid is None else pid, [q.qid])
        n_fields = len(rc.code.fields)
        defaults = [machine.default_value(ty) for _, ty in rc.code.fields]
        ref = self.alloc_object(cls, pid, defaults[:n_fields])
        ctor = rc.method(cls.name)
        if ctor is not None and ctor.has(ir.MQ_CTOR):
            call_args = marshal_args(self, list(ctor.params), args,
                                     crossing=False, post=False)
            try:
                yield from self._run_body(rc, ctor, ref, call_args, ctx)
            except EngineError as err:
                raise wrap_remote(err) from None
        return ref

    def _create_remote(self, cls: ClassKey, host: str, pid, args: list, ctx):
        rc = self.classes.get(cls)
        if rc is not None and not rc.has(ir.CQ_EXTERNAL) and cls != QUEUE_KEY:
            raise EngineError(E_ACCESS_VIOLATION,
                              f"class {cls} is not external")
        params = list(rc.method(cls.name).params) if rc and rc.method(cls.name) else None
        wire_args = marshal_args(self, params, args, crossing=True, post=False)
        w = Writer()
        w.wstr(cls.package)
        w.wstr(cls.name)
        if pid is None:
            w.u8(0)
            w.u32(0)
        else:
            w.u8(1)
            w.u32(pid)
        payload = self._payload_invoke(OP_CREATE, ctx, [
            ("raw", w.getvalue()), ("values", wire_args)])
        fut = self.send_request(host, frames.INVOKE, payload)
        raw = yield fut
        ref = yield from from_wire(self, raw, host, ctx)
        return ref

    # ------------------------------------------------------- queues and posts

    def resolve_queue(self, qref: ObjectRef) -> Queue:
        if qref is None:
            raise EngineError(E_NULL_REF, "null queue reference")
        record = self.deref(qref)
        if record.cls != QUEUE_KEY or not record.fields:
            raise EngineError(E_UNKNOWN_OBJECT, "not a queue object")
        q = self.queues.get(record.fields[0])
        if q is None:
            raise EngineError(E_UNKNOWN_OBJECT, "queue is gone")
        return q

    def submit(self, queue: Queue, request: Request) -> None:
        if queue.state != "running":
            raise EngineError(E_QUEUE_CLOSED, f"queue {queue.qid} not accepting work")
        self.scheduler.submit(queue, request)

    def post_message(self, qref: ObjectRef, target, method: str, args: list,
                     ctx) -> None:
        """The #> operator: fire-and-forget enqueue; copy-qualified and array
        arguments are snapshotted now, so the caller may reuse its buffers."""
        if qref is None:
            raise EngineError(E_NULL_REF, "post to null queue")
        if qref.host != self.host_name:
            params = self.param_sigs(target.cls, method) if isinstance(target, ObjectRef) else None
            wire_args = marshal_args(self, params, args, crossing=True, post=True)
            wire_target = to_wire(self, target, False)
            payload = self._payload_invoke(OP_POST, ctx, [
                ("value", qref), ("value", wire_target), ("str", method),
                ("values", wire_args)])
            self.send_oneway(qref.host, frames.INVOKE, payload)
            return
        queue = self.resolve_queue(qref)
        params = self.param_sigs(target.cls, method) if isinstance(target, ObjectRef) else None
        if params is not None and isinstance(target, ObjectRef):
            rc = self.classes.get(target.cls)
            mc = rc.method(method) if rc else None
            if mc is not None and not mc.has(ir.MQ_MESSAGE):
                raise EngineError(E_ACCESS_VIOLATION,
                                  f"'{method}' is not a message method")
        snap_args = marshal_args(self, params, args, crossing=False, post=True)
        ctx2 = TaskCtx(queue, ctx.origin)

        def factory():
            return self._task_exec_invoke(target, method, snap_args, ctx2)

        self.submit(queue, Request(factory, None, label=f"post:{method}"))

    def _task_exec_invoke(self, target, method, args, ctx):
        try:
            yield from self.invoke(target, method, args, ctx,)
        except EngineError as err:
            self.log_error(err.code, f"queued {method}: {err.message}")

    def queued_eval_ir(self, qref: ObjectRef, caller_frame, body_node):
        """The <=> operator. The expression evaluates when it reaches the
        queue head; for a local queue it runs in the caller's frame on the
        queue's lane, for a remote queue a barrier marker drains the queue
        first and the expression evaluates locally on return."""
        ctx = caller_frame.ctx
        if qref is None:
            raise EngineError(E_NULL_REF, "<=> on null queue")
        if qref.host != self.host_name:
            payload = self._payload_invoke(OP_BARRIER, ctx, [("value", qref)])
            fut = self.send_request(qref.host, frames.INVOKE, payload)
            yield fut
            return (yield from machine.eval_expr(self, caller_frame, body_node))
        queue = self.resolve_queue(qref)
        fut = Future()
        self._arm_deadline(fut, self.config.call_timeout_ms)

        def factory():
            return machine.eval_expr(self, caller_frame, body_node)

        self.submit(queue, Request(factory, fut, label="queued-eval"))
        return (yield fut)

    def queued_eval(self, qref: ObjectRef, thunk, ctx):
        """Engine-level <=>: enqueue a python thunk (callable or generator
        factory) and wait for its value."""
        if qref is not None and isinstance(qref, ObjectRef) and qref.host != self.host_name:
            payload = self._payload_invoke(OP_BARRIER, ctx, [("value", qref)])
            fut = self.send_request(qref.host, frames.INVOKE, payload)
            yield fut
            value = thunk()
            if hasattr(value, "send"):
                value = yield from value
            return value
        queue = self.resolve_queue(qref)
        fut = Future()
        self._arm_deadline(fut, self.config.call_timeout_ms)
        self.submit(queue, Request(thunk, fut, label="queued-eval"))
        return (yield fut)

    # ------------------------------------------------------------------ events

    def create_event(self, qref: ObjectRef, target, method: str, arity: int, ctx):
        if qref is None:
            raise EngineError(E_NULL_REF, "event on null queue")
        if qref.host != self.host_name:
            w = Writer()
            w.u8(0)
            self._write_creds(w, ctx)
            w.raw(encode_value(qref))
            w.raw(encode_value(to_wire(self, target, False)))
            w.wstr(method)
            w.u16(arity)
            fut = self.send_request(qref.host, frames.EVENT_POST, w.getvalue())
            eid = yield fut
            return (qref.host, eid)
        queue = self.resolve_queue(qref)
        eid = next(self._eid)
        ev = EventRecord(eid, queue.qid, target, method,
                         [[False, None] for _ in range(arity)])
        self.events[eid] = ev
        if arity == 0:
            self._fire_event(ev, ctx.origin)
        return (self.host_name, eid)

    def fill_event(self, event_id: tuple, slot: int, value, ctx):
        host, eid = event_id
        if host != self.host_name:
            w = Writer()
            w.u8(1)
            self._write_creds(w, ctx)
            w.u64(eid)
            w.u16(slot)
            w.raw(encode_value(to_wire(self, value, False)))
            fut = self.send_request(host, frames.EVENT_POST, w.getvalue())
            status = yield fut
            return "fired" if status == 1 else "pending"
        return self._fill_local(eid, slot, value, ctx.origin)

    def _fill_local(self, eid: int, slot: int, value, origin) -> str:
        ev = self.events.get(eid)
        if ev is None:
            raise EngineError("UnknownEvent", f"no event {eid}")
        if not 0 <= slot < ev.arity:
            raise EngineError("SlotOutOfRange", f"slot {slot} of {ev.arity}")
        if ev.slots[slot][0]:
            raise EngineError("SlotAlreadyFilled", f"slot {slot}")
        ev.slots[slot][0] = True
        ev.slots[slot][1] = value
        if ev.unfilled() == 0 and not ev.fired:
            ev.fired = True
            self._fire_event(ev, origin)
            return "fired"
        return "pending"

    def _fire_event(self, ev: EventRecord, origin) -> None:
        ev.fired = True
        queue = self.queues.get(ev.queue_id)
        if queue is None:
            self.log_error(E_QUEUE_CLOSED, f"event {ev.eid} owner queue gone")
            return
        ctx = TaskCtx(queue, origin)

        def factory():
            return self._task_event_fire(ev, ctx)

        self.submit(queue, Request(factory, None, label=f"event:{ev.method}"))

    def _task_event_fire(self, ev: EventRecord, ctx):
        args = []
        for filled, value in ev.slots:
            args.append((yield from from_wire(self, value, ctx.origin, ctx)))
        self.events.pop(ev.eid, None)
        try:
            yield from self.invoke(ev.target, ev.method, args, ctx)
        except EngineError as err:
            self.log_error(err.code, f"event {ev.method}: {err.message}")

    # ------------------------------------------------------------------ groups

    def iterate(self, gref, method: str, args: list, ctx):
        return (yield from groups.iterate(self, ctx, gref, method, args))

    def next_traversal_id(self) -> int:
        return next(self._traversal_counter)

    def mark_traversal(self, tid: str) -> bool:
        if tid in self._traversals_seen:
            return False
        self._traversals_seen.add(tid)
        self._traversal_order.append(tid)
        if len(self._traversal_order) > 4096:
            self._traversals_seen.discard(self._traversal_order.popleft())
        return True

    def _traverse_args(self, method: str, args: list, tid: str,
                       visited: list[str]) -> list:
        return [CharArray.from_str(method),
                Array(TAG_OBJECT, list(args)),
                CharArray.from_str(tid),
                Array(TAG_ARRAY, [CharArray.from_str(v) for v in visited])]

    def start_traverse(self, node_ref: ObjectRef, method: str, args: list,
                       tid: str, visited: list[str], ctx) -> Future:
        """Begin a child traversal; returns the completion future."""
        if node_ref.host == self.host_name:
            fut = Future()
            queue = self.new_queue(label="traverse")
            ctx2 = TaskCtx(queue, ctx.origin)

            def factory():
                return groups.run_node(self, ctx2, node_ref, method,
                                       list(args), tid, list(visited))

            self.submit(queue, Request(factory, fut, label="traverse"))
            return fut
        params = self.param_sigs(node_ref.cls, "$traverse")
        wire_args = marshal_args(self, params,
                                 self._traverse_args(method, args, tid, visited),
                                 crossing=True, post=False)
        payload = self._payload_invoke(OP_INVOKE, ctx, [
            ("value", node_ref), ("str", "$traverse"), ("values", wire_args)])
        return self.send_request(node_ref.host, frames.INVOKE, payload)

    def send_traverse(self, node_ref: ObjectRef, method: str, args: list,
                      tid: str, visited: list[str], ctx):
        fut = self.start_traverse(node_ref, method, args, tid, visited, ctx)
        raw = yield fut
        return (yield from from_wire(self, raw, node_ref.host, ctx))

    def materialize(self, value, from_host: str | None, ctx):
        return (yield from from_wire(self, value, from_host, ctx))

    # --------------------------------------------------------------- deep copy

    def deep_copy(self, value, dest_host: str, ctx):
        """Copy a value graph to another host (or locally): primitives by
        value, object graphs with aliasing and cycles preserved."""
        if dest_host == self.host_name:
            return local_copy(self, value)
        return (yield from self.invoke(host_ref(dest_host), "$echo", [value], ctx))

    # --------------------------------------------------------------- main entry

    def run_main(self, image: RunpackImage, argv: list[str]) -> Future:
        self.install_image(image)
        found = image.find_main()
        fut = Future()
        if found is None:
            fut.fail(EngineError(E_NO_MAIN, f"package {image.package} has no main"))
            return fut
        cls_code, mc = found
        cls_key = ClassKey(image.package, cls_code.name)
        queue = self.new_queue(label="main")
        ctx = TaskCtx(queue)
        args = []
        if mc.params:
            args = [Array(TAG_ARRAY, [CharArray(a.encode("utf-8")) for a in argv])]
        self.main_running = True

        def factory():
            return self._task_main(cls_key, mc.name, args, ctx)

        self.submit(queue, Request(factory, fut, label="main"))
        return fut

    def _task_main(self, cls_key, method, args, ctx):
        try:
            result = yield from self.invoke_static(cls_key, method, args, ctx)
        finally:
            self.main_running = False
        return result if isinstance(result, int) else 0

    # ----------------------------------------------------------------- network

    def next_corr(self) -> int:
        return next(self._corr)

    def _arm_deadline(self, fut: Future, ms: int, code: str = E_TIMEOUT) -> None:
        timer = self.scheduler.call_later(
            ms, lambda: fut.fail(EngineError(code, f"no reply within {ms} ms")))
        fut.add_callback(lambda _f: self.scheduler.cancel(timer))

    def send_request(self, dst: str, kind: int, payload: bytes,
                     timeout_ms: int | None = None) -> Future:
        if self.port is None:
            raise EngineError(E_HOST_UNREACHABLE, "engine has no network")
        corr = self.next_corr()
        frame = frames.Frame(kind, corr, payload)
        fut = Future()
        next_hop = self.port.send(dst, frame)  # raises HostUnreachable
        timeout = timeout_ms if timeout_ms is not None else self.config.call_timeout_ms
        timer = self.scheduler.call_later(
            timeout, lambda: self._timeout_pending(corr))
        self.pending[corr] = _PendingCall(fut, timer, dst, next_hop,
                                          next_hop == dst)
        return fut

    def send_oneway(self, dst: str, kind: int, payload: bytes) -> None:
        if self.port is None:
            raise EngineError(E_HOST_UNREACHABLE, "engine has no network")
        self.port.send(dst, frames.Frame(kind, self.next_corr(), payload))

    def _timeout_pending(self, corr: int) -> None:
        entry = self.pending.pop(corr, None)
        if entry is not None:
            entry.future.fail(EngineError(E_TIMEOUT, f"call {corr} timed out"))

    def fail_pending_next_hop(self, neighbor: str) -> None:
        """Router hook: a neighbor was evicted. Routed calls through it fail
        fast as HostUnreachable; direct calls are left to their timeout."""
        for corr, entry in list(self.pending.items()):
            if entry.next_hop == neighbor and not entry.direct:
                self.pending.pop(corr, None)
                self.scheduler.cancel(entry.timer)
                entry.future.fail(EngineError(
                    E_HOST_UNREACHABLE, f"route via {neighbor} lost"))

    def on_neighbor_added(self, name: str) -> None:
        self.group_edges.add((self.host_name, name))
        if self.on_host_event:
            self.on_host_event("neighbor-added", name)

    def on_neighbor_removed(self, name: str) -> None:
        self.group_edges.discard((self.host_name, name))
        self.fail_pending_next_hop(name)
        if self.on_host_event:
            self.on_host_event("neighbor-removed", name)

    # ------------------------------------------------------- payload plumbing

    def _write_creds(self, w: Writer, ctx) -> None:
        w.wstr(self.host_name)
        sids = ctx.sids() if ctx is not None else [ANONYMOUS_SID]
        w.u16(len(sids))
        for sid in sids:
            w.raw(sid)

    def _payload_invoke(self, op: int, ctx, parts: list) -> bytes:
        w = Writer()
        w.u8(op)
        self._write_creds(w, ctx)
        for kind, value in parts:
            if kind == "value":
                w.raw(encode_value(value))
            elif kind == "values":
                w.u16(len(value))
                for v in value:
                    w.raw(encode_value(v))
            elif kind == "str":
                w.wstr(value)
            elif kind == "raw":
                w.raw(value)
        return w.getvalue()

    @staticmethod
    def _read_creds(r: Reader) -> tuple[str, list[bytes]]:
        sender = r.wstr()
        n = r.u16()
        return sender, [r.raw(SID_LEN) for _ in range(n)]

    @staticmethod
    def _read_values(r: Reader) -> list:
        n = r.u16()
        return [decode_value_prefix(r) for _ in range(n)]

    # ------------------------------------------------------------ frame intake

    def handle_wire_frame(self, frame: frames.Frame, meta: FrameMeta) -> None:
        try:
            if frame.kind == frames.INVOKE:
                self._on_invoke(frame, meta)
            elif frame.kind == frames.REPLY:
                self._on_reply(frame)
            elif frame.kind == frames.ERROR:
                self._on_error(frame)
            elif frame.kind == frames.FETCH_PACK:
                self._on_fetch_pack(frame, meta)
            elif frame.kind == frames.PACK_DATA:
                self._on_pack_data(frame)
            elif frame.kind == frames.EVENT_POST:
                self._on_event_post(frame, meta)
            else:
                self.log_error("BadFrame", f"unexpected {frame.kind_name}")
        except (MalformedEncoding, ShortRead, EngineError) as exc:
            self.log_error("BadFrame", f"{frame.kind_name}: {exc}")

    def _reply_value(self, meta: FrameMeta, corr: int, value) -> None:
        self._send_back(meta, frames.Frame(frames.REPLY, corr, encode_value(value)))

    def _reply_error(self, meta: FrameMeta, corr: int, err: EngineError) -> None:
        w = Writer()
        w.wstr(err.code)
        w.wstr(err.remote_code or "")
        w.wstr(err.message or "")
        self._send_back(meta, frames.Frame(frames.ERROR, corr, w.getvalue()))

    def _send_back(self, meta: FrameMeta, frame: frames.Frame) -> None:
        if self.port is None:
            return
        try:
            self.port.send_via(list(meta.reverse_path), meta.src, frame)
        except EngineError as err:
            self.log_error(err.code, f"reply to {meta.src} lost")

    def _completion_replier(self, meta: FrameMeta, corr: int):
        def on_done(fut: Future) -> None:
            try:
                value = fut.result()
            except EngineError as err:
                self._reply_error(meta, corr, err)
                return
            self._reply_value(meta, corr, value)
        return on_done

    def _on_invoke(self, frame: frames.Frame, meta: FrameMeta) -> None:
        r = Reader(frame.payload)
        op = r.u8()
        sender, sids = self._read_creds(r)
        if op == OP_INVOKE:
            target = decode_value_prefix(r)
            method = r.wstr()
            wire_args = self._read_values(r)
            priv = SYS_METHODS[method][0] if method in SYS_METHODS else EXEC
            record = self.try_deref(target) if isinstance(target, ObjectRef) else None
            acl = record.acl if record is not None else None
            try:
                self.check_remote_request(priv, sids, acl)
            except EngineError as err:
                self._reply_error(meta, frame.corr, err)
                return
            queue = (self.new_queue(label="traverse")
                     if method == "$traverse" else self.service_queue)
            ctx = TaskCtx(queue, origin=sender)
            fut = Future()
            fut.add_callback(self._completion_replier(meta, frame.corr))

            def factory():
                return self._task_remote_invoke(target, method, wire_args, ctx)

            self.submit(queue, Request(factory, fut, label=f"rx:{method}"))
        elif op == OP_POST:
            qref = decode_value_prefix(r)
            target = decode_value_prefix(r)
            method = r.wstr()
            wire_args = self._read_values(r)
            record = self.try_deref(target) if isinstance(target, ObjectRef) else None
            acl = record.acl if record is not None else None
            try:
                self.check_remote_request(EXEC, sids, acl)
                queue = self.resolve_queue(qref)
            except EngineError as err:
                self.log_error(err.code, f"remote post {method} dropped")
                return
            ctx = TaskCtx(queue, origin=sender)

            def factory():
                return self._task_remote_post(target, method, wire_args, ctx)

            try:
                self.submit(queue, Request(factory, None, label=f"post:{method}"))
            except EngineError as err:
                self.log_error(err.code, f"remote post {method} dropped")
        elif op == OP_CREATE:
            package = r.wstr()
            cls_name = r.wstr()
            has_pid = r.u8()
            pid = r.u32()
            wire_args = self._read_values(r)
            try:
                self.check_remote_request(CREATE, sids, None)
            except EngineError as err:
                self._reply_error(meta, frame.corr, err)
                return
            ctx = TaskCtx(self.service_queue, origin=sender)
            fut = Future()
            fut.add_callback(self._completion_replier(meta, frame.corr))
            key = ClassKey(package, cls_name)
            placement_pid = pid if has_pid else 0

            def factory():
                return self._task_remote_create(key, placement_pid, wire_args, ctx)

            self.submit(self.service_queue, Request(factory, fut, label="rx:create"))
        elif op == OP_BARRIER:
            qref = decode_value_prefix(r)
            try:
                self.check_remote_request(EXEC, sids, None)
                queue = self.resolve_queue(qref)
            except EngineError as err:
                self._reply_error(meta, frame.corr, err)
                return
            fut = Future()
            fut.add_callback(self._completion_replier(meta, frame.corr))

            def factory():
                return 1
            try:
                self.submit(queue, Request(factory, fut, label="barrier"))
            except EngineError as err:
                self._reply_error(meta, frame.corr, err)
        else:
            self.log_error("BadFrame", f"unknown INVOKE op {op}")

    def _task_remote_invoke(self, target, method: str, wire_args: list, ctx):
        args = []
        for wa in wire_args:
            args.append((yield from from_wire(self, wa, ctx.origin, ctx)))
        if method in SYS_METHODS:
            result = yield from self._run_sys_method(target, method, args, ctx)
        else:
            if not isinstance(target, ObjectRef):
                raise wrap_remote(EngineError(E_NULL_REF, "invoke on null target"))
            result = yield from self.invoke_local(target, method, args, ctx,
                                                  from_remote=True,
                                                  args_materialized=True)
            rc = self.classes.get(target.cls)
            mc = rc.method(method) if rc else None
            return to_wire(self, result, mc.ret_copy if mc else False)
        return result

    def _run_sys_method(self, target, method: str, args: list, ctx):
        if method == "$echo":
            return to_wire(self, args[0], False)
        if method == "$traverse":
            method_name = args[0].to_str()
            call_args = list(args[1].items)
            tid = args[2].to_str()
            visited = [v.to_str() for v in args[3].items]
            result = yield from groups.run_node(self, ctx, target, method_name,
                                                call_args, tid, visited)
            return to_wire(self, result, False)
        if method == "$getf":
            record = self.deref(target)
            idx = self.field_index(record.cls, args[0].to_str(), -1)
            if idx < 0 or idx >= len(record.fields):
                raise wrap_remote(EngineError(E_UNKNOWN_METHOD,
                                              f"no field {args[0].to_str()}"))
            return to_wire(self, record.fields[idx], False)
        if method == "$setf":
            record = self.deref(target)
            idx = self.field_index(record.cls, args[0].to_str(), -1)
            if idx < 0 or idx >= len(record.fields):
                raise wrap_remote(EngineError(E_UNKNOWN_METHOD,
                                              f"no field {args[0].to_str()}"))
            record.fields[idx] = args[1]
            return None
        raise EngineError(E_UNKNOWN_METHOD, method)

    def _task_remote_post(self, target, method: str, wire_args: list, ctx):
        args = []
        for wa in wire_args:
            args.append((yield from from_wire(self, wa, ctx.origin, ctx)))
        try:
            yield from self.invoke(target, method, args, ctx)
        except EngineError as err:
            self.log_error(err.code, f"remote post {method}: {err.message}")

    def _task_remote_create(self, key: ClassKey, pid: int, wire_args: list, ctx):
        rc = yield from self.ensure_class(key, ctx.origin, ctx)
        if not rc.has(ir.CQ_EXTERNAL):
            raise EngineError(E_ACCESS_VIOLATION, f"class {key} is not external")
        args = []
        for wa in wire_args:
            args.append((yield from from_wire(self, wa, ctx.origin, ctx)))
        if pid not in self.partitions:
            raise EngineError(E_UNKNOWN_OBJECT, f"no partition {pid}")
        ref = yield from self.create_object(key, ("partition", pid), args, ctx)
        return ref

    def _on_reply(self, frame: frames.Frame) -> None:
        entry = self.pending.pop(frame.corr, None)
        if entry is None:
            return
        self.scheduler.cancel(entry.timer)
        try:
            value = decode_value_prefix(Reader(frame.payload))
        except (MalformedEncoding, ShortRead) as exc:
            entry.future.fail(EngineError("BadFrame", str(exc)))
            return
        entry.future.resolve(value)

    def _on_error(self, frame: frames.Frame) -> None:
        entry = self.pending.pop(frame.corr, None)
        if entry is None:
            return
        self.scheduler.cancel(entry.timer)
        r = Reader(frame.payload)
        code = r.wstr()
        remote_code = r.wstr() or None
        message = r.wstr()
        if code == "HopUnreachable":
            code = E_HOST_UNREACHABLE
        entry.future.fail(EngineError(code, message, remote_code=remote_code))

    # -------------------------------------------------------------- pack fetch

    def fetch_pack(self, origin: str, package: str) -> Future:
        """Fetch a runpack from `origin`. Concurrent demands for the same
        package share one transfer."""
        existing = self._fetch_inflight.get(package)
        if existing is not None:
            return existing
        fut = Future()
        self._fetch_inflight[package] = fut
        fut.add_callback(lambda _f: self._fetch_inflight.pop(package, None))
        try:
            if self.port is None:
                raise EngineError(E_HOST_UNREACHABLE, "engine has no network")
            corr = self.next_corr()
            w = Writer()
            w.wstr(package)
            frame = frames.Frame(frames.FETCH_PACK, corr, w.getvalue())
            next_hop = self.port.send(origin, frame)
            self.fetch_frames_sent += 1
            timer = self.scheduler.call_later(
                self.config.fetch_timeout_ms, lambda: self._timeout_pending(corr))
            self.pending[corr] = _PendingCall(fut, timer, origin, next_hop,
                                              next_hop == origin)
            self._pack_buffers[corr] = (package, [])
        except EngineError as err:
            fut.fail(err)
        return fut

    def _on_fetch_pack(self, frame: frames.Frame, meta: FrameMeta) -> None:
        r = Reader(frame.payload)
        package = r.wstr()
        image = self.packstore.resolve(package)
        if image is None:
            self._reply_error(meta, frame.corr,
                              EngineError(E_PACK_NOT_FOUND, package))
            return
        data = serialize(image)
        offset = 0
        while True:
            chunk = data[offset:offset + PACK_CHUNK]
            offset += len(chunk)
            last = offset >= len(data)
            w = Writer()
            w.u8(1 if last else 0)
            w.raw(chunk)
            self._send_back(meta, frames.Frame(frames.PACK_DATA, frame.corr,
                                               w.getvalue()))
            if last:
                break

    def _on_pack_data(self, frame: frames.Frame) -> None:
        entry = self._pack_buffers.get(frame.corr)
        if entry is None:
            return
        package, chunks = entry
        r = Reader(frame.payload)
        last = r.u8()
        chunks.append(r.raw(r.remaining()))
        if not last:
            return
        self._pack_buffers.pop(frame.corr, None)
        pending = self.pending.pop(frame.corr, None)
        if pending is None:
            return
        self.scheduler.cancel(pending.timer)
        try:
            image = deserialize(b"".join(chunks))
            if image.package != package:
                raise EngineError(E_HASH_MISMATCH,
                                  f"fetched {image.package}, wanted {package}")
            self.install_image(image, ORIGIN_NETWORK)
        except ImageFormatError as exc:
            pending.future.fail(EngineError(
                E_HASH_MISMATCH if exc.code == "HashMismatch" else E_UNKNOWN_CLASS,
                str(exc)))
            return
        except EngineError as err:
            pending.future.fail(err)
            return
        pending.future.resolve(True)

    def _on_event_post(self, frame: frames.Frame, meta: FrameMeta) -> None:
        r = Reader(frame.payload)
        sub = r.u8()
        sender, sids = self._read_creds(r)
        try:
            self.check_remote_request(EXEC, sids, None)
        except EngineError as err:
            self._reply_error(meta, frame.corr, err)
            return
        try:
            if sub == 0:
                qref = decode_value_prefix(r)
                target = decode_value_prefix(r)
                method = r.wstr()
                arity = r.u16()
                queue = self.resolve_queue(qref)
                eid = next(self._eid)
                ev = EventRecord(eid, queue.qid, target, method,
                                 [[False, None] for _ in range(arity)])
                self.events[eid] = ev
                if arity == 0:
                    self._fire_event(ev, sender)
                self._reply_value(meta, frame.corr, eid)
            else:
                eid = r.u64()
                slot = r.u16()
                value = decode_value_prefix(r)
                status = self._fill_local(eid, slot, value, sender)
                self._reply_value(meta, frame.corr, 1 if status == "fired" else 0)
        except EngineError as err:
            self._reply_error(meta, frame.corr, err)

    # ------------------------------------------------------------ odds and ends

    def call_intrinsic(self, hook: str, args: list, ctx):
        fn = INTRINSICS.get(hook)
        if fn is None:
            raise EngineError(E_UNKNOWN_METHOD, f"no intrinsic '{hook}'")
        return fn(self, ctx, args)

    def this_host_ref(self) -> ObjectRef:
        return host_ref(self.host_name)

    def hosts_root_ref(self) -> ObjectRef:
        return hosts_node_ref(self.host_name)

    def hello_lookup(self, name: str) -> ObjectRef | None:
        if name == self.host_name:
            return host_ref(name)
        if self.port is not None and self.port.knows(name):
            return host_ref(name)
        return None

    def hosts_group_children(self) -> Array:
        names = sorted(self.port.neighbor_names()) if self.port else []
        return Array(TAG_OBJECT, [hosts_node_ref(n) for n in names])

    def hosts_group_view(self) -> tuple[set[str], set[tuple[str, str]]]:
        names = {self.host_name}
        if self.port is not None:
            names.update(self.port.neighbor_names())
        return names, set(self.group_edges)

    def write_stdout(self, data: bytes) -> None:
        with self._out_lock:
            if self.stdout_sink is not None:
                self.stdout_sink(data)
            if self.capture_stdout:
                self.stdout_bytes += data

    def register_exec_handle(self, proc, queue_id: int) -> int:
        handle = next(self._exec_id)
        self._exec_handles[handle] = (proc, queue_id)
        return handle

    def exec_handle(self, handle: int, queue_id: int):
        entry = self._exec_handles.get(handle)
        if entry is None:
            raise EngineError(E_HANDLE_CLOSED, f"no exec handle {handle}")
        proc, owner = entry
        if owner != queue_id:
            raise EngineError(E_HANDLE_CLOSED,
                              "exec handles are confined to their creating queue")
        return proc

    def log_error(self, code: str, context: str) -> None:
        self.error_log.append((code, context))
        if self.on_host_event:
            self.on_host_event("error", f"{code}: {context}")

    def queues_idle(self) -> bool:
        return all(q.idle() for q in self.queues.values()) and not self.pending

    def remote_get_field(self, ref: ObjectRef, name: str, ctx):
        return (yield from self.invoke(ref, "$getf", [CharArray.from_str(name)], ctx))

    def remote_set_field(self, ref: ObjectRef, name: str, value, ctx):
        return (yield from self.invoke(ref, "$setf",
                                       [CharArray.from_str(name), value], ctx))

"""Tree-walking evaluator for runpack IR.

Every evaluation function is a generator so an expression can suspend on
network futures (remote calls, queue barriers, pack fetches) without tying
up anything but its own task. Integer arithmetic wraps at 64 bits; division
by zero and out-of-range indexing raise engine faults.
"""

from __future__ import annotations

from ..errors import (E_ARITHMETIC, E_INDEX, E_NULL_REF, EngineError)
from ..runpack import ir
from ..values import (Array, Char, CharArray, TAG_ARRAY, TAG_BOOL, TAG_INT,
                      TAG_OBJECT, values_equal, wrap_i64)


class Frame:
    __slots__ = ("this_ref", "locals", "consts", "ctx")

    def __init__(self, this_ref, locals_, consts, ctx):
        self.this_ref = this_ref
        self.locals = locals_
        self.consts = consts
        self.ctx = ctx


def default_value(ty: ir.TypeDesc):
    if ty.depth > 0 or ty.base == "class":
        return None
    if ty.base == "int":
        return 0
    if ty.base == "bool":
        return False
    if ty.base == "char":
        return Char(0)
    return None


def _trunc_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return -q if (a < 0) != (b < 0) else q


def _as_int(v) -> int:
    if isinstance(v, Char):
        return v.code
    return v


def _array_elem_tag(ty: ir.TypeDesc) -> int:
    if ty.depth > 0:
        return TAG_ARRAY
    if ty.base == "int":
        return TAG_INT
    if ty.base == "bool":
        return TAG_BOOL
    return TAG_OBJECT


def new_array(elem: ir.TypeDesc, dims: list[int]):
    for d in dims:
        if d < 0:
            raise EngineError(E_INDEX, f"negative array size {d}")
    if len(dims) == 1:
        if elem.depth == 0 and elem.base == "char":
            return CharArray(bytes(dims[0]))
        fill = default_value(elem)
        return Array(_array_elem_tag(elem), [fill] * dims[0])
    inner = [new_array(elem, dims[1:]) for _ in range(dims[0])]
    return Array(TAG_ARRAY, inner)


def exec_method_body(engine, frame: Frame, body: ir.IrBlock):
    """Run a method body; returns the method's return value (None if it
    falls off the end)."""
    state, value = yield from exec_stmt(engine, frame, body)
    return value if state == "ret" else None


def exec_stmt(engine, fr: Frame, node):
    if isinstance(node, ir.IrBlock):
        for stmt in node.stmts:
            state, value = yield from exec_stmt(engine, fr, stmt)
            if state == "ret":
                return state, value
        return "next", None
    if isinstance(node, ir.IrVarDecl):
        if node.init is not None:
            fr.locals[node.slot] = yield from eval_expr(engine, fr, node.init)
        else:
            fr.locals[node.slot] = default_value(node.ty)
        return "next", None
    if isinstance(node, ir.IrAssign):
        value = yield from eval_expr(engine, fr, node.value)
        if node.op == "set":
            yield from store_lvalue(engine, fr, node.target, value)
        elif node.op == "concat":
            old = yield from eval_expr(engine, fr, node.target)
            if old is None or value is None:
                raise EngineError(E_NULL_REF, "concat on null string")
            old.append(value)  # += appends in place
        else:
            old = yield from eval_expr(engine, fr, node.target)
            delta = value if node.op == "addi" else -value
            yield from store_lvalue(engine, fr, node.target, wrap_i64(old + delta))
        return "next", None
    if isinstance(node, ir.IrExprStmt):
        yield from eval_expr(engine, fr, node.expr)
        return "next", None
    if isinstance(node, ir.IrIf):
        cond = yield from eval_expr(engine, fr, node.cond)
        if cond:
            return (yield from exec_stmt(engine, fr, node.then))
        if node.other is not None:
            return (yield from exec_stmt(engine, fr, node.other))
        return "next", None
    if isinstance(node, ir.IrWhile):
        while True:
            cond = yield from eval_expr(engine, fr, node.cond)
            if not cond:
                return "next", None
            state, value = yield from exec_stmt(engine, fr, node.body)
            if state == "ret":
                return state, value
    if isinstance(node, ir.IrFor):
        if node.init is not None:
            state, value = yield from exec_stmt(engine, fr, node.init)
            if state == "ret":
                return state, value
        while True:
            if node.cond is not None:
                cond = yield from eval_expr(engine, fr, node.cond)
                if not cond:
                    return "next", None
            state, value = yield from exec_stmt(engine, fr, node.body)
            if state == "ret":
                return state, value
            if node.step is not None:
                state, value = yield from exec_stmt(engine, fr, node.step)
                if state == "ret":
                    return state, value
    if isinstance(node, ir.IrReturn):
        if node.value is None:
            return "ret", None
        value = yield from eval_expr(engine, fr, node.value)
        return "ret", value
    if isinstance(node, ir.IrPost):
        qref = yield from eval_expr(engine, fr, node.queue)
        target = yield from eval_expr(engine, fr, node.target)
        args = []
        for a in node.args:
            args.append((yield from eval_expr(engine, fr, a)))
        engine.post_message(qref, target, node.method, args, fr.ctx)
        return "next", None
    if isinstance(node, ir.IrNop):
        return "next", None
    raise AssertionError(f"unhandled statement {node!r}")


def store_lvalue(engine, fr: Frame, target, value):
    if isinstance(target, ir.IrLocal):
        fr.locals[target.slot] = value
        return
    if isinstance(target, ir.IrFieldGet):
        obj = yield from eval_expr(engine, fr, target.obj)
        if obj is None:
            raise EngineError(E_NULL_REF, f"field '{target.name}' of null")
        if obj.host == engine.host_name:
            record = engine.deref(obj)
            engine.check_local_object(obj, record, write=True, ctx=fr.ctx)
            idx = engine.field_index(record.cls, target.name, target.index)
            record.fields[idx] = value
        else:
            yield from engine.remote_set_field(obj, target.name, value, fr.ctx)
        return
    if isinstance(target, ir.IrIndex):
        arr = yield from eval_expr(engine, fr, target.arr)
        idx = yield from eval_expr(engine, fr, target.idx)
        if arr is None:
            raise EngineError(E_NULL_REF, "indexing null array")
        if isinstance(arr, CharArray):
            if not isinstance(value, Char):
                raise EngineError(E_INDEX, "char array takes char elements")
            if not 0 <= idx < len(arr.data):
                raise EngineError(E_INDEX, f"index {idx} out of range")
            arr.data[idx] = value.code
        else:
            if not 0 <= idx < len(arr.items):
                raise EngineError(E_INDEX, f"index {idx} out of range")
            arr.items[idx] = value
        return
    raise AssertionError(f"bad assignment target {target!r}")


def eval_expr(engine, fr: Frame, node):
    if isinstance(node, ir.IrInt):
        return node.value
    if isinstance(node, ir.IrBool):
        return node.value
    if isinstance(node, ir.IrChar):
        return Char(node.code)
    if isinstance(node, ir.IrStr):
        return CharArray(fr.consts[node.pool])  # literals yield fresh arrays
    if isinstance(node, ir.IrNull):
        return None
    if isinstance(node, ir.IrLocal):
        return fr.locals[node.slot]
    if isinstance(node, ir.IrThis):
        return fr.this_ref
    if isinstance(node, ir.IrThisHost):
        return engine.this_host_ref()
    if isinstance(node, ir.IrHostsRoot):
        return engine.hosts_root_ref()
    if isinstance(node, ir.IrFieldGet):
        obj = yield from eval_expr(engine, fr, node.obj)
        if obj is None:
            raise EngineError(E_NULL_REF, f"field '{node.name}' of null")
        if obj.host == engine.host_name:
            record = engine.deref(obj)
            engine.check_local_object(obj, record, write=False, ctx=fr.ctx)
            idx = engine.field_index(record.cls, node.name, node.index)
            return record.fields[idx]
        return (yield from engine.remote_get_field(obj, node.name, fr.ctx))
    if isinstance(node, ir.IrIndex):
        arr = yield from eval_expr(engine, fr, node.arr)
        idx = yield from eval_expr(engine, fr, node.idx)
        if arr is None:
            raise EngineError(E_NULL_REF, "indexing null array")
        if isinstance(arr, CharArray):
            if not 0 <= idx < len(arr.data):
                raise EngineError(E_INDEX, f"index {idx} out of range")
            return Char(arr.data[idx])
        if not 0 <= idx < len(arr.items):
            raise EngineError(E_INDEX, f"index {idx} out of range")
        return arr.items[idx]
    if isinstance(node, ir.IrBin):
        left = yield from eval_expr(engine, fr, node.left)
        right = yield from eval_expr(engine, fr, node.right)
        return _binop(node.op, left, right)
    if isinstance(node, ir.IrLogic):
        left = yield from eval_expr(engine, fr, node.left)
        if node.op == "and":
            if not left:
                return False
        else:
            if left:
                return True
        return (yield from eval_expr(engine, fr, node.right))
    if isinstance(node, ir.IrUn):
        v = yield from eval_expr(engine, fr, node.operand)
        if node.op == "neg":
            return wrap_i64(-v)
        return not v
    if isinstance(node, ir.IrTernary):
        cond = yield from eval_expr(engine, fr, node.cond)
        branch = node.then if cond else node.other
        return (yield from eval_expr(engine, fr, branch))
    if isinstance(node, ir.IrPostIncr):
        old = yield from eval_expr(engine, fr, node.target)
        yield from store_lvalue(engine, fr, node.target, wrap_i64(old + node.delta))
        return old
    if isinstance(node, ir.IrCallMethod):
        obj = yield from eval_expr(engine, fr, node.obj)
        args = []
        for a in node.args:
            args.append((yield from eval_expr(engine, fr, a)))
        return (yield from engine.invoke(obj, node.method, args, fr.ctx))
    if isinstance(node, ir.IrCallStatic):
        args = []
        for a in node.args:
            args.append((yield from eval_expr(engine, fr, a)))
        return (yield from engine.invoke_static(node.cls, node.method, args, fr.ctx))
    if isinstance(node, ir.IrCallBuiltin):
        args = []
        for a in node.args:
            args.append((yield from eval_expr(engine, fr, a)))
        result = engine.call_intrinsic(node.hook, args, fr.ctx)
        if hasattr(result, "send"):
            result = yield from result
        return result
    if isinstance(node, ir.IrNew):
        args = []
        for a in node.args:
            args.append((yield from eval_expr(engine, fr, a)))
        return (yield from engine.create_object(node.cls, ("heap",), args, fr.ctx))
    if isinstance(node, ir.IrCreate):
        if node.host is None:
            placement = ("partition", 0)
        else:
            href = yield from eval_expr(engine, fr, node.host)
            if href is None:
                raise EngineError(E_NULL_REF, "create placement host is null")
            if href.host == engine.host_name:
                placement = ("partition", 0)
            else:
                placement = ("remote", href.host, None)
        args = []
        for a in node.args:
            args.append((yield from eval_expr(engine, fr, a)))
        return (yield from engine.create_object(node.cls, placement, args, fr.ctx))
    if isinstance(node, ir.IrNewArray):
        dims = []
        for d in node.dims:
            dims.append((yield from eval_expr(engine, fr, d)))
        return new_array(node.elem, dims)
    if isinstance(node, ir.IrQueuedEval):
        qref = yield from eval_expr(engine, fr, node.queue)
        return (yield from engine.queued_eval_ir(qref, fr, node.body))
    if isinstance(node, ir.IrIterate):
        gref = yield from eval_expr(engine, fr, node.group)
        args = []
        for a in node.args:
            args.append((yield from eval_expr(engine, fr, a)))
        yield from engine.iterate(gref, node.method, args, fr.ctx)
        return None
    raise AssertionError(f"unhandled expression {node!r}")


def _binop(op: str, left, right):
    if op == "add":
        return wrap_i64(left + right)
    if op == "sub":
        return wrap_i64(left - right)
    if op == "mul":
        return wrap_i64(left * right)
    if op == "div":
        if right == 0:
            raise EngineError(E_ARITHMETIC, "division by zero")
        return wrap_i64(_trunc_div(left, right))
    if op == "mod":
        if right == 0:
            raise EngineError(E_ARITHMETIC, "division by zero")
        return wrap_i64(left - _trunc_div(left, right) * right)
    if op == "lt":
        return _as_int(left) < _as_int(right)
    if op == "le":
        return _as_int(left) <= _as_int(right)
    if op == "gt":
        return _as_int(left) > _as_int(right)
    if op == "ge":
        return _as_int(left) >= _as_int(right)
    if op == "eq":
        return values_equal(left, right)
    if op == "ne":
        return not values_equal(left, right)
    if op == "concat":
        if left is None or right is None:
            raise EngineError(E_NULL_REF, "concat on null string")
        return left.concat(right)
    raise AssertionError(f"unhandled op {op}")

"""Typed IR trees for compiled method bodies, with their binary codec.

The IR is what a runpack image carries instead of native code: a
tree-walked instruction form whose operators are already type-resolved
(integer add vs string concat, and so on). Method and class references are
name-based so images stay stable across hosts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..bio import Reader, Writer
from ..values import ClassKey

# Class qualifier bits.
CQ_EXTERNAL = 1
CQ_GROUP = 2
CQ_PUBLIC = 4

# Method qualifier bits.
MQ_PUBLIC = 1
MQ_STATIC = 2
MQ_EXTERNAL = 4
MQ_MESSAGE = 8
MQ_ITERATOR = 16
MQ_CTOR = 32

_BASES = ("void", "int", "bool", "char", "class")


@dataclass(frozen=True, slots=True)
class TypeDesc:
    """Compact runtime type: base kind, array depth, class key when base='class'."""
    base: str
    depth: int = 0
    cls: ClassKey | None = None

    @property
    def is_array(self) -> bool:
        return self.depth > 0

    @property
    def is_object(self) -> bool:
        return self.depth == 0 and self.base == "class"


TD_VOID = TypeDesc("void")
TD_INT = TypeDesc("int")
TD_BOOL = TypeDesc("bool")
TD_CHAR = TypeDesc("char")


class IrNode:
    pass


# --- expressions -------------------------------------------------------------

@dataclass(slots=True)
class IrInt(IrNode):
    value: int


@dataclass(slots=True)
class IrBool(IrNode):
    value: bool


@dataclass(slots=True)
class IrChar(IrNode):
    code: int


@dataclass(slots=True)
class IrStr(IrNode):
    pool: int  # constant pool index


@dataclass(slots=True)
class IrNull(IrNode):
    pass


@dataclass(slots=True)
class IrLocal(IrNode):
    slot: int


@dataclass(slots=True)
class IrThis(IrNode):
    pass


@dataclass(slots=True)
class IrThisHost(IrNode):
    pass


@dataclass(slots=True)
class IrHostsRoot(IrNode):
    pass


@dataclass(slots=True)
class IrFieldGet(IrNode):
    obj: IrNode
    index: int
    name: str


@dataclass(slots=True)
class IrIndex(IrNode):
    arr: IrNode
    idx: IrNode


@dataclass(slots=True)
class IrBin(IrNode):
    op: str  # add sub mul div mod lt le gt ge eq ne concat
    left: IrNode
    right: IrNode


@dataclass(slots=True)
class IrLogic(IrNode):
    op: str  # and | or (short-circuit)
    left: IrNode
    right: IrNode


@dataclass(slots=True)
class IrUn(IrNode):
    op: str  # neg | not
    operand: IrNode


@dataclass(slots=True)
class IrTernary(IrNode):
    cond: IrNode
    then: IrNode
    other: IrNode


@dataclass(slots=True)
class IrPostIncr(IrNode):
    target: IrNode  # IrLocal | IrFieldGet | IrIndex
    delta: int


@dataclass(slots=True)
class IrCallMethod(IrNode):
    obj: IrNode
    method: str
    args: list[IrNode]


@dataclass(slots=True)
class IrCallStatic(IrNode):
    cls: ClassKey
    method: str
    args: list[IrNode]


@dataclass(slots=True)
class IrCallBuiltin(IrNode):
    hook: str
    args: list[IrNode]


@dataclass(slots=True)
class IrNew(IrNode):
    cls: ClassKey
    args: list[IrNode]


@dataclass(slots=True)
class IrCreate(IrNode):
    host: IrNode | None  # None = local default partition
    cls: ClassKey
    args: list[IrNode]


@dataclass(slots=True)
class IrNewArray(IrNode):
    elem: TypeDesc
    dims: list[IrNode]


@dataclass(slots=True)
class IrQueuedEval(IrNode):
    queue: IrNode
    body: IrNode


@dataclass(slots=True)
class IrIterate(IrNode):
    group: IrNode
    method: str
    args: list[IrNode]


# --- statements ---------------------------------------------------------------

@dataclass(slots=True)
class IrBlock(IrNode):
    stmts: list[IrNode]


@dataclass(slots=True)
class IrVarDecl(IrNode):
    slot: int
    ty: TypeDesc
    init: IrNode | None


@dataclass(slots=True)
class IrAssign(IrNode):
    target: IrNode  # IrLocal | IrFieldGet | IrIndex
    op: str         # set | addi | subi | concat
    value: IrNode


@dataclass(slots=True)
class IrExprStmt(IrNode):
    expr: IrNode


@dataclass(slots=True)
class IrIf(IrNode):
    cond: IrNode
    then: IrNode
    other: IrNode | None


@dataclass(slots=True)
class IrWhile(IrNode):
    cond: IrNode
    body: IrNode


@dataclass(slots=True)
class IrFor(IrNode):
    init: IrNode | None
    cond: IrNode | None
    step: IrNode | None
    body: IrNode


@dataclass(slots=True)
class IrReturn(IrNode):
    value: IrNode | None


@dataclass(slots=True)
class IrPost(IrNode):
    queue: IrNode
    target: IrNode
    method: str
    args: list[IrNode]


@dataclass(slots=True)
class IrNop(IrNode):
    pass


# --- method / class containers -------------------------------------------------

@dataclass(slots=True)
class IrParam:
    name: str
    ty: TypeDesc
    copy: bool


@dataclass(slots=True)
class MethodCode:
    name: str
    quals: int
    params: list[IrParam]
    ret: TypeDesc
    ret_copy: bool
    n_slots: int
    body: IrBlock

    def has(self, bit: int) -> bool:
        return bool(self.quals & bit)


@dataclass(slots=True)
class ClassCode:
    name: str
    quals: int
    fields: list[tuple[str, TypeDesc]]
    methods: list[MethodCode]
    _by_name: dict = field(default_factory=dict, repr=False)

    def method(self, name: str) -> MethodCode | None:
        if not self._by_name:
            self._by_name = {m.name: m for m in self.methods}
        return self._by_name.get(name)

    def has(self, bit: int) -> bool:
        return bool(self.quals & bit)


# --- binary codec ---------------------------------------------------------------

_NODE_TYPES = [
    IrInt, IrBool, IrChar, IrStr, IrNull, IrLocal, IrThis, IrThisHost,
    IrHostsRoot, IrFieldGet, IrIndex, IrBin, IrLogic, IrUn, IrTernary,
    IrPostIncr, IrCallMethod, IrCallStatic, IrCallBuiltin, IrNew, IrCreate,
    IrNewArray, IrQueuedEval, IrIterate, IrBlock, IrVarDecl, IrAssign,
    IrExprStmt, IrIf, IrWhile, IrFor, IrReturn, IrPost, IrNop,
]
_TAG_OF = {t: i for i, t in enumerate(_NODE_TYPES)}

_BIN_OPS = ("add", "sub", "mul", "div", "mod", "lt", "le", "gt", "ge",
            "eq", "ne", "concat")
_LOGIC_OPS = ("and", "or")
_UN_OPS = ("neg", "not")
_ASSIGN_OPS = ("set", "addi", "subi", "concat")


class IrFormatError(Exception):
    pass


def write_type(w: Writer, ty: TypeDesc) -> None:
    w.u8(_BASES.index(ty.base))
    w.u8(ty.depth)
    if ty.base == "class":
        w.wstr(ty.cls.package)
        w.wstr(ty.cls.name)


def read_type(r: Reader) -> TypeDesc:
    idx = r.u8()
    if idx >= len(_BASES):
        raise IrFormatError(f"bad type base {idx}")
    base = _BASES[idx]
    depth = r.u8()
    cls = None
    if base == "class":
        cls = ClassKey(r.wstr(), r.wstr())
    return TypeDesc(base, depth, cls)


def _write_opt(w: Writer, node: IrNode | None) -> None:
    if node is None:
        w.u8(0)
    else:
        w.u8(1)
        write_node(w, node)


def _read_opt(r: Reader):
    return read_node(r) if r.u8() else None


def _write_list(w: Writer, nodes: list[IrNode]) -> None:
    w.u16(len(nodes))
    for n in nodes:
        write_node(w, n)


def _read_list(r: Reader) -> list[IrNode]:
    return [read_node(r) for _ in range(r.u16())]


def _write_key(w: Writer, key: ClassKey) -> None:
    w.wstr(key.package)
    w.wstr(key.name)


def _read_key(r: Reader) -> ClassKey:
    return ClassKey(r.wstr(), r.wstr())


def write_node(w: Writer, node: IrNode) -> None:
    tag = _TAG_OF[type(node)]
    w.u8(tag)
    if isinstance(node, IrInt):
        w.i64(node.value)
    elif isinstance(node, IrBool):
        w.u8(1 if node.value else 0)
    elif isinstance(node, IrChar):
        w.u8(node.code)
    elif isinstance(node, IrStr):
        w.u32(node.pool)
    elif isinstance(node, (IrNull, IrThis, IrThisHost, IrHostsRoot, IrNop)):
        pass
    elif isinstance(node, IrLocal):
        w.u16(node.slot)
    elif isinstance(node, IrFieldGet):
        write_node(w, node.obj)
        w.u16(node.index)
        w.wstr(node.name)
    elif isinstance(node, IrIndex):
        write_node(w, node.arr)
        write_node(w, node.idx)
    elif isinstance(node, IrBin):
        w.u8(_BIN_OPS.index(node.op))
        write_node(w, node.left)
        write_node(w, node.right)
    elif isinstance(node, IrLogic):
        w.u8(_LOGIC_OPS.index(node.op))
        write_node(w, node.left)
        write_node(w, node.right)
    elif isinstance(node, IrUn):
        w.u8(_UN_OPS.index(node.op))
        write_node(w, node.operand)
    elif isinstance(node, IrTernary):
        write_node(w, node.cond)
        write_node(w, node.then)
        write_node(w, node.other)
    elif isinstance(node, IrPostIncr):
        write_node(w, node.target)
        w.u8(node.delta & 0xFF)
    elif isinstance(node, IrCallMethod):
        write_node(w, node.obj)
        w.wstr(node.method)
        _write_list(w, node.args)
    elif isinstance(node, IrCallStatic):
        _write_key(w, node.cls)
        w.wstr(node.method)
        _write_list(w, node.args)
    elif isinstance(node, IrCallBuiltin):
        w.wstr(node.hook)
        _write_list(w, node.args)
    elif isinstance(node, IrNew):
        _write_key(w, node.cls)
        _write_list(w, node.args)
    elif isinstance(node, IrCreate):
        _write_opt(w, node.host)
        _write_key(w, node.cls)
        _write_list(w, node.args)
    elif isinstance(node, IrNewArray):
        write_type(w, node.elem)
        _write_list(w, node.dims)
    elif isinstance(node, IrQueuedEval):
        write_node(w, node.queue)
        write_node(w, node.body)
    elif isinstance(node, IrIterate):
        write_node(w, node.group)
        w.wstr(node.method)
        _write_list(w, node.args)
    elif isinstance(node, IrBlock):
        _write_list(w, node.stmts)
    elif isinstance(node, IrVarDecl):
        w.u16(node.slot)
        write_type(w, node.ty)
        _write_opt(w, node.init)
    elif isinstance(node, IrAssign):
        write_node(w, node.target)
        w.u8(_ASSIGN_OPS.index(node.op))
        write_node(w, node.value)
    elif isinstance(node, IrExprStmt):
        write_node(w, node.expr)
    elif isinstance(node, IrIf):
        write_node(w, node.cond)
        write_node(w, node.then)
        _write_opt(w, node.other)
    elif isinstance(node, IrWhile):
        write_node(w, node.cond)
        write_node(w, node.body)
    elif isinstance(node, IrFor):
        _write_opt(w, node.init)
        _write_opt(w, node.cond)
        _write_opt(w, node.step)
        write_node(w, node.body)
    elif isinstance(node, IrReturn):
        _write_opt(w, node.value)
    elif isinstance(node, IrPost):
        write_node(w, node.queue)
        write_node(w, node.target)
        w.wstr(node.method)
        _write_list(w, node.args)
    else:
        raise AssertionError(f"unhandled node {node!r}")


def read_node(r: Reader) -> IrNode:
    tag = r.u8()
    if tag >= len(_NODE_TYPES):
        raise IrFormatError(f"bad node tag {tag}")
    cls = _NODE_TYPES[tag]
    if cls is IrInt:
        return IrInt(r.i64())
    if cls is IrBool:
        return IrBool(r.u8() != 0)
    if cls is IrChar:
        return IrChar(r.u8())
    if cls is IrStr:
        return IrStr(r.u32())
    if cls is IrNull:
        return IrNull()
    if cls is IrThis:
        return IrThis()
    if cls is IrThisHost:
        return IrThisHost()
    if cls is IrHostsRoot:
        return IrHostsRoot()
    if cls is IrNop:
        return IrNop()
    if cls is IrLocal:
        return IrLocal(r.u16())
    if cls is IrFieldGet:
        return IrFieldGet(read_node(r), r.u16(), r.wstr())
    if cls is IrIndex:
        return IrIndex(read_node(r), read_node(r))
    if cls is IrBin:
        op_idx = r.u8()
        if op_idx >= len(_BIN_OPS):
            raise IrFormatError("bad binary op")
        return IrBin(_BIN_OPS[op_idx], read_node(r), read_node(r))
    if cls is IrLogic:
        op_idx = r.u8()
        if op_idx >= len(_LOGIC_OPS):
            raise IrFormatError("bad logic op")
        return IrLogic(_LOGIC_OPS[op_idx], read_node(r), read_node(r))
    if cls is IrUn:
        op_idx = r.u8()
        if op_idx >= len(_UN_OPS):
            raise IrFormatError("bad unary op")
        return IrUn(_UN_OPS[op_idx], read_node(r))
    if cls is IrTernary:
        return IrTernary(read_node(r), read_node(r), read_node(r))
    if cls is IrPostIncr:
        target = read_node(r)
        raw = r.u8()
        return IrPostIncr(target, raw - 256 if raw >= 128 else raw)
    if cls is IrCallMethod:
        return IrCallMethod(read_node(r), r.wstr(), _read_list(r))
    if cls is IrCallStatic:
        return IrCallStatic(_read_key(r), r.wstr(), _read_list(r))
    if cls is IrCallBuiltin:
        return IrCallBuiltin(r.wstr(), _read_list(r))
    if cls is IrNew:
        return IrNew(_read_key(r), _read_list(r))
    if cls is IrCreate:
        return IrCreate(_read_opt(r), _read_key(r), _read_list(r))
    if cls is IrNewArray:
        return IrNewArray(read_type(r), _read_list(r))
    if cls is IrQueuedEval:
        return IrQueuedEval(read_node(r), read_node(r))
    if cls is IrIterate:
        return IrIterate(read_node(r), r.wstr(), _read_list(r))
    if cls is IrBlock:
        return IrBlock(_read_list(r))
    if cls is IrVarDecl:
        return IrVarDecl(r.u16(), read_type(r), _read_opt(r))
    if cls is IrAssign:
        target = read_node(r)
        op_idx = r.u8()
        if op_idx >= len(_ASSIGN_OPS):
            raise IrFormatError("bad assign op")
        return IrAssign(target, _ASSIGN_OPS[op_idx], read_node(r))
    if cls is IrExprStmt:
        return IrExprStmt(read_node(r))
    if cls is IrIf:
        return IrIf(read_node(r), read_node(r), _read_opt(r))
    if cls is IrWhile:
        return IrWhile(read_node(r), read_node(r))
    if cls is IrFor:
        return IrFor(_read_opt(r), _read_opt(r), _read_opt(r), read_node(r))
    if cls is IrReturn:
        return IrReturn(_read_opt(r))
    if cls is IrPost:
        return IrPost(read_node(r), read_node(r), r.wstr(), _read_list(r))
    raise AssertionError(f"unhandled tag {tag}")


def validate_refs(node: IrNode, pool_size: int, n_slots: int) -> None:
    """Bounds-check pool indices and local slots after deserialization."""
    if isinstance(node, IrStr) and node.pool >= pool_size:
        raise IrFormatError(f"constant index {node.pool} out of range")
    if isinstance(node, (IrLocal, IrVarDecl)) and node.slot >= n_slots:
        raise IrFormatError(f"slot {node.slot} out of range")
    for attr in getattr(node, "__slots__", ()):
        child = getattr(node, attr, None)
        if isinstance(child, IrNode):
            validate_refs(child, pool_size, n_slots)
        elif isinstance(child, list):
            for item in child:
                if isinstance(item, IrNode):
                    validate_refs(item, pool_size, n_slots)

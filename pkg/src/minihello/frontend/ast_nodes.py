"""Abstract syntax for a source package.

Every node carries its source location. The checker annotates expression
nodes in place: `ty` receives the static type, and the `res_*` fields
receive name-resolution results consumed by the lowering pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .diagnostics import Loc
from .types import Type


@dataclass
class Node:
    loc: Loc


@dataclass
class Expr(Node):
    ty: Type | None = field(default=None, init=False, compare=False)


# --- expressions -----------------------------------------------------------

@dataclass
class IntLit(Expr):
    value: int


@dataclass
class BoolLit(Expr):
    value: bool


@dataclass
class CharLit(Expr):
    code: int


@dataclass
class StrLit(Expr):
    data: bytes


@dataclass
class NullLit(Expr):
    pass


@dataclass
class NameRef(Expr):
    name: str
    # filled by the checker: ('local', slot) | ('field', index) | ('enum', value)
    res: tuple | None = field(default=None, init=False, compare=False)


@dataclass
class ThisExpr(Expr):
    pass


@dataclass
class ThisHostExpr(Expr):
    pass


@dataclass
class HostsExpr(Expr):
    pass


@dataclass
class FieldAccess(Expr):
    obj: Expr
    name: str
    res_index: int | None = field(default=None, init=False, compare=False)


@dataclass
class Index(Expr):
    obj: Expr
    index: Expr


@dataclass
class Unary(Expr):
    op: str  # '-' | '!'
    operand: Expr


@dataclass
class Binary(Expr):
    op: str  # + - * / % < <= > >= == != && ||
    left: Expr
    right: Expr
    res_kind: str | None = field(default=None, init=False, compare=False)  # 'int' arith vs 'concat' etc


@dataclass
class Ternary(Expr):
    cond: Expr
    then: Expr
    other: Expr


@dataclass
class PostIncr(Expr):
    target: Expr  # NameRef | FieldAccess | Index
    delta: int    # +1 or -1


@dataclass
class Call(Expr):
    callee: Expr  # NameRef (bare) or FieldAccess (method)
    args: list[Expr]
    # checker: ('method', ClassKey, MethodSig) | ('builtin', BuiltinFuncSig) | ('static', ClassKey, MethodSig)
    res: tuple | None = field(default=None, init=False, compare=False)


@dataclass
class NewObject(Expr):
    class_name: str
    args: list[Expr]
    res_class: object | None = field(default=None, init=False, compare=False)


@dataclass
class CreateObject(Expr):
    host: Expr | None  # None = local host's default partition
    class_name: str
    args: list[Expr]
    res_class: object | None = field(default=None, init=False, compare=False)


@dataclass
class NewArray(Expr):
    elem: Type  # element type of the innermost dimension
    dims: list[Expr]  # 1 or 2 dimensions


@dataclass
class QueuedEval(Expr):
    queue: Expr
    body: Expr


@dataclass
class GroupIterate(Expr):
    group: Expr
    method: str
    args: list[Expr]
    res_sig: object | None = field(default=None, init=False, compare=False)


# --- statements ------------------------------------------------------------

@dataclass
class Stmt(Node):
    pass


@dataclass
class Block(Stmt):
    stmts: list[Stmt]


@dataclass
class VarDecl(Stmt):
    declared: Type
    name: str
    init: Expr | None
    slot: int | None = field(default=None, init=False, compare=False)


@dataclass
class Assign(Stmt):
    target: Expr  # NameRef | FieldAccess | Index
    op: str       # '=' | '+=' | '-='
    value: Expr
    res_kind: str | None = field(default=None, init=False, compare=False)


@dataclass
class ExprStmt(Stmt):
    expr: Expr


@dataclass
class If(Stmt):
    cond: Expr
    then: Stmt
    other: Stmt | None


@dataclass
class While(Stmt):
    cond: Expr
    body: Stmt


@dataclass
class For(Stmt):
    init: Stmt | None
    cond: Expr | None
    step: Stmt | None
    body: Stmt


@dataclass
class Return(Stmt):
    value: Expr | None


@dataclass
class MessagePost(Stmt):
    queue: Expr
    target: Expr
    method: str
    args: list[Expr]
    res_sig: object | None = field(default=None, init=False, compare=False)


@dataclass
class Empty(Stmt):
    pass


# --- declarations ----------------------------------------------------------

@dataclass
class ParamDecl(Node):
    name: str
    declared: Type
    copy: bool


@dataclass
class EnumEntry(Node):
    name: str
    expr: Expr


@dataclass
class FieldDecl(Node):
    name: str
    declared: Type
    quals: frozenset[str]


@dataclass
class MethodDecl(Node):
    name: str
    quals: frozenset[str]
    params: list[ParamDecl]
    ret: Type
    ret_copy: bool
    body: Block
    is_ctor: bool = False
    n_slots: int | None = field(default=None, init=False, compare=False)


@dataclass
class ClassDecl(Node):
    name: str
    quals: frozenset[str]
    fields: list[FieldDecl]
    methods: list[MethodDecl]
    enums: list[EnumEntry]


@dataclass
class PackageAst(Node):
    name: str
    classes: list[ClassDecl]

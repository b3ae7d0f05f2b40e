"""Typed syntax tree for the Structured Text subset.

Spans are excluded from equality so that a tree parsed from pretty-printed
output compares equal to the original.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from ..expr import ArrayType, ElementaryType, Expr, Span


@dataclass(frozen=True)
class FbType:
    """Type of a function block instance variable."""

    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class VarDecl:
    name: str
    type: Union[ElementaryType, ArrayType, FbType]
    section: str  # input, output, local, temp, constant
    init: object = None  # literal value, tuple for arrays, None for type default
    span: Span | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Block:
    stmts: tuple
    span: Span | None = field(default=None, compare=False)

    def __iter__(self):
        return iter(self.stmts)

    def __len__(self):
        return len(self.stmts)


@dataclass(frozen=True)
class Assign:
    target: Expr  # Var or Index
    value: Expr
    span: Span | None = field(default=None, compare=False)


@dataclass(frozen=True)
class If:
    branches: tuple  # ((cond, Block), ...)
    else_body: Block | None
    span: Span | None = field(default=None, compare=False)


@dataclass(frozen=True)
class CaseArm:
    labels: tuple  # ((lo, hi), ...)
    body: Block


@dataclass(frozen=True)
class Case:
    selector: Expr
    arms: tuple
    else_body: Block | None
    span: Span | None = field(default=None, compare=False)


@dataclass(frozen=True)
class For:
    var: Expr
    start: Expr
    stop: Expr
    step: int
    body: Block
    span: Span | None = field(default=None, compare=False)


@dataclass(frozen=True)
class While:
    cond: Expr
    body: Block
    span: Span | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Repeat:
    body: Block
    cond: Expr
    span: Span | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Call:
    """Call of a function block instance or a function.

    `inputs` binds formal input names to caller expressions, `outputs` binds
    formal output names to caller lvalues. For `v := F(...)` the function's
    return value appears in `outputs` under the function name.
    """

    callee: str  # unit name
    instance: str | None  # instance variable for function blocks
    inputs: tuple
    outputs: tuple
    result_form: bool = False  # written as `target := F(...)`
    span: Span | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Return:
    span: Span | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Exit:
    span: Span | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Empty:
    span: Span | None = field(default=None, compare=False)


Stmt = Union[Assign, If, Case, For, While, Repeat, Call, Return, Exit, Empty]


@dataclass(frozen=True)
class ProgramUnit:
    kind: str  # PROGRAM, FUNCTION_BLOCK, FUNCTION
    name: str
    decls: tuple
    body: Block
    return_type: ElementaryType | None = None
    span: Span | None = field(default=None, compare=False)

    def decl(self, name: str) -> VarDecl | None:
        for d in self.decls:
            if d.name == name:
                return d
        return None

    def section(self, *names: str) -> list[VarDecl]:
        return [d for d in self.decls if d.section in names]


@dataclass(frozen=True)
class TypedAst:
    units: tuple
    diagnostics: tuple = field(default=(), compare=False)  # warnings only

    def unit(self, name: str) -> ProgramUnit:
        for u in self.units:
            if u.name == name:
                return u
        raise KeyError(name)

    def has_unit(self, name: str) -> bool:
        return any(u.name == name for u in self.units)


def child_blocks(stmt) -> list[Block]:
    """Nested blocks of a compound statement, in anchor-path order."""
    if isinstance(stmt, If):
        out = [b for _, b in stmt.branches]
        return out + [stmt.else_body] if stmt.else_body is not None else out
    if isinstance(stmt, Case):
        out = [a.body for a in stmt.arms]
        return out + [stmt.else_body] if stmt.else_body is not None else out
    if isinstance(stmt, (For, While, Repeat)):
        return [stmt.body]
    return []


def statement_positions(block: Block, path: tuple = ()):
    """Yield every valid anchor position (path + (index,)) within `block`."""
    for k in range(len(block.stmts) + 1):
        yield path + (k,)
    for i, stmt in enumerate(block.stmts):
        for j, sub in enumerate(child_blocks(stmt)):
            yield from statement_positions(sub, path + (i, j))

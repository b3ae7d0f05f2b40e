from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..expr import BOOL, Expr, Span
from . import ast as A
from .lexer import Diagnostic, DiagnosticError, SourceUnit, Token
from .parser import ParseError, parse_expression

PREFIX = "//#ASSERT"
_DIRECTIVE = re.compile(r"//#ASSERT(?::(?P<name>[A-Za-z_][A-Za-z0-9_]*))?(?P<expr>(?:\s.*)?)$", re.S)


@dataclass(frozen=True)
class AssertionDirective:
    name: str | None
    expression_text: str
    span: Span
    anchor: tuple  # (unit name, statement position path)
    expr: Expr = field(compare=False)
    label: str = ""


def _innermost(block: A.Block, offset: int, path: tuple) -> tuple[A.Block, tuple]:
    for i, stmt in enumerate(block.stmts):
        for j, sub in enumerate(A.child_blocks(stmt)):
            if sub.span is not None and sub.span.start <= offset < sub.span.end:
                return _innermost(sub, offset, path + (i, j))
    return block, path


def extract_assertions(tokens: list[Token], ast: A.TypedAst, source: SourceUnit | None = None,
                       first_ordinal: int = 1) -> list[AssertionDirective]:
    """Turn `//#ASSERT[:name] expr` comments into directives anchored at statement positions.

    Unnamed directives are labelled A1, A2, ... in source order starting from
    `first_ordinal`.
    """
    out: list[AssertionDirective] = []
    errors: list[Diagnostic] = []
    path = source.path if source is not None else None
    ordinal = first_ordinal
    for tok in tokens:
        if tok.kind != "comment" or not tok.lexeme.startswith(PREFIX):
            continue
        start, end = tok.span
        span = source.span(start, end) if source is not None else Span(path or "<input>", start, end)
        m = _DIRECTIVE.match(tok.lexeme)
        if m is None:
            errors.append(Diagnostic("error", "malformed assertion directive", span))
            continue
        text = m.group("expr").strip()
        if not text:
            errors.append(Diagnostic("error", "assertion has no expression", span))
            continue
        unit = next((u for u in ast.units
                     if (path is None or u.span.path == path)
                     and u.body.span.start <= start < u.body.span.end), None)
        if unit is None:
            errors.append(Diagnostic("error", "assertion outside of a statement body", span))
            continue
        block, bpath = _innermost(unit.body, start, ())
        index = sum(1 for s in block.stmts if s.span.end <= start)
        expr_offset = start + tok.lexeme.index(text, len(PREFIX))
        try:
            expr = parse_expression(text, ast, unit.name, path=span.path, offset=expr_offset, source=source)
        except DiagnosticError as exc:
            errors.extend(exc.diagnostics)
            continue
        if expr.type != BOOL:
            errors.append(Diagnostic("error", f"type mismatch: assertion must be BOOL, found {expr.type}", span))
            continue
        name = m.group("name")
        label = name or f"A{ordinal}"
        if name is None:
            ordinal += 1
        if any(d.label == label for d in out):
            errors.append(Diagnostic("error", f"duplicate assertion name '{label}'", span))
            continue
        out.append(AssertionDirective(name, text, span, (unit.name, bpath + (index,)), expr, label))
    if errors:
        raise ParseError(errors)
    return out

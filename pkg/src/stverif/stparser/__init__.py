"""Structured Text subset front end: lexer, parser/type resolver, assertion comments."""
from .assertions import AssertionDirective, extract_assertions
from .ast import TypedAst
from .lexer import Diagnostic, DiagnosticError, LexError, SourceUnit, Token, tokenize
from .parser import ParseError, parse, parse_expression, parse_source, parse_units
from .printer import pretty

__all__ = [
    "AssertionDirective", "Diagnostic", "DiagnosticError", "LexError", "ParseError", "SourceUnit",
    "Token", "TypedAst", "extract_assertions", "parse", "parse_expression", "parse_source",
    "parse_units", "pretty", "tokenize", "load_sources",
]


def load_sources(paths) -> tuple[TypedAst, list[AssertionDirective], list[SourceUnit]]:
    """Read, parse and extract assertions from several files sharing one namespace."""
    units = []
    for p in paths:
        with open(p, encoding="utf-8") as fh:
            units.append(SourceUnit(str(p), fh.read()))
    ast = parse_units(units)
    directives: list[AssertionDirective] = []
    for u in units:
        found = extract_assertions(tokenize(u), ast, u, first_ordinal=1 + sum(d.name is None for d in directives))
        directives.extend(found)
    labels = [d.label for d in directives]
    if len(set(labels)) != len(labels):
        dup = next(lbl for lbl in labels if labels.count(lbl) > 1)
        raise ParseError([Diagnostic("error", f"duplicate assertion name '{dup}'",
                                     next(d.span for d in directives if d.label == dup))])
    return ast, directives, units

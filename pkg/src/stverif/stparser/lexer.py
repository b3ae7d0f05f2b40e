from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..expr import Span

KEYWORDS = {
    "PROGRAM", "END_PROGRAM", "FUNCTION_BLOCK", "END_FUNCTION_BLOCK", "FUNCTION", "END_FUNCTION",
    "VAR_INPUT", "VAR_OUTPUT", "VAR", "VAR_TEMP", "CONSTANT", "END_VAR",
    "IF", "THEN", "ELSIF", "ELSE", "END_IF", "CASE", "OF", "END_CASE",
    "FOR", "TO", "BY", "DO", "END_FOR", "WHILE", "END_WHILE", "REPEAT", "UNTIL", "END_REPEAT",
    "RETURN", "EXIT", "AND", "OR", "XOR", "NOT", "MOD", "BOOL", "INT", "DINT", "ARRAY",
}

OPERATORS = (":=", "=>", "<>", "<=", ">=", "..", "<", ">", "=", "+", "-", "*", "/")
PUNCTUATION = ("(", ")", "[", "]", ",", ";", ":", ".")


@dataclass(frozen=True)
class Token:
    kind: str  # keyword, identifier, integer-literal, boolean-literal, operator, punctuation, comment
    lexeme: str
    span: tuple[int, int]

    @property
    def value(self) -> str:
        """Upper-cased lexeme for keywords and boolean literals, raw otherwise."""
        if self.kind in ("keyword", "boolean-literal"):
            return self.lexeme.upper()
        return self.lexeme


@dataclass
class SourceUnit:
    path: str
    text: str
    declarations: list = field(default_factory=list)

    def span(self, start: int, end: int) -> Span:
        line = self.text.count("\n", 0, start) + 1
        col = start - (self.text.rfind("\n", 0, start) + 1) + 1
        return Span(self.path, start, end, line, col)


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    message: str
    span: Span

    def __str__(self) -> str:
        return f"{self.span}: {self.severity}: {self.message}"


class DiagnosticError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


class LexError(DiagnosticError):
    pass


_WS = re.compile(r"\s+")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_DEC = re.compile(r"[0-9](?:_?[0-9])*")
_HEX = re.compile(r"16#[0-9A-Fa-f](?:_?[0-9A-Fa-f])*")
_MALFORMED_NUM = re.compile(r"[0-9][0-9A-Za-z_#]*")


def tokenize(unit: SourceUnit) -> list[Token]:
    """Split `unit.text` into tokens; comments are kept, whitespace is dropped.

    Every non-whitespace character ends up in exactly one token lexeme, or in
    an error diagnostic raised as LexError after the whole text was scanned.
    """
    text = unit.text
    tokens: list[Token] = []
    errors: list[Diagnostic] = []
    pos, n = 0, len(text)
    while pos < n:
        m = _WS.match(text, pos)
        if m:
            pos = m.end()
            continue
        ch = text[pos]
        if text.startswith("//", pos):
            end = text.find("\n", pos)
            end = n if end < 0 else end
            if text[end - 1:end] == "\r":
                end -= 1
            tokens.append(Token("comment", text[pos:end], (pos, end)))
            pos = end
            continue
        if text.startswith("(*", pos):
            end = text.find("*)", pos + 2)
            if end < 0:
                errors.append(Diagnostic("error", "unterminated comment", unit.span(pos, n)))
                tokens.append(Token("comment", text[pos:], (pos, n)))
                pos = n
                continue
            tokens.append(Token("comment", text[pos:end + 2], (pos, end + 2)))
            pos = end + 2
            continue
        if ch.isalpha() or ch == "_":
            m = _IDENT.match(text, pos)
            word = m.group()
            upper = word.upper()
            if upper in ("TRUE", "FALSE"):
                kind = "boolean-literal"
            elif upper in KEYWORDS:
                kind = "keyword"
            else:
                kind = "identifier"
            tokens.append(Token(kind, word, m.span()))
            pos = m.end()
            continue
        if ch.isdigit():
            m = _MALFORMED_NUM.match(text, pos)
            lexeme = m.group()
            good = _HEX.fullmatch(lexeme) or _DEC.fullmatch(lexeme)
            if not good:
                errors.append(Diagnostic("error", f"malformed integer literal '{lexeme}'",
                                         unit.span(pos, m.end())))
            tokens.append(Token("integer-literal", lexeme, m.span()))
            pos = m.end()
            continue
        for op in OPERATORS:
            if text.startswith(op, pos):
                tokens.append(Token("operator", op, (pos, pos + len(op))))
                pos += len(op)
                break
        else:
            if ch in PUNCTUATION:
                tokens.append(Token("punctuation", ch, (pos, pos + 1)))
            else:
                errors.append(Diagnostic("error", f"unexpected character {ch!r}", unit.span(pos, pos + 1)))
                tokens.append(Token("error", ch, (pos, pos + 1)))
            pos += 1
    if errors:
        raise LexError(errors)
    return tokens


def int_value(lexeme: str) -> int:
    s = lexeme.replace("_", "")
    if s.startswith("16#"):
        return int(s[3:], 16)
    return int(s)

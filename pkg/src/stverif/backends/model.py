"""Shared backend types: identifier maps and emitted models."""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..cfa import CfaNetwork


class UnsupportedFeature(Exception):
    def __init__(self, message: str, span=None):
        where = f" at {span}" if span is not None else ""
        super().__init__(message + where)
        self.span = span


_RESERVED = {
    "smv": {"MODULE", "VAR", "IVAR", "ASSIGN", "INVARSPEC", "DEFINE", "TRUE", "FALSE", "case", "esac", "init",
            "next", "mod", "xor", "signed", "unsigned", "word", "boolean", "extend", "resize", "self", "main"},
    "c": {"int", "short", "char", "long", "if", "else", "while", "for", "do", "return", "break", "continue",
          "static", "void", "main", "const", "unsigned", "signed", "switch", "case", "default"},
}


class NameMap:
    """Bijection between CFA names and identifiers of an emitted model."""

    def __init__(self, prefix: str = "v_", style: str = "c"):
        self.prefix = prefix
        self.style = style
        self.forward: dict[str, str] = {}
        self.backward: dict[str, str] = {}

    def add(self, name: str) -> str:
        if name in self.forward:
            return self.forward[name]
        base = self.prefix + re.sub(r"[^A-Za-z0-9_]", "_", name)
        if not re.match(r"[A-Za-z_]", base):
            base = "_" + base
        ident, k = base, 1
        while ident in self.backward or ident in _RESERVED.get(self.style, ()):
            k += 1
            ident = f"{base}_{k}"
        self.forward[name] = ident
        self.backward[ident] = name
        return ident

    def __getitem__(self, name: str) -> str:
        return self.forward[name]

    def to_cfa(self, ident: str) -> str:
        return self.backward[ident]

    def __contains__(self, name: str) -> bool:
        return name in self.forward

    def __len__(self) -> int:
        return len(self.forward)


@dataclass
class EmittedModel:
    format: str  # smv or c
    text: str
    map: NameMap
    property_label: str
    net: CfaNetwork = field(repr=False, default=None)
    checks: tuple = field(repr=False, default=())
    locations: NameMap | None = field(repr=False, default=None)
    extension: str = ""

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.text)

"""Control flow automata: variables, locations, guarded transitions, networks."""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from ..expr import TRUE, ArrayType, Const, ElementaryType, Expr, Span, Type, to_st

INITIAL = "initial"
CYCLE_START = "cycle-start"
END_OF_CYCLE = "end-of-cycle"
ASSERTION = "assertion-anchor"
PLAIN = "plain"
ENTRY = "entry"
EXIT = "exit"

PERSISTENT_KINDS = ("output", "local")


@dataclass(frozen=True)
class Variable:
    name: str
    type: Type
    kind: str  # input, output, local, temp, constant
    init: object = None
    domain: tuple | None = None  # explicit input domain; None means the full type range
    span: Span | None = field(default=None, compare=False)

    @property
    def is_array(self) -> bool:
        return isinstance(self.type, ArrayType)

    @property
    def elem_type(self) -> ElementaryType:
        return self.type.elem if self.is_array else self.type

    @property
    def persistent(self) -> bool:
        return self.kind in PERSISTENT_KINDS

    def initial_value(self):
        if self.init is not None:
            return self.init
        return self.type.default()

    def values(self):
        """Havoc domain of a scalar variable."""
        if self.domain is not None:
            return self.domain
        return self.type.values()

    def domain_size(self) -> int:
        if self.is_array:
            return len(self.type.elem.values()) ** self.type.size
        return len(self.values())

    def element_names(self) -> list[str]:
        if not self.is_array:
            return [self.name]
        return [f"{self.name}[{i}]" for i in range(self.type.lo, self.type.hi + 1)]


@dataclass(frozen=True)
class Location:
    id: str
    role: str = PLAIN
    span: Span | None = field(default=None, compare=False)
    assertion: tuple | None = None  # (directive label, BOOL Expr)


@dataclass(frozen=True)
class Assignment:
    target: Expr  # Var or Index
    value: Expr


@dataclass(frozen=True)
class CallSite:
    site: str  # unique per automaton, e.g. c1
    callee: str
    instance: str | None  # qualified instance variable prefix for function blocks
    inputs: tuple  # ((param, Expr), ...)
    outputs: tuple  # ((param, lvalue Expr), ...)


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    guard: Expr = TRUE
    assignments: tuple = ()
    kind: str = "skip"  # skip, assign, guard, havoc, init, cycle, call, nondet, return, exit
    span: Span | None = field(default=None, compare=False)
    call: CallSite | None = None

    @property
    def is_skip(self) -> bool:
        return self.guard == TRUE and not self.assignments and self.call is None


@dataclass(frozen=True)
class Automaton:
    name: str
    locations: tuple
    transitions: tuple
    initial: str
    params: tuple = ()  # callee-local Variables (formals, locals, temps)
    exit: str | None = None

    def location(self, lid: str) -> Location:
        for loc in self.locations:
            if loc.id == lid:
                return loc
        raise KeyError(lid)

    def role(self, role: str) -> list[Location]:
        return [loc for loc in self.locations if loc.role == role]

    def outgoing(self) -> dict[str, list[Transition]]:
        out: dict[str, list[Transition]] = {loc.id: [] for loc in self.locations}
        for t in self.transitions:
            out[t.source].append(t)
        return out

    def call_sites(self) -> list[Transition]:
        return [t for t in self.transitions if t.call is not None]


@dataclass(frozen=True)
class CfaNetwork:
    variables: tuple
    main: Automaton
    callees: tuple = ()
    entry_name: str = ""
    assertions: tuple = ()  # AssertionDirectives lowered into this network

    def var(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def has_var(self, name: str) -> bool:
        return any(v.name == name for v in self.variables)

    def inputs(self) -> list[Variable]:
        return [v for v in self.variables if v.kind == "input"]

    def callee(self, name: str) -> Automaton:
        for a in self.callees:
            if a.name == name:
                return a
        raise KeyError(name)

    def location_role(self, role: str) -> str:
        (loc,) = self.main.role(role)
        return loc.id

    @property
    def cycle_start(self) -> str:
        return self.location_role(CYCLE_START)

    @property
    def end_of_cycle(self) -> str:
        return self.location_role(END_OF_CYCLE)

    def has_call_sites(self) -> bool:
        return bool(self.main.call_sites())

    def havoc_transitions(self) -> list[Transition]:
        return [t for t in self.main.transitions if t.kind == "havoc"]

    def with_variables(self, variables) -> "CfaNetwork":
        return replace(self, variables=tuple(variables))

    def with_main(self, main: Automaton) -> "CfaNetwork":
        return replace(self, main=main)

    def size(self) -> dict:
        return {"locations": len(self.main.locations), "transitions": len(self.main.transitions),
                "variables": len(self.variables)}


def _natural(s: str):
    return [int(p) if p.isdigit() else p for p in re.split(r"(\d+)", s)]


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if isinstance(v, tuple):
        return "[" + ", ".join(_fmt_value(x) for x in v) + "]"
    return str(v)


def _fmt_transition(t: Transition) -> str:
    parts = [f"{t.source} -> {t.target}", f"<{t.kind}>"]
    if t.guard != TRUE:
        parts.append(f"[{to_st(t.guard)}]")
    if t.assignments:
        parts.append("{ " + " ".join(f"{to_st(a.target)} := {to_st(a.value)};" for a in t.assignments) + " }")
    if t.call is not None:
        c = t.call
        args = [f"{p} := {to_st(e)}" for p, e in c.inputs] + [f"{p} => {to_st(e)}" for p, e in c.outputs]
        parts.append(f"call {c.site} {c.instance or c.callee}({', '.join(args)})")
    return " ".join(parts)


def dump_automaton(a: Automaton) -> list[str]:
    lines = [f"automaton {a.name} initial {a.initial}" + (f" exit {a.exit}" if a.exit else "")]
    for p in a.params:
        lines.append(f"  param {p.kind} {p.name} : {p.type}")
    for loc in sorted(a.locations, key=lambda l: _natural(l.id)):
        extra = f" assert {loc.assertion[0]}: {to_st(loc.assertion[1])}" if loc.assertion else ""
        lines.append(f"  loc {loc.id} ({loc.role}){extra}")
    order = {loc.id: i for i, loc in enumerate(sorted(a.locations, key=lambda l: _natural(l.id)))}
    for t in sorted(a.transitions, key=lambda t: (order[t.source], order[t.target])):
        lines.append("  trans " + _fmt_transition(t))
    return lines


def dump(net: CfaNetwork) -> str:
    """Deterministic plain-text rendering used for golden-file comparisons."""
    lines = [f"network {net.entry_name}"]
    for v in net.variables:
        s = f"var {v.kind} {v.name} : {v.type}"
        if v.init is not None:
            s += f" := {_fmt_value(v.init)}"
        if v.domain is not None:
            s += " in {" + ", ".join(_fmt_value(x) for x in v.domain) + "}"
        lines.append(s)
    lines += dump_automaton(net.main)
    for c in net.callees:
        lines += dump_automaton(c)
    return "\n".join(lines) + "\n"


def is_literal(e: Expr) -> bool:
    return isinstance(e, Const)

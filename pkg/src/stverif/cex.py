"""Counterexample replay, validation, simulator export and fault localization."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import networkx as nx

from .cfa import CfaNetwork
from .engine import concrete_net
from .expr import Span, to_st
from .interp import Interpreter, Step, reads
from .requirements import VerificationProblem, checks
from .stparser.lexer import int_value
from .trace import CycleRecord, Trace, Violation, format_value


class CexError(Exception):
    pass


def replay(net: CfaNetwork, inputs, check_list=(), choices=None, log: list | None = None) -> Trace:
    """Deterministically execute `net` cycle by cycle with the given input valuations.

    Execution stops at the first property violation or runtime fault, which is
    recorded on the trace. `choices` supplies values for nondeterminism other
    than inputs (abstracted callees), one sequence per cycle.
    """
    inputs = list(inputs)
    if not inputs:
        raise CexError("replay needs at least one cycle of inputs")
    interp = Interpreter(net, check_list)
    names = interp.input_names
    val = interp.initial()
    records = []
    violation = None
    for k, inp in enumerate(inputs, start=1):
        missing = [n for n in names if n not in inp]
        if missing:
            raise CexError(f"input valuation for cycle {k} is incomplete: missing {', '.join(missing)}")
        extra = tuple(choices[k - 1]) if choices is not None and k - 1 < len(choices) else ()
        try:
            out = interp.run_cycle(val, inp, extra, k, log)
        except StopIteration:
            raise CexError(f"cycle {k} needs more nondeterministic choices than supplied") from None
        records.append(CycleRecord(tuple((n, inp[n]) for n in names), interp.state(out.val), extra))
        if out.kind == "violation":
            violation = Violation(k, out.location, to_st(out.expr), False)
            break
        if out.kind == "fault":
            f = out.fault
            violation = Violation(k, out.location, f"runtime fault: {f.kind}", None, f.kind, str(f))
            break
        if out.kind == "deadlock":
            break
    return Trace(tuple(records), violation)


def replay_problem(p: VerificationProblem, inputs, choices=None, log=None) -> Trace:
    net = concrete_net(p)
    return replay(net, inputs, checks(net, p.property), choices, log)


# -- validation ------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationResult:
    feasible: bool
    cycle: int | None = None  # first divergent cycle when spurious
    variable: str | None = None
    expected: object = None
    actual: object = None
    replayed: Trace | None = None

    @property
    def kind(self) -> str:
        return "Feasible" if self.feasible else "Spurious"

    def describe(self) -> str:
        if self.feasible:
            return "Feasible"
        what = f" variable {self.variable} (trace {format_value(self.expected)}, concrete {format_value(self.actual)})" \
            if self.variable is not None else ""
        return f"Spurious: diverges at cycle {self.cycle}{what}"


def concrete_inputs(net: CfaNetwork, t: Trace) -> list[dict]:
    """Trace inputs completed with defaults for inputs a reduction had removed."""
    interp = Interpreter(net, ())
    defaults = {}
    for v in net.inputs():
        for n in v.element_names():
            defaults[n] = v.elem_type.default()
    return [{n: c.input_dict().get(n, defaults[n]) for n in interp.input_names} for c in t.cycles]


def validate(p: VerificationProblem, t: Trace) -> ValidationResult:
    """Replay `t`'s inputs on the fully concrete program and compare."""
    net = p.reference
    r = replay(net, concrete_inputs(net, t), checks(net, p.property))
    v, rv = t.violation, r.violation
    reproduced = (v is not None and rv is not None and rv.cycle == v.cycle and rv.is_fault == v.is_fault)
    if reproduced:
        return ValidationResult(True, replayed=r)
    for k, (mine, theirs) in enumerate(zip(t.cycles, r.cycles), start=1):
        actual = theirs.state_dict()
        for name, x in mine.state:
            if name in actual and actual[name] != x:
                return ValidationResult(False, k, name, x, actual[name], r)
        if theirs is r.cycles[-1] and rv is not None and (v is None or rv.cycle != v.cycle):
            return ValidationResult(False, k, None, None, None, r)
    cycle = v.cycle if v is not None else len(t.cycles)
    return ValidationResult(False, min(cycle, len(r.cycles) + 1), None, None, None, r)


# -- simulator input files --------------------------------------------------------


def emit_simulator_inputs(t: Trace) -> str:
    """Semicolon-separated inputs: a header row, then one row per cycle."""
    if not t.cycles:
        raise CexError("cannot export an empty trace")
    names = t.input_names()
    lines = [";".join(["cycle"] + names)]
    for k, c in enumerate(t.cycles, start=1):
        d = c.input_dict()
        lines.append(";".join([str(k)] + [format_value(d[n]) for n in names]))
    return "\n".join(lines) + "\n"


def _literal(text: str):
    s = text.strip()
    if s.upper() == "TRUE":
        return True
    if s.upper() == "FALSE":
        return False
    neg = s.startswith("-")
    try:
        value = int_value(s[1:] if neg else s)
    except ValueError:
        raise CexError(f"malformed literal '{text}' in simulator file") from None
    return -value if neg else value


def parse_simulator_inputs(text: str) -> list[dict]:
    rows = [ln for ln in text.splitlines() if ln.strip()]
    if not rows:
        raise CexError("simulator file is empty")
    header = rows[0].split(";")
    if header[0] != "cycle":
        raise CexError("simulator file must start with a 'cycle' column")
    names = header[1:]
    out = []
    for k, row in enumerate(rows[1:], start=1):
        cells = row.split(";")
        if len(cells) != len(header):
            raise CexError(f"row {k} has {len(cells)} fields, expected {len(header)}")
        if int(cells[0]) != k:
            raise CexError(f"row {k} is labelled cycle {cells[0]}")
        out.append({n: _literal(c) for n, c in zip(names, cells[1:])})
    return out


# -- localization -------------------------------------------------------------------


@dataclass(frozen=True)
class LocalizationEntry:
    span: Span
    variable: str
    score: float
    statement: str
    distance: int


@dataclass(frozen=True)
class LocalizationReport:
    entries: tuple

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def control_dependences(net: CfaNetwork) -> dict[str, set[str]]:
    """Map each location to the branch locations it is control dependent on, within one cycle."""
    g = nx.DiGraph()
    g.add_nodes_from(loc.id for loc in net.main.locations)
    for t in net.main.transitions:
        if t.kind not in ("cycle", "init"):
            g.add_edge(t.source, t.target)
    eoc = net.end_of_cycle
    reaching = nx.ancestors(g, eoc) | {eoc}
    sub = g.subgraph(reaching).reverse(copy=True)
    ipdom = nx.immediate_dominators(sub, eoc)
    deps: dict[str, set[str]] = {n: set() for n in g.nodes}
    for a in reaching:
        succs = [b for b in g.successors(a) if b in reaching]
        if len(succs) < 2:
            continue
        stop = ipdom.get(a)
        for b in succs:
            node = b
            while node is not None and node != stop:
                deps[node].add(a)
                nxt = ipdom.get(node)
                node = None if nxt == node else nxt
    return deps


def _statement_key(step: Step):
    t = step.transition
    return (t.span.path, t.span.start, t.span.end, step.role, step.assignment if step.role == "assign" else -1)


def localize(p: VerificationProblem, t: Trace) -> LocalizationReport:
    """Dynamic backward slice from the violated property; score = 1 / (1 + dependence distance)."""
    if t.violation is None:
        raise CexError("trace has no violation to localize")
    result = validate(p, t)
    if not result.feasible:
        raise CexError(f"trace is not feasible: {result.describe()}")
    net = p.reference
    log: list[Step] = []
    check_list = checks(net, p.property)
    r = replay(net, concrete_inputs(net, t), check_list, log=log)
    viol = r.violation
    deps = control_dependences(net)

    interp = Interpreter(net, check_list)
    val = interp.initial()
    for k, c in enumerate(concrete_inputs(net, t)[: viol.cycle], start=1):
        interp.run_cycle(val, c, (), k)
    final_uses: set[str] = set()
    if not viol.is_fault:
        expr = next(e for lid, e in check_list if lid == viol.location)
        final_uses = reads(expr, val)

    def last_def(name: str, before: int):
        for s in reversed(log[:before]):
            if name in s.defs:
                return s
        return None

    def control_parent(s_index: int, location: str, cycle: int):
        owners = deps.get(location, set())
        if not owners:
            return None
        for s in reversed(log[:s_index]):
            if s.cycle != cycle:
                return None
            if s.role == "guard" and s.transition.source in owners:
                return s
        return None

    dist: dict[int, int] = {}
    queue: deque = deque()

    def reach(step, d):
        if step is None or step.index in dist:
            return
        dist[step.index] = d
        queue.append(step)

    end = len(log)
    for u in sorted(final_uses):
        reach(last_def(u, end), 1)
    reach(control_parent(end, viol.location, viol.cycle), 1)
    while queue:
        s = queue.popleft()
        d = dist[s.index]
        for u in s.uses:
            reach(last_def(u, s.index), d + 1)
        reach(control_parent(s.index, s.transition.source, s.cycle), d + 1)

    best: dict = {}
    for idx, d in dist.items():
        s = log[idx]
        tr = s.transition
        if tr.span is None or tr.kind in ("havoc", "init", "cycle", "nondet"):
            continue
        key = _statement_key(s)
        if key in best and best[key][0] <= d:
            continue
        if s.role == "guard":
            text, var = to_st(tr.guard), ",".join(sorted({u.split("[")[0] for u in s.uses}))
        else:
            a = tr.assignments[s.assignment]
            text, var = f"{to_st(a.target)} := {to_st(a.value)}", s.defs[0]
        best[key] = (d, tr.span, var, text)
    entries = [LocalizationEntry(span, var, 1.0 / (1 + d), text, d) for d, span, var, text in best.values()]
    entries.sort(key=lambda e: (-e.score, e.span.start, e.statement))
    return LocalizationReport(tuple(entries))

"""Structured C emission for bounded model checkers.

The main automaton is turned back into if/else and while statements using
post-dominators for joins and natural loops for repetition. Bodies the
structurer cannot express fall back to a dispatch loop over a location
counter, which is still free of jumps.
"""
from __future__ import annotations

import networkx as nx

from ..cfa import CfaNetwork
from ..engine import concrete_net
from ..expr import BOOL, INT, Const, Expr, Index, Nondet, Unary, Var
from ..requirements import VerificationProblem, checks
from .model import EmittedModel, NameMap

_CTYPE = {"BOOL": "plc_bool", "INT": "plc_int", "DINT": "plc_dint"}
_NONDET = {"BOOL": "nondet_bool", "INT": "nondet_short", "DINT": "nondet_int"}
_CMP = {"=": "==", "<>": "!=", "<": "<", "<=": "<=", ">": ">", ">=": ">="}

PRELUDE = """\
/* generated verification model */
typedef _Bool plc_bool;
typedef short plc_int;
typedef int plc_dint;

extern plc_bool nondet_bool(void);
extern plc_int nondet_short(void);
extern plc_dint nondet_int(void);
void __CPROVER_assume(_Bool cond);
void __CPROVER_assert(_Bool cond, const char *msg);

static plc_int plc_div16(plc_int a, plc_int b)
{
    __CPROVER_assert(b != 0, "fault: division by zero");
    if (b == 0) return 0;
    return (plc_int)((int)a / (int)b);
}

static plc_int plc_mod16(plc_int a, plc_int b)
{
    __CPROVER_assert(b != 0, "fault: division by zero");
    if (b == 0) return 0;
    return (plc_int)((int)a % (int)b);
}

static plc_dint plc_div32(plc_dint a, plc_dint b)
{
    __CPROVER_assert(b != 0, "fault: division by zero");
    if (b == 0) return 0;
    if (b == -1) return (plc_dint)(0u - (unsigned)a);
    return a / b;
}

static plc_dint plc_mod32(plc_dint a, plc_dint b)
{
    __CPROVER_assert(b != 0, "fault: division by zero");
    if (b == 0 || b == -1) return 0;
    return a % b;
}

static int plc_idx(int i, int lo, int hi)
{
    __CPROVER_assert(i >= lo && i <= hi, "fault: index out of range");
    if (i < lo || i > hi) return 0;
    return i - lo;
}
"""


def c_const(value, t) -> str:
    if t == BOOL:
        return "1" if value else "0"
    if value == t.lo:
        return f"({value + 1}-1)"
    return str(value)


class _Unstructured(Exception):
    pass


class _Writer:
    def __init__(self, net: CfaNetwork, names: NameMap, check_at: dict):
        self.net = net
        self.names = names
        self.check_at = check_at

    # -- expressions ----------------------------------------------------------------
    def expr(self, e: Expr) -> str:
        if isinstance(e, Const):
            return c_const(e.value, e.type)
        if isinstance(e, Var):
            return self.names[e.name]
        if isinstance(e, Index):
            if isinstance(e.index, Const) and e.lo <= e.index.value <= e.hi:
                return f"{self.names[e.array]}[{e.index.value - e.lo}]"
            return f"{self.names[e.array]}[plc_idx({self.expr(e.index)}, {e.lo}, {e.hi})]"
        if isinstance(e, Unary):
            a = self.expr(e.arg)
            if e.op == "NOT":
                return f"!{a}"
            if e.op == "NEG":
                return f"(plc_int)(-(int){a})" if e.type == INT else f"(plc_dint)(0u - (unsigned){a})"
            return f"({_CTYPE[e.type.name]}){a}"
        if isinstance(e, Nondet):
            return f"{_NONDET[e.type.name]}()"
        left, right = self.expr(e.left), self.expr(e.right)
        op = e.op
        if op == "AND":
            return f"({left} & {right})"
        if op == "OR":
            return f"({left} | {right})"
        if op == "XOR":
            return f"({left} != {right})"
        if op in _CMP:
            return f"({left} {_CMP[op]} {right})"
        small = e.type == INT
        if op in ("/", "MOD"):
            fn = {"/": "div", "MOD": "mod"}[op] + ("16" if small else "32")
            return f"plc_{fn}({left}, {right})"
        if small:
            return f"(plc_int)((int){left} {op} (int){right})"
        return f"(plc_dint)((unsigned){left} {op} (unsigned){right})"

    def assign(self, a) -> list[str]:
        target = self.expr(a.target)
        out = [f"{target} = {self.expr(a.value)};"]
        if isinstance(a.value, Nondet) and isinstance(a.target, Var):
            dom = self.net.var(a.target.name).domain
            if dom is not None:
                out.append(f"__CPROVER_assume({_domain_cond(target, dom, a.value.type)});")
        return out

    def transition_body(self, t) -> list[str]:
        out = []
        for a in t.assignments:
            out += self.assign(a)
        return out


def _domain_cond(ident: str, dom, t) -> str:
    vals = sorted(dom)
    if t == BOOL:
        return "1" if len(set(vals)) == 2 else f"{ident} == {c_const(vals[0], t)}"
    if vals == list(range(vals[0], vals[-1] + 1)):
        return f"{ident} >= {c_const(vals[0], t)} && {ident} <= {c_const(vals[-1], t)}"
    return " || ".join(f"{ident} == {c_const(x, t)}" for x in vals)


def _complementary(guards) -> bool:
    if len(guards) != 2:
        return False
    a, b = guards
    return (isinstance(b, Unary) and b.op == "NOT" and b.arg == a) or \
        (isinstance(a, Unary) and a.op == "NOT" and a.arg == b)


class _Structurer:
    def __init__(self, w: _Writer, net: CfaNetwork):
        self.w = w
        self.out = net.main.outgoing()
        self.eoc = net.end_of_cycle
        g = nx.DiGraph()
        g.add_nodes_from(loc.id for loc in net.main.locations)
        for t in net.main.transitions:
            if t.kind not in ("cycle", "init", "havoc"):
                g.add_edge(t.source, t.target)
        self.g = g
        self.entry = next(t.target for t in net.havoc_transitions())
        if self.entry == self.eoc:
            return
        reach = nx.descendants(g, self.entry) | {self.entry}
        if self.eoc not in reach:
            raise _Unstructured()
        back = g.subgraph(nx.ancestors(g, self.eoc) | {self.eoc}).reverse(copy=True)
        if not reach <= set(back.nodes):
            raise _Unstructured()  # some location cannot finish the cycle
        self.ipdom = nx.immediate_dominators(back, self.eoc)
        dom = nx.immediate_dominators(g.subgraph(reach), self.entry)
        self.loops: dict[str, set] = {}
        for m, h in g.subgraph(reach).edges:
            if _dominates(dom, h, m):
                body = self.loops.setdefault(h, {h})
                stack = [m]
                while stack:
                    n = stack.pop()
                    if n not in body:
                        body.add(n)
                        stack.extend(g.predecessors(n))
        self.exits = {}
        for h, body in self.loops.items():
            x = h
            while x in body:
                nxt = self.ipdom.get(x)
                if nxt is None or nxt == x:
                    raise _Unstructured()
                x = nxt
            self.exits[h] = x

    def body(self) -> list[str]:
        if self.entry == self.eoc:
            return []
        return self.region(self.entry, self.eoc, [], None)

    def region(self, loc: str, stop: str, loops: list, fresh: str | None) -> list[str]:
        lines: list[str] = []
        while loc != stop:
            if loc != fresh:
                for h in reversed(loops):
                    if loc == h:
                        if h != loops[-1]:
                            raise _Unstructured()
                        lines.append("continue;")
                        return lines
                    if loc == self.exits[h]:
                        if h != loops[-1]:
                            raise _Unstructured()
                        lines.append("break;")
                        return lines
                if loc == self.eoc:
                    lines.append("return;")
                    return lines
                if loc in self.loops and loc not in loops:
                    lines += self.loop(loc, loops)
                    exit_ = self.exits[loc]
                    if exit_ is None:
                        lines.append("return;")
                        return lines
                    loc = exit_
                    continue
            fresh = None
            lines += self.checks(loc)
            ts = self.out.get(loc, [])
            if not ts:
                lines.append("__CPROVER_assume(0);")
                return lines
            if len(ts) == 1:
                t = ts[0]
                if not (isinstance(t.guard, Const) and t.guard.value is True):
                    lines.append(f"__CPROVER_assume({self.w.expr(t.guard)});")
                lines += self.w.transition_body(t)
                loc = t.target
                continue
            join = self.ipdom.get(loc)
            if join is None or join == loc:
                raise _Unstructured()
            complete = _complementary([t.guard for t in ts])
            for k, t in enumerate(ts):
                kw = "if" if k == 0 else "else if"
                head = "else" if complete and k == len(ts) - 1 else f"{kw} ({self.w.expr(t.guard)})"
                inner = self.w.transition_body(t) + self.region(t.target, join, loops, None)
                if not inner and head == "else":
                    continue
                lines.append(head + " {")
                lines += _indent(inner)
                lines.append("}")
            if not complete:
                lines += ["else {", "    __CPROVER_assume(0);", "}"]
            loc = join
        return lines

    def loop(self, h: str, loops: list) -> list[str]:
        ts = self.out.get(h, [])
        exit_ = self.exits[h]
        body = self.loops[h]
        inner_loops = loops + [h]
        if (len(ts) == 2 and not self.checks(h) and all(not t.assignments for t in ts)
                and _complementary([t.guard for t in ts])):
            stay = [t for t in ts if t.target in body]
            leave = [t for t in ts if t.target == exit_]
            if len(stay) == 1 and len(leave) == 1:
                cond = self.w.expr(stay[0].guard)
                inner = self.region(stay[0].target, h, inner_loops, None)
                return [f"while ({cond}) {{"] + _indent(inner) + ["}"]
        inner = self.region(h, None, inner_loops, h)
        return ["while (1) {"] + _indent(inner) + ["}"]

    def checks(self, loc: str) -> list[str]:
        return [f'__CPROVER_assert({self.w.expr(e)}, "{label}");' for e, label in self.w.check_at.get(loc, ())]


def _dominates(idom: dict, a: str, b: str) -> bool:
    n = b
    while True:
        if n == a:
            return True
        nxt = idom.get(n)
        if nxt is None or nxt == n:
            return False
        n = nxt


def _indent(lines: list[str]) -> list[str]:
    return ["    " + ln for ln in lines]


def _dispatch(w: _Writer, net: CfaNetwork, locs: NameMap) -> list[str]:
    """Location-counter loop for control flow the structurer rejects."""
    entry = next(t.target for t in net.havoc_transitions())
    eoc = net.end_of_cycle
    out = net.main.outgoing()
    lines = [f"int pc = {locs.add(entry)};", "while (pc != %d) {" % locs.add(eoc)]
    body = []
    first = True
    for loc in net.main.locations:
        if loc.id in (eoc, net.cycle_start, net.main.initial):
            continue
        code = [f'__CPROVER_assert({w.expr(e)}, "{label}");' for e, label in w.check_at.get(loc.id, ())]
        for k, t in enumerate(out.get(loc.id, [])):
            kw = "if" if k == 0 else "else if"
            code.append(f"{kw} ({w.expr(t.guard)}) {{")
            code += _indent(w.transition_body(t) + [f"pc = {locs.add(t.target)};"])
            code.append("}")
        code.append("else {" if out.get(loc.id) else "{")
        code.append("    __CPROVER_assume(0);")
        code.append("}")
        body.append(("if" if first else "else if") + f" (pc == {locs.add(loc.id)}) {{")
        body += _indent(code)
        body.append("}")
        first = False
    return lines + _indent(body) + ["}"]


class _LocIds(NameMap):
    def __init__(self):
        super().__init__()
        self.next_id = 0

    def add(self, name: str):
        if name not in self.forward:
            self.forward[name] = self.next_id
            self.backward[self.next_id] = name
            self.next_id += 1
        return self.forward[name]


def emit_c(p: VerificationProblem) -> EmittedModel:
    """Translate the (inlined) problem into one C translation unit."""
    net = concrete_net(p)
    check_list = checks(net, p.property)
    label = "".join(ch if ch.isalnum() else "_" for ch in p.property.label)
    check_at: dict[str, list] = {}
    for lid, e in check_list:
        check_at.setdefault(lid, []).append((e, f"property {label}"))
    names = NameMap("v_", "c")
    for v in net.variables:
        names.add(v.name)
    eoc_checks = check_at.pop(net.end_of_cycle, [])
    w = _Writer(net, names, check_at)

    decls = []
    for v in net.variables:
        ty = _CTYPE[v.elem_type.name]
        ident = names[v.name]
        qual = "const " if v.kind == "constant" else ""
        if v.is_array:
            init = ", ".join(c_const(x, v.elem_type) for x in v.initial_value())
            decls.append(f"{qual}{ty} {ident}[{len(v.element_names())}] = {{{init}}};")
        else:
            decls.append(f"{qual}{ty} {ident} = {c_const(v.initial_value(), v.type)};")
    decls.append("unsigned plc_cycle_count = 0;")

    locs = _LocIds()
    try:
        body = _Structurer(w, net).body()
    except _Unstructured:
        body = _dispatch(w, net, locs)

    havoc = []
    for t in net.havoc_transitions():
        havoc += w.transition_body(t)
    main = ["plc_cycle_count = plc_cycle_count + 1;"] + havoc + ["plc_cycle();"]
    main += [f'__CPROVER_assert({w.expr(e)}, "{msg}");' for e, msg in eoc_checks]

    parts = [PRELUDE, *decls, "", "static void plc_cycle(void)", "{", *_indent(body), "}", "",
             "int main(void)", "{", "    while (1) {", *_indent(_indent(main)), "    }", "    return 0;", "}"]
    return EmittedModel("c", "\n".join(parts) + "\n", names, f"property {label}", net, tuple(check_list), None, ".c")

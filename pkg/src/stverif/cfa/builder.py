"""Lowering of a TypedAst entry point to a CFA network with scan-cycle semantics."""
from __future__ import annotations

from ..expr import BOOL, TRUE, Binary, Const, Expr, Index, Nondet, Unary, Var
from ..stparser import ast as A
from .model import (
    ASSERTION, CYCLE_START, END_OF_CYCLE, ENTRY, EXIT, INITIAL, PLAIN, Assignment, Automaton, CallSite,
    CfaNetwork, Location, Transition, Variable,
)

KIND_OF_SECTION = {"input": "input", "output": "output", "local": "local", "temp": "temp", "constant": "constant"}


class CfaError(Exception):
    pass


def NOT(e: Expr) -> Expr:
    if isinstance(e, Unary) and e.op == "NOT":
        return e.arg
    return Unary("NOT", e, BOOL)


def AND(a: Expr, b: Expr) -> Expr:
    return Binary("AND", a, b, BOOL)


def OR(a: Expr, b: Expr) -> Expr:
    return Binary("OR", a, b, BOOL)


def element_targets(v: Variable):
    """Scalar lvalues covering `v` (one per element for arrays)."""
    if not v.is_array:
        return [Var(v.name, v.type)]
    t = v.type
    return [Index(v.name, Const(i, t.elem), t.elem, t.lo, t.hi) for i in range(t.lo, t.hi + 1)]


def reset_assignments(v: Variable) -> list[Assignment]:
    init = v.initial_value()
    targets = element_targets(v)
    values = init if v.is_array else (init,)
    return [Assignment(tg, Const(val, v.elem_type)) for tg, val in zip(targets, values)]


def havoc_assignments(v: Variable) -> list[Assignment]:
    return [Assignment(tg, Nondet(v.elem_type)) for tg in element_targets(v)]


class _Lowerer:
    def __init__(self, unit: A.ProgramUnit, directives):
        self.unit = unit
        self.locs: list[Location] = []
        self.trans: list[Transition] = []
        self.n = 0
        self.sites = 0
        self.anchors: dict[tuple, list] = {}
        for d in directives:
            if d.anchor[0] == unit.name:
                self.anchors.setdefault(tuple(d.anchor[1]), []).append(d)

    def loc(self, role: str = PLAIN, span=None, assertion=None, lid: str | None = None) -> str:
        if lid is None:
            self.n += 1
            lid = f"l{self.n}"
        self.locs.append(Location(lid, role, span, assertion))
        return lid

    def edge(self, src, tgt, guard: Expr = TRUE, assigns=(), kind="skip", span=None, call=None):
        self.trans.append(Transition(src, tgt, guard, tuple(assigns), kind, span, call))

    def block(self, block: A.Block, path: tuple, entry: str, exit: str, ctx: dict) -> None:
        cur = entry
        n = len(block.stmts)
        for k in range(n + 1):
            for d in self.anchors.get(path + (k,), ()):
                a = self.loc(ASSERTION, d.span, (d.label, d.expr))
                self.edge(cur, a, span=d.span)
                cur = a
            if k == n:
                break
            stmt = block.stmts[k]
            last = k == n - 1 and not self.anchors.get(path + (n,))
            nxt = exit if last else self.loc()
            self.stmt(stmt, path + (k,), cur, nxt, ctx)
            cur = nxt
        if cur != exit:
            self.edge(cur, exit)

    def stmt(self, s, path: tuple, entry: str, exit: str, ctx: dict) -> None:
        if isinstance(s, A.Assign):
            self.edge(entry, exit, assigns=[Assignment(s.target, s.value)], kind="assign", span=s.span)
        elif isinstance(s, A.If):
            loc = entry
            nb = len(s.branches)
            for j, (cond, body) in enumerate(s.branches):
                then_entry = self.loc() if len(body) else exit
                self.edge(loc, then_entry, cond, kind="guard", span=_cond_span(cond, s))
                if len(body):
                    self.block(body, path + (j,), then_entry, exit, ctx)
                more = j < nb - 1 or s.else_body is not None
                nxt = self.loc() if more else exit
                self.edge(loc, nxt, NOT(cond), kind="guard", span=_cond_span(cond, s))
                loc = nxt
            if s.else_body is not None:
                self.block(s.else_body, path + (nb,), loc, exit, ctx)
        elif isinstance(s, A.Case):
            prior = None
            for j, arm in enumerate(s.arms):
                match = None
                for lo, hi in arm.labels:
                    if lo == hi:
                        m = Binary("=", s.selector, Const(lo, s.selector.type), BOOL)
                    else:
                        m = AND(Binary(">=", s.selector, Const(lo, s.selector.type), BOOL),
                                Binary("<=", s.selector, Const(hi, s.selector.type), BOOL))
                    match = m if match is None else OR(match, m)
                guard = match if prior is None else AND(match, NOT(prior))
                prior = match if prior is None else OR(prior, match)
                arm_entry = self.loc() if len(arm.body) else exit
                self.edge(entry, arm_entry, guard, kind="guard", span=s.span)
                if len(arm.body):
                    self.block(arm.body, path + (j,), arm_entry, exit, ctx)
            default = NOT(prior)
            if s.else_body is not None and len(s.else_body):
                else_entry = self.loc()
                self.edge(entry, else_entry, default, kind="guard", span=s.span)
                self.block(s.else_body, path + (len(s.arms),), else_entry, exit, ctx)
            else:
                self.edge(entry, exit, default, kind="guard", span=s.span)
        elif isinstance(s, A.For):
            v = s.var
            header = self.loc()
            self.edge(entry, header, assigns=[Assignment(v, s.start)], kind="assign", span=s.span)
            op = "<=" if s.step > 0 else ">="
            cond = Binary(op, v, s.stop, BOOL)
            incr = self.loc()
            body_entry = self.loc() if len(s.body) else incr
            self.edge(header, body_entry, cond, kind="guard", span=s.span)
            self.edge(header, exit, NOT(cond), kind="guard", span=s.span)
            inner = dict(ctx, loop_exit=exit)
            if len(s.body):
                self.block(s.body, path + (0,), body_entry, incr, inner)
            step = Binary("+", v, Const(s.step, v.type), v.type)
            self.edge(incr, header, assigns=[Assignment(v, step)], kind="assign", span=s.span)
        elif isinstance(s, A.While):
            header = self.loc()
            self.edge(entry, header)
            body_entry = self.loc() if len(s.body) else header
            self.edge(header, body_entry, s.cond, kind="guard", span=_cond_span(s.cond, s))
            self.edge(header, exit, NOT(s.cond), kind="guard", span=_cond_span(s.cond, s))
            if len(s.body):
                self.block(s.body, path + (0,), body_entry, header, dict(ctx, loop_exit=exit))
        elif isinstance(s, A.Repeat):
            head = self.loc()
            self.edge(entry, head)
            until = self.loc()
            self.block(s.body, path + (0,), head, until, dict(ctx, loop_exit=exit))
            self.edge(until, exit, s.cond, kind="guard", span=_cond_span(s.cond, s))
            self.edge(until, head, NOT(s.cond), kind="guard", span=_cond_span(s.cond, s))
        elif isinstance(s, A.Call):
            self.sites += 1
            site = CallSite(f"c{self.sites}", s.callee, s.instance, s.inputs, s.outputs)
            self.edge(entry, exit, kind="call", span=s.span, call=site)
        elif isinstance(s, A.Return):
            self.edge(entry, ctx["return"], kind="return", span=s.span)
        elif isinstance(s, A.Exit):
            self.edge(entry, ctx["loop_exit"], kind="exit", span=s.span)
        elif isinstance(s, A.Empty):
            self.edge(entry, exit, span=s.span)
        else:
            raise CfaError(f"unsupported construct {type(s).__name__}")


def _cond_span(cond, stmt):
    return getattr(cond, "span", None) or stmt.span


def _call_graph(ast: A.TypedAst, entry: str) -> list[str]:
    """Units reachable from `entry` (excluding it), in declaration order; rejects recursion."""

    def callees_of(unit: A.ProgramUnit) -> list[str]:
        out = []
        for d in unit.decls:
            if isinstance(d.type, A.FbType):
                out.append(d.type.name)

        def visit(block):
            for s in block.stmts:
                if isinstance(s, A.Call):
                    out.append(s.callee)
                for b in A.child_blocks(s):
                    visit(b)

        visit(unit.body)
        return out

    reached: set[str] = set()
    state: dict[str, int] = {}

    def dfs(name: str, stack: list[str]):
        if state.get(name) == 1:
            cycle = stack[stack.index(name):] + [name]
            raise CfaError("recursion detected: " + " -> ".join(cycle))
        if state.get(name) == 2:
            return
        state[name] = 1
        for c in callees_of(ast.unit(name)):
            reached.add(c)
            dfs(c, stack + [name])
        state[name] = 2

    dfs(entry, [])
    return [u.name for u in ast.units if u.name in reached]


def _instance_variables(ast: A.TypedAst, fb_name: str, prefix: str) -> list[Variable]:
    out = []
    for d in ast.unit(fb_name).decls:
        name = f"{prefix}.{d.name}"
        if isinstance(d.type, A.FbType):
            out += _instance_variables(ast, d.type.name, name)
            continue
        kind = {"temp": "temp", "constant": "constant"}.get(d.section, "local")
        out.append(Variable(name, d.type, kind, d.init, None, d.span))
    return out


def unit_variables(ast: A.TypedAst, unit: A.ProgramUnit) -> list[Variable]:
    out = []
    for d in unit.decls:
        if isinstance(d.type, A.FbType):
            out += _instance_variables(ast, d.type.name, d.name)
        else:
            out.append(Variable(d.name, d.type, KIND_OF_SECTION[d.section], d.init, None, d.span))
    return out


def build_cfa(ast: A.TypedAst, entry: str, assertions=()) -> CfaNetwork:
    """Translate `entry` and everything it calls into a CFA network.

    The main automaton is init -> cycle-start -(havoc)-> body -> end-of-cycle
    -> cycle-start. Callees keep their own automata; call sites are marked
    transitions until `inline_callees` expands them.
    """
    if not ast.has_unit(entry):
        raise CfaError(f"entry point '{entry}' not found")
    unit = ast.unit(entry)
    if unit.kind not in ("PROGRAM", "FUNCTION_BLOCK"):
        raise CfaError(f"entry point '{entry}' must be a PROGRAM or FUNCTION_BLOCK, not a {unit.kind}")
    callee_names = _call_graph(ast, entry)
    scope = {entry, *callee_names}
    relevant = [d for d in assertions if d.anchor[0] in scope]

    variables = unit_variables(ast, unit)
    low = _Lowerer(unit, relevant)
    init = low.loc(INITIAL, lid="init")
    cs = low.loc(CYCLE_START, lid="cs")
    eoc = low.loc(END_OF_CYCLE, lid="eoc")
    low.edge(init, cs, kind="init")
    havoc = []
    for v in variables:
        if v.kind == "input":
            havoc += havoc_assignments(v)
    for v in variables:
        if v.kind == "temp" and "." not in v.name:
            havoc += reset_assignments(v)
    has_body = len(unit.body) > 0 or any(d.anchor[0] == entry for d in relevant)
    if has_body:
        body_entry = low.loc()
        low.edge(cs, body_entry, assigns=havoc, kind="havoc")
        low.block(unit.body, (), body_entry, eoc, {"return": eoc, "loop_exit": None})
    else:
        low.edge(cs, eoc, assigns=havoc, kind="havoc")
    low.edge(eoc, cs, kind="cycle")
    main = Automaton(entry, tuple(low.locs), tuple(low.trans), init)

    callees = []
    for name in callee_names:
        cu = ast.unit(name)
        cl = _Lowerer(cu, relevant)
        e = cl.loc(ENTRY, lid="entry")
        x = cl.loc(EXIT, lid="exit")
        cl.block(cu.body, (), e, x, {"return": x, "loop_exit": None})
        params = tuple(Variable(d.name, d.type, KIND_OF_SECTION[d.section], d.init, None, d.span)
                       for d in cu.decls if not isinstance(d.type, A.FbType))
        callees.append(Automaton(name, tuple(cl.locs), tuple(cl.trans), e, params, x))
    return CfaNetwork(tuple(variables), main, tuple(callees), entry, tuple(relevant))

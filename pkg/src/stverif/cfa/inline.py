"""Expansion of call sites into renamed callee copies, optionally havocking some callees instead."""
from __future__ import annotations

from dataclasses import replace

from ..expr import DINT, INT, Unary, Var, rename
from .builder import CfaError, havoc_assignments, reset_assignments
from .model import ASSERTION, PLAIN, Assignment, Automaton, CfaNetwork, Location, Transition, Variable


def _identity(name: str) -> str:
    return name


def _prefixer(prefix: str):
    return lambda name: f"{prefix}.{name}"


def callee_prefix(callee: Automaton, instance: str | None, site_path: str) -> str:
    """Qualified name prefix of a callee's variables at one call site."""
    return instance if instance is not None else f"{callee.name}@{site_path}"


class _Inliner:
    def __init__(self, net: CfaNetwork, abstract: frozenset):
        self.net = net
        self.abstract = abstract
        self.variables = list(net.variables)
        self.names = {v.name for v in self.variables}
        self.locs: list[Location] = []
        self.trans: list[Transition] = []

    def add_var(self, v: Variable) -> None:
        if v.name not in self.names:
            self.names.add(v.name)
            self.variables.append(v)

    def expand(self, a: Automaton, lp: str, vmap, sp: str) -> None:
        """Copy automaton `a` with location prefix `lp`, variable renaming `vmap`, site prefix `sp`."""
        for loc in a.locations:
            role = loc.role if a is self.net.main or loc.role == ASSERTION else PLAIN
            assertion = loc.assertion
            if assertion is not None:
                assertion = (assertion[0], rename(assertion[1], vmap))
            self.locs.append(Location(lp + loc.id, role, loc.span, assertion))
        for t in a.transitions:
            src, tgt = lp + t.source, lp + t.target
            if t.call is None:
                self.trans.append(Transition(
                    src, tgt, rename(t.guard, vmap),
                    tuple(Assignment(rename(x.target, vmap), rename(x.value, vmap)) for x in t.assignments),
                    t.kind, t.span))
                continue
            self.call(t, src, tgt, vmap, sp)

    def chain(self, src: str, tgt: str, steps: list, base: str, span) -> None:
        """Emit `steps` (lists of (kind, assignments)) as a path src -> ... -> tgt."""
        if not steps:
            self.trans.append(Transition(src, tgt, kind="skip", span=span))
            return
        cur = src
        for k, (kind, assigns) in enumerate(steps):
            if k == len(steps) - 1:
                nxt = tgt
            else:
                nxt = f"{base}{k + 1}"
                self.locs.append(Location(nxt, PLAIN, span))
            self.trans.append(Transition(cur, nxt, assignments=tuple(assigns), kind=kind, span=span))
            cur = nxt

    def call(self, t: Transition, src: str, tgt: str, vmap, sp: str) -> None:
        c = t.call
        try:
            callee = self.net.callee(c.callee)
        except KeyError:
            raise CfaError(f"call site {c.site} references unknown callee '{c.callee}'") from None
        site_path = sp + c.site
        instance = vmap(c.instance) if c.instance is not None else None
        prefix = callee_prefix(callee, instance, site_path)
        cmap = _prefixer(prefix)
        params = {p.name: p for p in callee.params}
        qualified = []
        for p in callee.params:
            kind = p.kind if p.kind == "constant" else ("temp" if instance is None or p.kind == "temp" else "local")
            q = replace(p, name=cmap(p.name), kind=kind)
            qualified.append(q)
            self.add_var(q)
        qual = {p.name: q for p, q in zip(callee.params, qualified)}

        out_steps = [("assign", [Assignment(rename(lv, vmap), _widen(Var(cmap(name), params[name].type), lv))])
                     for name, lv in c.outputs]
        if c.callee in self.abstract:
            outs = [q for p, q in zip(callee.params, qualified) if p.kind == "output"]
            havoc = [x for q in outs for x in havoc_assignments(q)]
            steps = ([("nondet", havoc)] if havoc else []) + out_steps
            self.chain(src, tgt, steps, f"{site_path}/a", t.span)
            return

        pre = []
        if instance is None:
            resets = [x for p in callee.params if p.kind != "constant" for x in reset_assignments(qual[p.name])]
        else:
            resets = [x for p in callee.params if p.kind == "temp" for x in reset_assignments(qual[p.name])]
        if resets:
            pre.append(("init", resets))
        for name, e in c.inputs:
            pre.append(("assign", [Assignment(Var(cmap(name), params[name].type),
                                              _widen(rename(e, vmap), Var(cmap(name), params[name].type)))]))
        lp = site_path + "/"
        entry, exit_ = lp + callee.initial, lp + callee.exit
        self.chain(src, entry, pre, f"{site_path}/p", t.span)
        self.expand(callee, lp, cmap, lp)
        self.chain(exit_, tgt, out_steps, f"{site_path}/q", t.span)


def _widen(value, target):
    """Insert an INT->DINT conversion when binding a narrower value to a wider slot."""
    if value.type == INT and target.type == DINT:
        return Unary("TO_DINT", value, DINT)
    return value


def inline_callees(net: CfaNetwork, abstract=frozenset()) -> CfaNetwork:
    """Replace every call site by a renamed copy of the callee body.

    Callees listed in `abstract` are not copied: their call sites instead
    assign every output a nondeterministic value. The result has no callees.
    """
    abstract = frozenset(abstract)
    unknown = sorted(abstract - {a.name for a in net.callees})
    if unknown:
        raise CfaError(f"unknown callee '{unknown[0]}'")
    if not net.callees:
        return net
    inl = _Inliner(net, abstract)
    inl.expand(net.main, "", _identity, "")
    main = Automaton(net.main.name, tuple(inl.locs), tuple(inl.trans), net.main.initial)
    return CfaNetwork(tuple(inl.variables), main, (), net.entry_name, net.assertions)

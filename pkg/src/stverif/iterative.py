"""Iterative verification: havoc callee outputs, check, validate, concretize on spurious results."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

from .cex import ValidationResult, validate
from .cfa import ASSERTION, CfaNetwork, inline_callees
from .cfa.inline import callee_prefix
from .engine import FAULT, UNKNOWN, VIOLATED, EngineConfig, Verdict, check
from .expr import free_vars, lvalue_name
from .requirements import VerificationProblem


class IterativeError(Exception):
    pass


@dataclass(frozen=True)
class SiteInfo:
    callee: str
    path: str
    prefix: str
    outputs: tuple  # qualified names of the callee's output parameters at this site
    bound: tuple  # caller-side variables receiving outputs


@dataclass
class IterationRecord:
    index: int
    abstracted: tuple
    verdict: str
    validation: str | None
    time_s: float


@dataclass
class AbstractionState:
    abstracted: list
    concretized: list = field(default_factory=list)  # (callee, iteration at which it became concrete)
    iterations: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "abstracted": list(self.abstracted),
            "concretized": [list(c) for c in self.concretized],
            "iterations": [vars(r) | {"abstracted": list(r.abstracted)} for r in self.iterations],
        }


def call_sites(net: CfaNetwork) -> list[SiteInfo]:
    """Every call site reachable from the main automaton with the names inlining will give it."""
    out: list[SiteInfo] = []

    def visit(automaton, vmap, sp):
        for t in automaton.call_sites():
            c = t.call
            callee = net.callee(c.callee)
            path = sp + c.site
            instance = vmap(c.instance) if c.instance is not None else None
            prefix = callee_prefix(callee, instance, path)
            outs = tuple(f"{prefix}.{p.name}" for p in callee.params if p.kind == "output")
            bound = tuple(vmap(lvalue_name(lv)) for _, lv in c.outputs)
            out.append(SiteInfo(c.callee, path, prefix, outs, bound))
            visit(callee, lambda n, prefix=prefix: f"{prefix}.{n}", path + "/")

    visit(net.main, lambda n: n, "")
    return out


def _callees_reaching(net: CfaNetwork, unit: str) -> set[str]:
    """Callees whose body is, or transitively calls, `unit`."""
    calls = {a.name: {t.call.callee for t in a.call_sites()} for a in net.callees}
    out = set()
    for name in calls:
        seen, stack = set(), [name]
        while stack:
            n = stack.pop()
            if n == unit:
                out.add(name)
                break
            if n in seen:
                continue
            seen.add(n)
            stack.extend(calls.get(n, ()))
    return out


def protected_callees(p: VerificationProblem) -> set[str]:
    """Callees that must stay concrete: they contain the property anchor or own state it reads."""
    net = p.net
    out = set()
    if ASSERTION in p.property.at:
        for d in net.assertions:
            if d.label == p.property.label:
                out |= _callees_reaching(net, d.anchor[0])
    read = free_vars(p.property.expr)
    for loc in net.main.locations:
        if loc.assertion is not None and loc.assertion[0] == p.property.label:
            read |= free_vars(loc.assertion[1])
    for site in call_sites(net):
        if any(n.startswith(site.prefix + ".") and n not in site.outputs for n in read):
            out.add(site.callee)
    return out


def abstract_functions(p: VerificationProblem, names) -> VerificationProblem:
    """Inline all callees except `names`, whose call sites instead havoc every output."""
    names = set(names)
    known = {a.name for a in p.net.callees}
    unknown = sorted(names - known)
    if unknown:
        raise IterativeError(f"unknown callee '{unknown[0]}'")
    if p.net.callees == () and not p.net.has_call_sites():
        return p
    return replace(p, net=inline_callees(p.net, frozenset(names)), concrete=p.reference)


def _choose(abstracted: list, result: ValidationResult, sites: list[SiteInfo]) -> str:
    var = result.variable
    if var is not None:
        base = var.split("[")[0]
        hits = {s.callee for s in sites if s.callee in abstracted and
                (base in s.outputs or base in s.bound or base.startswith(s.prefix + "."))}
        for name in abstracted:
            if name in hits:
                return name
    return abstracted[0]


def iterative_verify(p: VerificationProblem, cfg: EngineConfig = EngineConfig(), max_iters: int | None = None,
                     reducer=None) -> tuple[Verdict, AbstractionState]:
    """Verify with all eligible callees abstracted, concretizing one per spurious counterexample.

    `reducer`, when given, maps each abstracted problem to a reduced one before checking.
    """
    order = [a.name for a in p.net.callees]
    keep = protected_callees(p)
    state = AbstractionState([n for n in order if n not in keep], [(n, 0) for n in order if n in keep])
    sites = call_sites(p.net) if p.net.callees else []
    it = 0
    while True:
        it += 1
        if max_iters is not None and it > max_iters:
            return Verdict(UNKNOWN, message=f"iteration limit {max_iters} reached"), state
        t0 = time.perf_counter()
        ap = abstract_functions(p, state.abstracted)
        if reducer is not None:
            ap = reducer(ap)
        v = check(ap, cfg)
        rec = IterationRecord(it, tuple(state.abstracted), v.kind, None, 0.0)
        state.iterations.append(rec)
        if v.kind not in (VIOLATED, FAULT):
            rec.time_s = time.perf_counter() - t0
            return v, state
        result = validate(ap, v.trace)
        rec.validation = result.kind
        rec.time_s = time.perf_counter() - t0
        if result.feasible:
            return Verdict(v.kind, result.replayed, v.stats, v.message), state
        if not state.abstracted:
            return Verdict(UNKNOWN, v.trace, v.stats, "counterexample on the concrete model failed validation"), state
        chosen = _choose(state.abstracted, result, sites)
        state.abstracted.remove(chosen)
        state.concretized.append((chosen, it))

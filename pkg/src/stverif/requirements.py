"""Invariant properties, requirement patterns and verification problems."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .cfa import ASSERTION, END_OF_CYCLE, CfaNetwork, inline_callees
from .expr import BOOL, Binary, Expr, Unary, free_vars, to_st


class RequirementError(Exception):
    pass


@dataclass(frozen=True)
class Property:
    """An invariant that must hold whenever control reaches one of its locations.

    For assertion properties the expression checked at each anchor is the one
    stored on the anchor location (it follows renaming during inlining); `expr`
    is the nominal, source-level form.
    """

    expr: Expr
    at: frozenset
    label: str
    kind: str = "invariant"

    def describe(self) -> str:
        where = "assertion anchor" if ASSERTION in self.at else "end of cycle"
        return f"{self.label}: {to_st(self.expr)} at {where}"


@dataclass(frozen=True)
class JobOptions:
    bound: int = 10
    max_states: int = 10_000_000
    backend: str = "engine"
    fold: bool = True
    unreach: bool = True
    coi: bool = True
    valueset: bool = False


@dataclass(frozen=True)
class VerificationProblem:
    net: CfaNetwork
    property: Property
    job: JobOptions = JobOptions()
    provenance: str = ""
    concrete: CfaNetwork | None = field(default=None, compare=False)

    @property
    def reference(self) -> CfaNetwork:
        """The fully concrete network that counterexamples are validated against."""
        return self.concrete if self.concrete is not None else inline_callees(self.net)

    def with_net(self, net: CfaNetwork) -> "VerificationProblem":
        return replace(self, net=net, concrete=self.reference)


def checks(net: CfaNetwork, prop: Property) -> list[tuple[str, Expr]]:
    """(location id, expression) pairs at which `prop` is evaluated in the main automaton."""
    out = []
    if ASSERTION in prop.at:
        out += [(loc.id, loc.assertion[1]) for loc in net.main.locations
                if loc.assertion is not None and loc.assertion[0] == prop.label]
    if END_OF_CYCLE in prop.at:
        out.append((net.end_of_cycle, prop.expr))
    return out


def assertions_to_problems(net: CfaNetwork, job: JobOptions = JobOptions(),
                           select=None) -> list[VerificationProblem]:
    """One problem per assertion directive lowered into `net` (optionally filtered by label)."""
    if not net.assertions:
        raise RequirementError("no assertions present in the verified program")
    directives = list(net.assertions)
    if select:
        known = {d.label for d in directives}
        missing = [s for s in select if s not in known]
        if missing:
            raise RequirementError(f"unknown assertion '{missing[0]}'")
        directives = [d for d in directives if d.label in select]
    concrete = inline_callees(net)
    out = []
    for d in directives:
        prop = Property(d.expr, frozenset({ASSERTION}), d.label)
        where = f"{d.span.path}:{d.span.line}" if d.span is not None else "?"
        out.append(VerificationProblem(net, prop, job, f"assertion {d.label} ({where})", concrete))
    return out


@dataclass(frozen=True)
class RequirementPattern:
    id: str
    text: str
    placeholders: tuple
    template: object = field(compare=False)

    def instantiate(self, bindings: dict) -> Expr:
        return self.template(*(bindings[p] for p in self.placeholders))


def _implies(a: Expr, b: Expr) -> Expr:
    return Binary("OR", Unary("NOT", a, BOOL), b, BOOL)


PATTERNS = {
    "P1": RequirementPattern("P1", "Whenever {alpha} holds at the end of a PLC cycle, {beta} holds at that same point.",
                             ("alpha", "beta"), _implies),
    "P2": RequirementPattern("P2", "{beta} holds at the end of every PLC cycle.", ("beta",), lambda b: b),
    "P3": RequirementPattern("P3", "{alpha} and {beta} never hold together at the end of a PLC cycle.",
                             ("alpha", "beta"), lambda a, b: Unary("NOT", Binary("AND", a, b, BOOL), BOOL)),
}

_ALIASES = {"α": "alpha", "β": "beta"}


def instantiate_pattern(pattern_id: str, bindings: dict, net: CfaNetwork,
                        job: JobOptions = JobOptions()) -> VerificationProblem:
    pattern = PATTERNS.get(pattern_id)
    if pattern is None:
        raise RequirementError(f"unknown pattern '{pattern_id}' (known: {', '.join(PATTERNS)})")
    bound = {_ALIASES.get(k, k): v for k, v in bindings.items()}
    names = {v.name for v in net.variables}
    for ph in pattern.placeholders:
        if bound.get(ph) is None:
            raise RequirementError(f"pattern {pattern_id}: placeholder '{ph}' is unbound")
        e = bound[ph]
        if e.type != BOOL:
            raise RequirementError(f"pattern {pattern_id}: placeholder '{ph}' must be BOOL, found {e.type}")
        unknown = sorted(free_vars(e) - names)
        if unknown:
            raise RequirementError(f"pattern {pattern_id}: '{unknown[0]}' is not a variable of the network")
    expr = pattern.instantiate(bound)
    text = pattern.text.format(**{p: to_st(bound[p]) for p in pattern.placeholders})
    prop = Property(expr, frozenset({END_OF_CYCLE}), pattern_id)
    return VerificationProblem(net, prop, job, f"pattern {pattern_id}: {text}", inline_callees(net))


def restrict_inputs(p: VerificationProblem, domains: dict) -> VerificationProblem:
    """Explore only the given values for the named scalar inputs."""

    def apply(net: CfaNetwork) -> CfaNetwork:
        out = []
        for v in net.variables:
            if v.name in domains:
                if v.kind != "input" or v.is_array:
                    raise RequirementError(f"'{v.name}' is not a scalar input")
                values = tuple(sorted(set(domains[v.name])))
                bad = [x for x in values if x not in v.type.values()]
                if not values or bad:
                    raise RequirementError(f"domain for '{v.name}' is empty or outside {v.type}")
                v = replace(v, domain=values)
            out.append(v)
        return net.with_variables(out)

    missing = sorted(set(domains) - {v.name for v in p.net.variables})
    if missing:
        raise RequirementError(f"unknown input '{missing[0]}'")
    return replace(p, net=apply(p.net), concrete=apply(p.reference))

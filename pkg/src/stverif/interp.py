"""Reference interpreter over CFA networks built on `eval_expr`.

This is deliberately simple: valuations are dicts, every expression is
interpreted from the tree. Replay and the brute-force oracle use it; the
explicit-state checker has its own compiled execution path.
"""
from __future__ import annotations

from dataclasses import dataclass

from .cfa import CYCLE_START, END_OF_CYCLE, CfaNetwork, Transition, Variable
from .expr import TRUE, Expr, Index, Nondet, RuntimeFault, Var, check_index, eval_expr, walk

# A PLC watchdog would stop a scan that runs this long; we report it as a fault.
STEP_LIMIT = 100_000


@dataclass
class Outcome:
    kind: str  # ok, violation, fault, deadlock
    location: str
    val: dict
    expr: Expr | None = None
    fault: RuntimeFault | None = None


@dataclass(frozen=True)
class Step:
    """One executed guard or assignment, with the flat names it read and wrote."""

    index: int
    cycle: int
    transition: Transition
    role: str  # guard or assign
    assignment: int  # position in transition.assignments, -1 for guards
    defs: tuple
    uses: tuple


def flat_target(target: Expr, val: dict) -> str:
    if isinstance(target, Var):
        return target.name
    i = eval_expr(target.index, val)
    check_index(i, target.lo, target.hi, target.span)
    return f"{target.array}[{i}]"


def reads(e: Expr, val: dict) -> set[str]:
    """Flat names (array elements resolved under `val`) read by a non-faulting expression."""
    out = set()
    for node in walk(e):
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, Index):
            i = eval_expr(node.index, val)
            out.add(f"{node.array}[{i}]")
    return out


def havoc_names(t: Transition) -> list[str]:
    """Flat input names assigned by a havoc transition, in assignment order."""
    return [a.target.name if isinstance(a.target, Var) else f"{a.target.array}[{a.target.index.value}]"
            for a in t.assignments if isinstance(a.value, Nondet)]


def flatten(val: dict, variables) -> tuple:
    out = []
    for v in variables:
        if v.is_array:
            out += [(f"{v.name}[{i}]", x) for i, x in zip(range(v.type.lo, v.type.hi + 1), val[v.name])]
        else:
            out.append((v.name, val[v.name]))
    return tuple(out)


def nondet_domain(target: Expr, net: CfaNetwork):
    if isinstance(target, Var):
        return net.var(target.name).values()
    return net.var(target.array).type.elem.values()


class Interpreter:
    def __init__(self, net: CfaNetwork, checks):
        self.net = net
        self.out = net.main.outgoing()
        self.checks: dict[str, list[Expr]] = {}
        for loc, e in checks:
            self.checks.setdefault(loc, []).append(e)
        roles = {loc.id: loc.role for loc in net.main.locations}
        self.cs = next(k for k, r in roles.items() if r == CYCLE_START)
        self.eoc = next(k for k, r in roles.items() if r == END_OF_CYCLE)
        self.persistent: list[Variable] = [v for v in net.variables if v.persistent]
        self.havoc = next((t for t in self.out[self.cs] if t.kind == "havoc"), None)
        self.input_names = havoc_names(self.havoc) if self.havoc is not None else []

    def initial(self) -> dict:
        return {v.name: list(v.initial_value()) if v.is_array else v.initial_value() for v in self.net.variables}

    @staticmethod
    def copy(val: dict) -> dict:
        return {k: (x[:] if isinstance(x, list) else x) for k, x in val.items()}

    def state(self, val: dict) -> tuple:
        return flatten(val, self.persistent)

    def assign(self, val: dict, target: Expr, value) -> None:
        if isinstance(target, Var):
            val[target.name] = value
        else:
            i = check_index(eval_expr(target.index, val), target.lo, target.hi, target.span)
            val[target.array][i - target.lo] = value

    def _check(self, loc: str, val: dict):
        for e in self.checks.get(loc, ()):
            try:
                ok = eval_expr(e, val)
            except RuntimeFault as f:
                return Outcome("fault", loc, val, e, f)
            if not ok:
                return Outcome("violation", loc, val, e)
        return None

    def _enabled(self, loc: str, val: dict):
        enabled = []
        for t in self.out[loc]:
            if t.guard == TRUE or eval_expr(t.guard, val):
                enabled.append(t)
        return enabled

    # -- deterministic replay -------------------------------------------------

    def run_cycle(self, val: dict, inputs: dict, choices=(), cycle: int = 1, log: list | None = None) -> Outcome:
        """Execute one scan cycle in place on `val` with given inputs and nondeterministic choices."""
        pending = iter(choices)
        loc = self.cs
        steps = 0
        while True:
            if loc != self.cs:
                ev = self._check(loc, val)
                if ev is not None:
                    return ev
                if loc == self.eoc:
                    return Outcome("ok", loc, val)
            steps += 1
            if steps > STEP_LIMIT:
                return Outcome("fault", loc, val, None, RuntimeFault("watchdog", None, "scan cycle does not terminate"))
            try:
                enabled = self._enabled(loc, val)
            except RuntimeFault as f:
                return Outcome("fault", loc, val, None, f)
            if not enabled:
                return Outcome("deadlock", loc, val)
            t = enabled[next(pending) if len(enabled) > 1 else 0]
            if log is not None and t.guard != TRUE:
                log.append(Step(len(log), cycle, t, "guard", -1, (), tuple(sorted(reads(t.guard, val)))))
            try:
                for k, a in enumerate(t.assignments):
                    if isinstance(a.value, Nondet):
                        if t.kind == "havoc":
                            name = a.target.name if isinstance(a.target, Var) else f"{a.target.array}[{a.target.index.value}]"
                            value = inputs[name]
                        else:
                            value = next(pending)
                        uses = ()
                    else:
                        value = eval_expr(a.value, val)
                        uses = reads(a.value, val) if log is not None else ()
                    if log is not None:
                        defs = (flat_target(a.target, val),)
                        if isinstance(a.target, Index):
                            uses = set(uses) | reads(a.target.index, val)
                        log.append(Step(len(log), cycle, t, "assign", k, defs, tuple(sorted(uses))))
                    self.assign(val, a.target, value)
            except RuntimeFault as f:
                return Outcome("fault", loc, val, None, f)
            loc = t.target

    # -- exhaustive branching ---------------------------------------------------

    def branches(self, val: dict):
        """Yield (choices, Outcome) for every way one cycle can execute from `val`.

        `choices` lists the havoc values first, then the remaining choice items,
        matching what `run_cycle` consumes. Enumeration order: transitions in
        declaration order, nondeterministic values ascending, first target
        varying slowest.
        """
        yield from self._walk(self.copy(val), self.cs, (), 0)

    def _walk(self, val, loc, choices, steps):
        while True:
            if loc != self.cs:
                ev = self._check(loc, val)
                if ev is not None:
                    yield choices, ev
                    return
                if loc == self.eoc:
                    yield choices, Outcome("ok", loc, val)
                    return
            steps += 1
            if steps > STEP_LIMIT:
                yield choices, Outcome("fault", loc, val, None,
                                       RuntimeFault("watchdog", None, "scan cycle does not terminate"))
                return
            try:
                enabled = self._enabled(loc, val)
            except RuntimeFault as f:
                yield choices, Outcome("fault", loc, val, None, f)
                return
            if not enabled:
                yield choices, Outcome("deadlock", loc, val)
                return
            if len(enabled) > 1:
                for k, t in enumerate(enabled):
                    yield from self._take(self.copy(val), t, choices + (k,), steps)
                return
            t = enabled[0]
            if any(isinstance(a.value, Nondet) for a in t.assignments):
                yield from self._take(val, t, choices, steps)
                return
            try:
                for a in t.assignments:
                    self.assign(val, a.target, eval_expr(a.value, val))
            except RuntimeFault as f:
                yield choices, Outcome("fault", loc, val, None, f)
                return
            loc = t.target

    def _take(self, val, t, choices, steps):
        """Apply `t`, branching over the values of its nondeterministic assignments."""
        def rec(val, k, choices):
            if k == len(t.assignments):
                yield from self._walk(val, t.target, choices, steps)
                return
            a = t.assignments[k]
            if isinstance(a.value, Nondet):
                for x in nondet_domain(a.target, self.net):
                    v2 = self.copy(val)
                    try:
                        self.assign(v2, a.target, x)
                    except RuntimeFault as f:
                        yield choices + (x,), Outcome("fault", t.source, v2, None, f)
                        continue
                    yield from rec(v2, k + 1, choices + (x,))
            else:
                try:
                    self.assign(val, a.target, eval_expr(a.value, val))
                except RuntimeFault as f:
                    yield choices, Outcome("fault", t.source, val, None, f)
                    return
                yield from rec(val, k + 1, choices)

        yield from rec(val, 0, choices)

"""Explicit-state breadth-first model checker over CFA networks, plus a brute-force oracle."""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

from .cfa import CfaNetwork, inline_callees
from .expr import TRUE, Nondet, PyCodegen, RuntimeFault, Var
from .interp import STEP_LIMIT, Interpreter, havoc_names, nondet_domain
from .requirements import VerificationProblem, checks
from .trace import Trace

SATISFIED = "satisfied"
VIOLATED = "violated"
BOUND_REACHED = "bound-reached"
FAULT = "fault"
UNKNOWN = "unknown"

VERDICT_KINDS = (SATISFIED, VIOLATED, BOUND_REACHED, FAULT, UNKNOWN)


class EngineError(Exception):
    pass


class OracleError(Exception):
    pass


@dataclass(frozen=True)
class EngineConfig:
    K: int = 10
    max_states: int = 10_000_000
    order: str = "bfs"

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("the cycle bound K must be at least 1")
        if self.order != "bfs":
            raise ValueError("only breadth-first exploration is supported")


@dataclass
class Statistics:
    states_explored: int = 0
    peak_frontier: int = 0
    cycles_completed: int = 0
    wall_time_s: float = 0.0
    branching_factor: int = 1
    cycle_executions: int = 0
    cap_reached: bool = False

    def as_dict(self) -> dict:
        return {
            "states_explored": self.states_explored,
            "peak_frontier": self.peak_frontier,
            "cycles_completed": self.cycles_completed,
            "wall_time_s": round(self.wall_time_s, 6),
            "branching_factor": self.branching_factor,
            "cycle_executions": self.cycle_executions,
            "cap_reached": self.cap_reached,
        }


@dataclass
class Verdict:
    kind: str
    trace: Trace | None = None
    stats: Statistics = field(default_factory=Statistics)
    message: str = ""

    @property
    def is_violation(self) -> bool:
        return self.kind in (VIOLATED, FAULT)


def comparable(kind: str) -> str:
    """Collapse bounded and exhaustive no-violation outcomes for cross-checking."""
    return "no-violation" if kind in (SATISFIED, BOUND_REACHED) else kind


def concrete_net(p: VerificationProblem) -> CfaNetwork:
    return inline_callees(p.net) if p.net.has_call_sites() else p.net


def branching_factor(net: CfaNetwork) -> int:
    """Number of input combinations enumerated at each cycle start."""
    n = 1
    for t in net.havoc_transitions():
        for a in t.assignments:
            if isinstance(a.value, Nondet):
                n *= len(nondet_domain(a.target, net))
    return n


class _Found(Exception):
    def __init__(self, choices, kind):
        self.choices = choices
        self.kind = kind


_SLOW = -1


class CompiledNet:
    """Slot-vector encoding of a network with generated Python per location.

    Persistent variables occupy the first `n_state` slots, so a state is the
    tuple of that prefix. Straight-line runs of unguarded transitions are fused
    into one generated function ending at a branch, check or end-of-cycle.
    """

    def __init__(self, net: CfaNetwork, check_list):
        self.net = net
        order = [v for v in net.variables if v.persistent] + [v for v in net.variables if not v.persistent]
        self.base: dict[str, int] = {}
        template = []
        for v in order:
            self.base[v.name] = len(template)
            init = v.initial_value()
            template += list(init) if v.is_array else [init]
        self.n_state = sum(v.type.size if v.is_array else 1 for v in net.variables if v.persistent)
        self.template = template
        self.rest = tuple(template[self.n_state:])
        self.gen = PyCodegen(self.base.__getitem__)

        locs = [loc.id for loc in net.main.locations]
        self.index = {lid: i for i, lid in enumerate(locs)}
        self.ids = locs
        self.out = net.main.outgoing()
        self.cs = self.index[net.cycle_start]
        self.eoc = self.index[net.end_of_cycle]

        grouped: dict[str, list] = {}
        for lid, e in check_list:
            grouped.setdefault(lid, []).append(e)
        self.check = [None] * len(locs)
        for lid, es in grouped.items():
            self.check[self.index[lid]] = self._fn(" and ".join(f"({self.gen.source(e)})" for e in es))
        self.stop = [self.check[i] is not None or i == self.eoc for i in range(len(locs))]

        self.havoc = next((t for t in self.out[net.cycle_start] if t.kind == "havoc"), None)
        self.blocks = [None] * len(locs)
        self.cost = [0] * len(locs)
        for i, lid in enumerate(locs):
            if i != self.cs:
                self.blocks[i], self.cost[i] = self._block(lid)
        self.slow = {i: [self._slow_transition(t) for t in self.out[lid]] for i, lid in enumerate(locs)}
        self._compile_havoc()

    # -- code generation ------------------------------------------------------

    def _fn(self, expr_src: str):
        return eval(f"lambda v: {expr_src}", self.gen.namespace)

    def _target(self, target) -> str:
        if isinstance(target, Var):
            return f"v[{self.base[target.name]}]"
        return f"v[{self.gen.index_offset(target)}]"

    def _assign_lines(self, t, indent: str) -> list[str]:
        return [f"{indent}{self._target(a.target)} = {self.gen.source(a.value)}" for a in t.assignments]

    @staticmethod
    def _simple(t) -> bool:
        return t.guard == TRUE and t.call is None and not any(isinstance(a.value, Nondet) for a in t.assignments)

    def _block(self, lid: str):
        lines, cost, cur, seen = [], 0, lid, set()
        while True:
            seen.add(cur)
            outs = self.out[cur]
            if len(outs) == 1 and self._simple(outs[0]):
                t = outs[0]
                lines += self._assign_lines(t, "    ")
                cost += 1
                nxt = t.target
                if self.stop[self.index[nxt]] or nxt in seen:
                    lines.append(f"    return {self.index[nxt]}")
                    break
                cur = nxt
                continue
            if cur == lid and outs and all(
                    t.call is None and not any(isinstance(a.value, Nondet) for a in t.assignments) for t in outs):
                names = [f"g{k}" for k in range(len(outs))]
                for k, t in enumerate(outs):
                    lines.append(f"    {names[k]} = {self.gen.source(t.guard)}")
                lines.append(f"    if {' + '.join(names)} != 1: return {_SLOW}")
                for k, t in enumerate(outs):
                    lines.append(f"    if {names[k]}:")
                    lines += self._assign_lines(t, "        ")
                    lines.append(f"        return {self.index[t.target]}")
                cost += 1
                break
            if cur == lid:
                return None, 0
            lines.append(f"    return {self.index[cur]}")
            break
        src = "def _blk(v):\n" + "\n".join(lines) + "\n"
        ns = self.gen.namespace
        exec(src, ns)
        return ns.pop("_blk"), cost

    def _slow_transition(self, t):
        guard = None if t.guard == TRUE else self._fn(self.gen.source(t.guard))
        ops = []
        for a in t.assignments:
            if isinstance(a.value, Nondet):
                setter = eval(f"lambda v, x: v.__setitem__({self._offset_src(a.target)}, x)", self.gen.namespace)
                ops.append((setter, tuple(nondet_domain(a.target, self.net))))
            else:
                src = f"lambda v: v.__setitem__({self._offset_src(a.target)}, {self.gen.source(a.value)})"
                ops.append((eval(src, self.gen.namespace), None))
        return guard, ops, self.index[t.target]

    def _offset_src(self, target) -> str:
        if isinstance(target, Var):
            return str(self.base[target.name])
        return self.gen.index_offset(target)

    def _compile_havoc(self):
        self.input_names = havoc_names(self.havoc) if self.havoc else []
        slots, domains, after = [], [], []
        for a in (self.havoc.assignments if self.havoc else ()):
            if isinstance(a.value, Nondet) and not after:
                slots.append(self.base[a.target.name] if isinstance(a.target, Var)
                             else self.base[a.target.array] + a.target.index.value - a.target.lo)
                domains.append(tuple(nondet_domain(a.target, self.net)))
            else:
                after.append(a)
        if len(after) != sum(1 for a in after if not isinstance(a.value, Nondet)):
            raise EngineError("havoc transition must list nondeterministic inputs first")
        self.input_slots = slots
        self.input_domains = domains
        if after:
            src = "def _blk(v):\n" + "\n".join(
                f"    {self._target(a.target)} = {self.gen.source(a.value)}" for a in after) + "\n"
            exec(src, self.gen.namespace)
            self.havoc_rest = self.gen.namespace.pop("_blk")
        else:
            self.havoc_rest = None
        self.body_entry = self.index[self.havoc.target] if self.havoc else None

    # -- execution --------------------------------------------------------------

    def initial_state(self) -> tuple:
        return tuple(self.template[: self.n_state])

    executions = 0  # cycle runs over the lifetime of this compiled network

    def successors(self, state: tuple, emit) -> int:
        """Run one cycle from `state` for every input combination; returns executions done."""
        if self.havoc is None:
            raise EngineError("network has no havoc transition at cycle start")
        base = list(state) + list(self.rest)
        count = 0
        slots = self.input_slots
        rest = self.havoc_rest
        entry = self.body_entry
        for combo in itertools.product(*self.input_domains):
            v = base[:]
            for s, x in zip(slots, combo):
                v[s] = x
            count += 1
            self.executions += 1
            try:
                if rest is not None:
                    rest(v)
            except RuntimeFault:
                emit(combo, "fault", v)
                continue
            self._run(v, entry, combo, emit, 1)
        return count

    def _run(self, v, loc, choices, emit, steps):
        blocks, cost, stop, check = self.blocks, self.cost, self.stop, self.check
        eoc = self.eoc
        while True:
            if stop[loc]:
                chk = check[loc]
                if chk is not None:
                    try:
                        ok = chk(v)
                    except RuntimeFault:
                        emit(choices, "fault", v)
                        return
                    if not ok:
                        emit(choices, "violation", v)
                        return
                if loc == eoc:
                    emit(choices, "ok", v)
                    return
            blk = blocks[loc]
            if blk is not None:
                try:
                    nxt = blk(v)
                except RuntimeFault:
                    emit(choices, "fault", v)
                    return
                if nxt != _SLOW:
                    steps += cost[loc]
                    if steps > STEP_LIMIT:
                        emit(choices, "fault", v)
                        return
                    loc = nxt
                    continue
            steps += 1
            if steps > STEP_LIMIT:
                emit(choices, "fault", v)
                return
            self._branch(v, loc, choices, emit, steps)
            return

    def _branch(self, v, loc, choices, emit, steps):
        try:
            enabled = [tr for tr in self.slow[loc] if tr[0] is None or tr[0](v)]
        except RuntimeFault:
            emit(choices, "fault", v)
            return
        if not enabled:
            return
        multi = len(enabled) > 1
        for k, (_, ops, target) in enumerate(enabled):
            self._apply(v[:] if multi else v, ops, 0, choices + (k,) if multi else choices, target, emit, steps)

    def _apply(self, v, ops, i, choices, target, emit, steps):
        while i < len(ops):
            fn, domain = ops[i]
            if domain is None:
                try:
                    fn(v)
                except RuntimeFault:
                    emit(choices, "fault", v)
                    return
                i += 1
                continue
            for x in domain:
                v2 = v[:]
                try:
                    fn(v2, x)
                except RuntimeFault:
                    emit(choices + (x,), "fault", v2)
                    continue
                self._apply(v2, ops, i + 1, choices + (x,), target, emit, steps)
            return
        self._run(v, target, choices, emit, steps)


def _split(choices: tuple, n_inputs: int, names) -> tuple[dict, tuple]:
    return dict(zip(names, choices[:n_inputs])), tuple(choices[n_inputs:])


def _build_trace(net, check_list, path, names) -> Trace:
    from .cex import replay

    n = len(names)
    inputs, extra = [], []
    for choices in path:
        i, e = _split(choices, n, names)
        inputs.append(i)
        extra.append(e)
    return replay(net, inputs, check_list, extra)


def check(p: VerificationProblem, cfg: EngineConfig = EngineConfig()) -> Verdict:
    """Breadth-first reachability over end-of-cycle states, at most `cfg.K` cycles deep."""
    t0 = time.perf_counter()
    net = concrete_net(p)
    check_list = checks(net, p.property)
    cn = CompiledNet(net, check_list)
    stats = Statistics(branching_factor=branching_factor(net))
    init = cn.initial_state()
    parent: dict[tuple, tuple | None] = {init: None}
    frontier = [init]
    stats.peak_frontier = 1

    def path_to(state, last_choices):
        path = [last_choices]
        while parent[state] is not None:
            prev, ch = parent[state]
            path.append(ch)
            state = prev
        return list(reversed(path))

    def finish(kind, trace=None, message=""):
        stats.states_explored = len(parent)
        stats.cycle_executions = cn.executions
        stats.wall_time_s = time.perf_counter() - t0
        return Verdict(kind, trace, stats, message)

    for level in range(1, cfg.K + 1):
        nxt: list[tuple] = []
        fault = None
        for s in frontier:
            def emit(choices, kind, v, s=s):
                nonlocal fault
                if kind == "ok":
                    ns = tuple(v[: cn.n_state])
                    if ns not in parent:
                        parent[ns] = (s, choices)
                        nxt.append(ns)
                        if len(parent) > cfg.max_states:
                            raise _Found(None, "cap")
                elif kind == "violation":
                    raise _Found((s, choices), kind)
                elif fault is None:
                    fault = (s, choices)

            try:
                cn.successors(s, emit)
            except _Found as found:
                if found.kind == "cap":
                    stats.cap_reached = True
                    stats.cycles_completed = level - 1
                    return finish(BOUND_REACHED, message=f"state cap of {cfg.max_states} reached")
                state, choices = found.choices
                stats.cycles_completed = level - 1
                trace = _build_trace(net, check_list, path_to(state, choices), cn.input_names)
                return finish(VIOLATED, trace)
        if fault is not None:
            stats.cycles_completed = level - 1
            trace = _build_trace(net, check_list, path_to(*fault), cn.input_names)
            return finish(FAULT, trace, trace.violation.detail if trace.violation else "")
        stats.cycles_completed = level
        stats.peak_frontier = max(stats.peak_frontier, len(nxt))
        if not nxt:
            return finish(SATISFIED)
        frontier = nxt
    return finish(BOUND_REACHED, message=f"no violation within {cfg.K} cycles")


ORACLE_MAX_COMBINATIONS = 2 ** 20
ORACLE_MAX_CYCLES = 3


def brute_force_oracle(p: VerificationProblem, cycles: int) -> Verdict:
    """Enumerate every input sequence of length `cycles` by direct interpretation.

    No visited set and no compiled code. Returns the event at the smallest
    cycle count; a violation wins over a fault at the same cycle, and among
    sequences of one kind the lexicographically first is reported.
    """
    t0 = time.perf_counter()
    net = concrete_net(p)
    check_list = checks(net, p.property)
    bf = branching_factor(net)
    if cycles < 1 or cycles > ORACLE_MAX_CYCLES:
        raise OracleError(f"oracle supports 1..{ORACLE_MAX_CYCLES} cycles, got {cycles}")
    if bf > ORACLE_MAX_COMBINATIONS:
        raise OracleError(f"{bf} input combinations per cycle exceed the oracle limit of {ORACLE_MAX_COMBINATIONS}")
    interp = Interpreter(net, check_list)
    best: dict[int, dict[str, tuple]] = {}
    runs = 0

    def dfs(val, depth, prefix):
        nonlocal runs
        for choices, out in interp.branches(val):
            runs += 1
            seq = prefix + (choices,)
            if out.kind in ("violation", "fault"):
                slot = best.setdefault(depth, {})
                if out.kind not in slot:
                    slot[out.kind] = seq
            elif out.kind == "ok" and depth < cycles:
                dfs(out.val, depth + 1, seq)

    dfs(interp.initial(), 1, ())
    stats = Statistics(branching_factor=bf, cycle_executions=runs, cycles_completed=cycles)
    stats.wall_time_s = time.perf_counter() - t0
    if not best:
        return Verdict(SATISFIED, None, stats)
    depth = min(best)
    kind = VIOLATED if "violation" in best[depth] else FAULT
    seq = best[depth]["violation" if kind == VIOLATED else "fault"]
    trace = _build_trace(net, check_list, list(seq), interp.input_names)
    stats.cycles_completed = depth - 1
    return Verdict(kind, trace, stats)


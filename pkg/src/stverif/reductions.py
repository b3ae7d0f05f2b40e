"""Verdict-preserving reductions and the numeric value-set abstraction."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import networkx as nx

from .cfa import ASSERTION, CfaNetwork, Transition, Variable
from .cfa.model import Assignment, Automaton
from .engine import branching_factor, concrete_net
from .expr import (
    BOOL, COMPARE_OPS, FALSE, TRUE, Binary, Const, Expr, Index, Nondet, RuntimeFault, Unary, Var, children,
    eval_expr, free_vars, map_expr, may_fault,
)
from .requirements import Property, VerificationProblem


@dataclass
class ReductionReport:
    pass_name: str
    before: dict = field(default_factory=dict)
    after: dict = field(default_factory=dict)
    variables_removed: int = 0
    transitions_removed: int = 0
    transitions_merged: int = 0
    locations_removed: int = 0
    constants_folded: int = 0
    domains_restricted: int = 0
    refused: bool = False
    reason: str = ""
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "pass_name", "before", "after", "variables_removed", "transitions_removed", "transitions_merged",
            "locations_removed", "constants_folded", "domains_restricted", "refused", "reason")}
        d["detail"] = {k: list(v) if isinstance(v, tuple) else v for k, v in self.detail.items()}
        return d


def _finish(report: ReductionReport, before: CfaNetwork, after: CfaNetwork) -> ReductionReport:
    report.before = before.size()
    report.after = after.size()
    report.variables_removed = len(before.variables) - len(after.variables)
    report.locations_removed = len(before.main.locations) - len(after.main.locations)
    removed = len(before.main.transitions) - len(after.main.transitions)
    report.transitions_removed = max(removed - report.transitions_merged, 0)
    return report


def _rebuild(net: CfaNetwork, locations, transitions, variables=None) -> CfaNetwork:
    main = Automaton(net.main.name, tuple(locations), tuple(transitions), net.main.initial)
    return replace(net, main=main, variables=tuple(net.variables if variables is None else variables))


def _used_names(net: CfaNetwork, prop: Property) -> set[str]:
    used = set(free_vars(prop.expr))
    for loc in net.main.locations:
        if loc.assertion is not None:
            used |= free_vars(loc.assertion[1])
    for t in net.main.transitions:
        used |= free_vars(t.guard)
        for a in t.assignments:
            used |= free_vars(a.target) | free_vars(a.value)
    return used


# -- constant folding -----------------------------------------------------------------


def fold_expr(e: Expr, counter: list | None = None) -> Expr:
    """Bottom-up folding with wrap-around semantics; never removes a possible runtime fault."""

    def bump():
        if counter is not None:
            counter[0] += 1

    def fn(node):
        if isinstance(node, (Const, Var, Nondet)):
            return None
        kids = children(node)
        if isinstance(node, Index):
            return None
        if all(isinstance(k, Const) for k in kids):
            try:
                value = eval_expr(node, {})
            except RuntimeFault:
                return None
            bump()
            return Const(value, node.type)
        if isinstance(node, Unary) and node.op == "NOT" and isinstance(node.arg, Unary) and node.arg.op == "NOT":
            bump()
            return node.arg.arg
        if isinstance(node, Binary) and node.op in ("AND", "OR", "XOR"):
            for const, other in ((node.left, node.right), (node.right, node.left)):
                if not isinstance(const, Const):
                    continue
                absorbing = (node.op == "AND" and const.value is False) or (node.op == "OR" and const.value is True)
                neutral = (node.op == "AND" and const.value is True) or (node.op in ("OR", "XOR") and const.value is False)
                if neutral:
                    bump()
                    return other
                if absorbing and not may_fault(other):
                    bump()
                    return const
        return None

    return map_expr(e, fn)


def _constant_values(net: CfaNetwork) -> dict[str, Const]:
    """Scalar variables whose value never changes: declared constants and never-reassigned state."""
    assigned: dict[str, list] = {}
    for t in net.main.transitions:
        for a in t.assignments:
            name = a.target.name if isinstance(a.target, Var) else a.target.array
            assigned.setdefault(name, []).append(a.value)
    out = {}
    for v in net.variables:
        if v.is_array or v.kind == "input":
            continue
        init = Const(v.initial_value(), v.type)
        values = assigned.get(v.name, [])
        if all(x == init for x in values):
            out[v.name] = init
    return out


def _substitute_consts(e: Expr, consts: dict, counter: list) -> Expr:
    def fn(node):
        if isinstance(node, Var) and node.name in consts:
            counter[0] += 1
            return consts[node.name]
        return None

    return fold_expr(map_expr(e, fn), counter)


def constant_fold(p: VerificationProblem) -> tuple[VerificationProblem, ReductionReport]:
    """Propagate constants, fold expressions and prune statically decided guards, to a fixpoint."""
    net0 = concrete_net(p)
    net, prop = net0, p.property
    report = ReductionReport("constant_fold")
    counter = [0]
    while True:
        consts = _constant_values(net)
        transitions = []
        changed = False
        for t in net.main.transitions:
            guard = _substitute_consts(t.guard, consts, counter)
            if guard == FALSE:
                changed = True
                continue
            assigns = []
            for a in t.assignments:
                name = a.target.name if isinstance(a.target, Var) else a.target.array
                if name in consts:
                    # a write of the value the variable always holds
                    continue
                target = a.target
                if isinstance(target, Index):
                    target = Index(target.array, _substitute_consts(target.index, consts, counter),
                                   target.type, target.lo, target.hi, target.span)
                assigns.append(Assignment(target, _substitute_consts(a.value, consts, counter)))
            nt = Transition(t.source, t.target, guard, tuple(assigns), t.kind, t.span, t.call)
            changed |= nt != t
            transitions.append(nt)
        locations = []
        for loc in net.main.locations:
            if loc.assertion is not None:
                e = _substitute_consts(loc.assertion[1], consts, counter)
                changed |= e != loc.assertion[1]
                loc = replace(loc, assertion=(loc.assertion[0], e))
            locations.append(loc)
        new_expr = _substitute_consts(prop.expr, consts, counter)
        changed |= new_expr != prop.expr
        prop = replace(prop, expr=new_expr)
        net = _rebuild(net, locations, transitions)
        used = _used_names(net, prop)
        keep = [v for v in net.variables if not (v.name in consts and v.name not in used)]
        if len(keep) != len(net.variables):
            changed = True
            net = net.with_variables(keep)
        if not changed:
            break
    report.constants_folded = counter[0]
    out = replace(p.with_net(net), property=prop)
    return out, _finish(report, net0, net)


# -- unreachable locations ---------------------------------------------------------------


def _prune(net: CfaNetwork, keep_roles=True) -> CfaNetwork:
    g = nx.DiGraph()
    g.add_nodes_from(loc.id for loc in net.main.locations)
    g.add_edges_from((t.source, t.target) for t in net.main.transitions)
    live = nx.descendants(g, net.main.initial) | {net.main.initial}
    if keep_roles:
        live |= {net.cycle_start, net.end_of_cycle}
    locations = [loc for loc in net.main.locations if loc.id in live]
    transitions = [t for t in net.main.transitions if t.source in live]
    return _rebuild(net, locations, transitions)


def eliminate_unreachable(p: VerificationProblem) -> tuple[VerificationProblem, ReductionReport]:
    net0 = concrete_net(p)
    net = _prune(net0)
    return p.with_net(net), _finish(ReductionReport("eliminate_unreachable"), net0, net)


# -- cone of influence ----------------------------------------------------------------------


def _body_graph(net: CfaNetwork) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(loc.id for loc in net.main.locations)
    for t in net.main.transitions:
        if t.kind not in ("cycle", "init"):
            g.add_edge(t.source, t.target)
    return g


def _postdominators(net: CfaNetwork, g: nx.DiGraph):
    eoc = net.end_of_cycle
    reaching = nx.ancestors(g, eoc) | {eoc}
    ipdom = nx.immediate_dominators(g.subgraph(reaching).reverse(copy=True), eoc)
    return reaching, ipdom


def _control_deps(g, reaching, ipdom) -> dict[str, set[str]]:
    deps: dict[str, set[str]] = {n: set() for n in g.nodes}
    for a in g.nodes:
        succs = list(g.successors(a))
        if len(succs) < 2:
            continue
        if a not in reaching:
            continue
        stop = ipdom[a]
        for b in succs:
            node = b
            while node in reaching and node != stop:
                deps[node].add(a)
                if ipdom[node] == node:
                    break
                node = ipdom[node]
    return deps


def _reads(e: Expr) -> set[str]:
    return free_vars(e)


def _target_base(target) -> str:
    return target.name if isinstance(target, Var) else target.array


def cone_of_influence(p: VerificationProblem) -> tuple[VerificationProblem, ReductionReport]:
    """Keep only statements that can affect the property or raise a runtime fault."""
    from .requirements import checks

    net0 = concrete_net(p)
    net = net0
    g = _body_graph(net)
    reaching, ipdom = _postdominators(net, g)
    deps = _control_deps(g, reaching, ipdom)
    out = net.main.outgoing()
    in_loop = set()
    for comp in nx.strongly_connected_components(g):
        if len(comp) > 1:
            in_loop |= comp
    in_loop |= {n for n in g.nodes if g.has_edge(n, n)}
    branch_locs = {lid for lid, ts in out.items() if len(ts) > 1}
    guarded = {lid for lid, ts in out.items() if any(t.guard != TRUE for t in ts)}

    relevant_vars: set[str] = set()
    relevant_branches: set[str] = set()
    seeds_locs: set[str] = set()
    for lid, e in checks(net, p.property):
        relevant_vars |= _reads(e)
        seeds_locs.add(lid)
    fault_prone = set()
    for i, t in enumerate(net.main.transitions):
        exprs = [t.guard] + [a.value for a in t.assignments] + [a.target for a in t.assignments]
        if any(may_fault(e) for e in exprs):
            fault_prone.add(i)
            seeds_locs.add(t.source)
            if may_fault(t.guard):
                relevant_branches.add(t.source)
    for lid in guarded:
        # lone guards act as assumptions, and loops or paths that never reach the
        # end of the cycle decide termination; none of these may be collapsed
        if lid not in branch_locs or lid not in reaching or lid in in_loop:
            relevant_branches.add(lid)

    kept_assign: set[tuple[int, int]] = set()
    changed = True
    while changed:
        changed = False
        seeds_locs |= relevant_branches
        for lid in list(seeds_locs):
            for b in deps.get(lid, ()):
                if b not in relevant_branches:
                    relevant_branches.add(b)
                    changed = True
        for b in list(relevant_branches):
            for t in out[b]:
                new = _reads(t.guard) - relevant_vars
                if new:
                    relevant_vars |= new
                    changed = True
        for i, t in enumerate(net.main.transitions):
            for k, a in enumerate(t.assignments):
                if (i, k) in kept_assign:
                    continue
                if _target_base(a.target) in relevant_vars or i in fault_prone:
                    kept_assign.add((i, k))
                    relevant_vars |= _reads(a.value) | _reads(a.target)
                    relevant_vars.add(_target_base(a.target))
                    if t.source not in seeds_locs:
                        seeds_locs.add(t.source)
                    changed = True

    transitions = []
    collapsed = set()
    merged = 0
    for i, t in enumerate(net.main.transitions):
        src = t.source
        if src in branch_locs and src not in relevant_branches:
            if src in collapsed:
                merged += 1
                continue
            collapsed.add(src)
            transitions.append(Transition(src, ipdom[src], TRUE, (), "skip", t.span))
            continue
        assigns = tuple(a for k, a in enumerate(t.assignments) if (i, k) in kept_assign)
        transitions.append(Transition(src, t.target, t.guard, assigns, t.kind, t.span, t.call))
    own = ASSERTION in p.property.at
    locations = [loc if loc.assertion is None or (own and loc.assertion[0] == p.property.label)
                 else replace(loc, assertion=None) for loc in net.main.locations]
    pruned = _prune(_rebuild(net, locations, transitions))
    used = _used_names(pruned, p.property)
    variables = [v for v in net.variables if v.name in used]
    result = pruned.with_variables(variables)
    report = ReductionReport("cone_of_influence", transitions_merged=merged)
    report.detail = {"removed_variables": tuple(v.name for v in net.variables if v.name not in used)}
    return p.with_net(result), _finish(report, net0, result)


# -- value-set abstraction -------------------------------------------------------------------


def _comparison_operand(parent: Expr, node: Expr) -> Const | None:
    if isinstance(parent, Binary) and parent.op in COMPARE_OPS:
        other = parent.right if parent.left is node else parent.left if parent.right is node else None
        if isinstance(other, Const):
            return other
    return None


def _occurrences(e: Expr, name: str, consts: list, bad: list) -> None:
    """Record comparison constants for `name` in `e`, or a reason it cannot be abstracted."""

    def visit(node, parent, grand):
        if isinstance(node, Var) and node.name == name:
            c = _comparison_operand(parent, node) if parent is not None else None
            if c is None and isinstance(parent, Unary) and parent.op == "TO_DINT" and grand is not None:
                c = _comparison_operand(grand, parent)
            if c is None:
                bad.append("used outside a comparison with a constant")
            else:
                consts.append(c.value)
            return
        for k in children(node):
            visit(k, node, parent)

    visit(e, None, None)


def _representatives(constants, lo: int, hi: int, domain) -> tuple:
    cands = {lo, hi}
    for c in constants:
        for x in (c - 1, c, c + 1):
            cands.add(min(max(x, lo), hi))
    if domain is None:
        return tuple(sorted(cands))
    dom = sorted(set(domain))
    chosen = {x for x in cands if x in set(dom)}
    points = sorted(set(constants))
    # every equivalence class under the comparisons needs a representative from the domain
    def cls(x):
        for i, c in enumerate(points):
            if x < c:
                return 2 * i
            if x == c:
                return 2 * i + 1
        return 2 * len(points)

    covered = {cls(x) for x in chosen}
    for x in dom:
        if cls(x) not in covered:
            chosen.add(x)
            covered.add(cls(x))
    return tuple(sorted(chosen))


def value_set_abstraction(p: VerificationProblem, var) -> tuple[VerificationProblem, ReductionReport]:
    """Shrink an integer input's havoc domain to boundary representatives of the constants it is compared with."""
    net0 = concrete_net(p)
    name = var.name if isinstance(var, Variable) else var
    report = ReductionReport("value_set_abstraction")
    report.detail = {"variable": name}

    def refuse(reason):
        report.refused = True
        report.reason = reason
        return p.with_net(net0), _finish(report, net0, net0)

    if not net0.has_var(name):
        return refuse(f"'{name}' is not a variable of the model")
    v = net0.var(name)
    if v.kind != "input" or v.is_array or v.type == BOOL:
        return refuse(f"'{name}' is not a scalar integer input")
    consts: list[int] = []
    bad: list[str] = []
    exprs = [p.property.expr] + [loc.assertion[1] for loc in net0.main.locations if loc.assertion is not None]
    for t in net0.main.transitions:
        exprs.append(t.guard)
        for a in t.assignments:
            if isinstance(a.value, Nondet):
                continue
            if _target_base(a.target) == name:
                bad.append("assigned in the program body")
            exprs.append(a.value)
            if isinstance(a.target, Index):
                exprs.append(a.target.index)
    for e in exprs:
        _occurrences(e, name, consts, bad)
    if bad:
        return refuse(f"'{name}' is {bad[0]}; restricting its domain would be unsound")
    before = len(v.values())
    if consts:
        domain = _representatives(consts, v.type.lo, v.type.hi, v.domain)
    else:
        dom = v.values()
        domain = (v.type.default(),) if v.type.default() in dom else (dom[0],)
    if v.domain is not None and tuple(domain) == tuple(v.domain):
        net = net0
    else:
        variables = [replace(x, domain=tuple(domain)) if x.name == name else x for x in net0.variables]
        net = net0.with_variables(variables)
    report.domains_restricted = 1 if len(domain) < before else 0
    report.detail.update({"constants": tuple(sorted(set(consts))), "domain": tuple(domain),
                          "branching_before": branching_factor(net0), "branching_after": branching_factor(net)})
    return p.with_net(net), _finish(report, net0, net)


def reduce_problem(p: VerificationProblem, fold=True, unreach=True, coi=True, valueset=False):
    """Run the enabled passes in their fixed order; value-set abstraction visits every integer input."""
    reports = []
    if fold:
        p, r = constant_fold(p)
        reports.append(r)
    if unreach:
        p, r = eliminate_unreachable(p)
        reports.append(r)
    if coi:
        p, r = cone_of_influence(p)
        reports.append(r)
    if valueset:
        for v in concrete_net(p).inputs():
            if not v.is_array and v.type != BOOL:
                p, r = value_set_abstraction(p, v.name)
                reports.append(r)
    return p, reports

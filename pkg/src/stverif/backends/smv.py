"""NuSMV-dialect emission: one module, an enumerated location variable, ASSIGN relations, INVARSPEC."""
from __future__ import annotations

from ..cfa import CfaNetwork
from ..engine import concrete_net
from ..expr import BOOL, DINT, INT, Binary, Const, Expr, Index, Nondet, Unary, Var, walk
from ..requirements import VerificationProblem, checks
from .model import EmittedModel, NameMap, UnsupportedFeature

_OPS = {"AND": "&", "OR": "|", "XOR": "xor", "=": "=", "<>": "!=", "<": "<", "<=": "<=", ">": ">",
        ">=": ">=", "+": "+", "-": "-", "*": "*", "/": "/", "MOD": "mod"}


def smv_type(t) -> str:
    return "boolean" if t == BOOL else f"signed word[{t.bits}]"


def smv_const(value, t) -> str:
    if t == BOOL:
        return "TRUE" if value else "FALSE"
    if value == t.lo:
        return f"signed(0ud{t.bits}_{-value})"
    if value < 0:
        return f"-0sd{t.bits}_{-value}"
    return f"0sd{t.bits}_{value}"


def flat_name(e: Expr) -> str:
    if isinstance(e, Var):
        return e.name
    if isinstance(e.index, Const):
        return f"{e.array}[{e.index.value}]"
    raise UnsupportedFeature("dynamic array indexing is not supported by the SMV backend", e.span)


class _Emitter:
    def __init__(self, net: CfaNetwork, names: NameMap):
        self.net = net
        self.names = names

    def expr(self, e: Expr, env: dict) -> str:
        if isinstance(e, Const):
            return smv_const(e.value, e.type)
        if isinstance(e, (Var, Index)):
            if isinstance(e, Index) and isinstance(e.index, Const) and not e.lo <= e.index.value <= e.hi:
                return smv_const(e.type.default(), e.type)  # the fault condition reports the access
            name = flat_name(e)
            return env.get(name, self.names[name])
        if isinstance(e, Unary):
            a = self.expr(e.arg, env)
            if e.op == "NOT":
                return f"!({a})"
            if e.op == "NEG":
                return f"-({a})"
            if e.op == "TO_DINT":
                return f"extend({a}, {DINT.bits - INT.bits})"
            return f"signed(({a})[{INT.bits - 1}:0])"
        if isinstance(e, Nondet):
            raise ValueError("nondeterministic value inside an expression")
        return f"({self.expr(e.left, env)} {_OPS[e.op]} {self.expr(e.right, env)})"

    def fault_conditions(self, e: Expr, env: dict) -> list[str]:
        out = []
        for node in walk(e):
            if isinstance(node, Binary) and node.op in ("/", "MOD"):
                out.append(f"({self.expr(node.right, env)} = {smv_const(0, node.right.type)})")
            elif isinstance(node, Index) and isinstance(node.index, Const) and not node.lo <= node.index.value <= node.hi:
                out.append("TRUE")
        return out


def emit_smv(p: VerificationProblem) -> EmittedModel:
    """Translate the (inlined) problem into a NuSMV module."""
    net = concrete_net(p)
    check_list = checks(net, p.property)
    names = NameMap("v_", "smv")
    locs = NameMap("L_", "smv")
    for loc in net.main.locations:
        locs.add(loc.id)
    scalars = []  # (flat name, type, init, kind)
    for v in net.variables:
        if v.is_array:
            for (n, x) in zip(v.element_names(), v.initial_value()):
                scalars.append((n, v.elem_type, x, v.kind, None))
        else:
            scalars.append((v.name, v.type, v.initial_value(), v.kind, v.domain))
    for n, *_ in scalars:
        names.add(n)
    em = _Emitter(net, names)

    nexts: dict[str, list[str]] = {n: [] for n, *_ in scalars}
    loc_cases: list[str] = []
    ivars: list[tuple[str, str]] = []
    faults: list[str] = []
    for ti, t in enumerate(net.main.transitions):
        src = f"loc = {locs[t.source]}"
        for cond in em.fault_conditions(t.guard, {}):
            faults.append(f"({src} & {cond})")
        guard = em.expr(t.guard, {})
        cond = src if guard == "TRUE" else f"{src} & {guard}"
        env: dict[str, str] = {}
        for k, a in enumerate(t.assignments):
            target = flat_name(a.target)
            if isinstance(a.value, Nondet):
                var = next(v for v in net.variables if v.name == (a.target.name if isinstance(a.target, Var)
                                                                     else a.target.array))
                if var.domain is not None and not var.is_array:
                    value = "{" + ", ".join(smv_const(x, a.value.type) for x in var.domain) + "}"
                else:
                    iv = f"nd_{ti}_{k}"
                    ivars.append((iv, smv_type(a.value.type)))
                    value = iv
            else:
                for fc in em.fault_conditions(a.value, env):
                    faults.append(f"({cond} & {fc})")
                value = em.expr(a.value, env)
            env[target] = value
        for target, value in env.items():
            nexts[target].append(f"    {cond} : {value};")
        loc_cases.append(f"    {cond} : {locs[t.target]};")
    prop_parts = []
    for lid, e in check_list:
        for fc in em.fault_conditions(e, {}):
            faults.append(f"(loc = {locs[lid]} & {fc})")
        prop_parts.append(f"(loc = {locs[lid]} -> {em.expr(e, {})})")
    prop = " & ".join(prop_parts) if prop_parts else "TRUE"
    if faults:
        prop = f"{prop} & !({' | '.join(faults)})"

    lines = ["-- generated verification model", "MODULE main", "VAR"]
    lines.append("  loc : {" + ", ".join(locs[loc.id] for loc in net.main.locations) + "};")
    defines = []
    for n, t, init, kind, _ in scalars:
        if kind == "constant":
            defines.append(f"  {names[n]} := {smv_const(init, t)};")
        else:
            lines.append(f"  {names[n]} : {smv_type(t)};")
    if ivars:
        lines.append("IVAR")
        lines += [f"  {iv} : {ty};" for iv, ty in ivars]
    if defines:
        lines.append("DEFINE")
        lines += defines
    lines.append("ASSIGN")
    lines.append(f"  init(loc) := {locs[net.main.initial]};")
    lines.append("  next(loc) := case")
    lines += loc_cases
    lines.append("    TRUE : loc;")
    lines.append("  esac;")
    for n, t, init, kind, _ in scalars:
        if kind == "constant":
            continue
        ident = names[n]
        lines.append(f"  init({ident}) := {smv_const(init, t)};")
        if nexts[n]:
            lines.append(f"  next({ident}) := case")
            lines += nexts[n]
            lines.append(f"    TRUE : {ident};")
            lines.append("  esac;")
        else:
            lines.append(f"  next({ident}) := {ident};")
    label = "p_" + "".join(ch if ch.isalnum() else "_" for ch in p.property.label)
    lines.append(f"INVARSPEC NAME {label} := {prop};")
    return EmittedModel("smv", "\n".join(lines) + "\n", names, label, net, tuple(check_list), locs, ".smv")

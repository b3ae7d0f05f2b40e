"""Render a TypedAst back to Structured Text source."""
from __future__ import annotations

from ..expr import ArrayType, to_st
from . import ast as A

_SECTION_KW = {"input": "VAR_INPUT", "output": "VAR_OUTPUT", "local": "VAR", "temp": "VAR_TEMP",
               "constant": "VAR CONSTANT"}


def _literal(v) -> str:
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    return str(v)


def _decl(d: A.VarDecl) -> str:
    s = f"{d.name} : {d.type}"
    if d.init is not None:
        if isinstance(d.type, ArrayType):
            s += " := [" + ", ".join(_literal(v) for v in d.init) + "]"
        else:
            s += f" := {_literal(d.init)}"
    return s + ";"


def _call(c: A.Call) -> str:
    args = [f"{p} := {to_st(e)}" for p, e in c.inputs]
    outs = list(c.outputs)
    prefix = ""
    if c.result_form:
        prefix = f"{to_st(outs[0][1])} := "
        outs = outs[1:]
    args += [f"{p} => {to_st(lv)}" for p, lv in outs]
    return f"{prefix}{c.instance or c.callee}({', '.join(args)});"


def _block(block: A.Block, ind: int, out: list[str]) -> None:
    for s in block.stmts:
        _stmt(s, ind, out)


def _stmt(s, ind: int, out: list[str]) -> None:
    pad = "    " * ind
    if isinstance(s, A.Assign):
        out.append(f"{pad}{to_st(s.target)} := {to_st(s.value)};")
    elif isinstance(s, A.Call):
        out.append(pad + _call(s))
    elif isinstance(s, A.If):
        for k, (cond, body) in enumerate(s.branches):
            out.append(f"{pad}{'IF' if k == 0 else 'ELSIF'} {to_st(cond)} THEN")
            _block(body, ind + 1, out)
        if s.else_body is not None:
            out.append(f"{pad}ELSE")
            _block(s.else_body, ind + 1, out)
        out.append(f"{pad}END_IF;")
    elif isinstance(s, A.Case):
        out.append(f"{pad}CASE {to_st(s.selector)} OF")
        for arm in s.arms:
            labels = ", ".join(str(lo) if lo == hi else f"{lo}..{hi}" for lo, hi in arm.labels)
            out.append(f"{pad}    {labels}:")
            _block(arm.body, ind + 2, out)
        if s.else_body is not None:
            out.append(f"{pad}    ELSE")
            _block(s.else_body, ind + 2, out)
        out.append(f"{pad}END_CASE;")
    elif isinstance(s, A.For):
        by = f" BY {s.step}" if s.step != 1 else ""
        out.append(f"{pad}FOR {to_st(s.var)} := {to_st(s.start)} TO {to_st(s.stop)}{by} DO")
        _block(s.body, ind + 1, out)
        out.append(f"{pad}END_FOR;")
    elif isinstance(s, A.While):
        out.append(f"{pad}WHILE {to_st(s.cond)} DO")
        _block(s.body, ind + 1, out)
        out.append(f"{pad}END_WHILE;")
    elif isinstance(s, A.Repeat):
        out.append(f"{pad}REPEAT")
        _block(s.body, ind + 1, out)
        out.append(f"{pad}UNTIL {to_st(s.cond)}")
        out.append(f"{pad}END_REPEAT;")
    elif isinstance(s, A.Return):
        out.append(f"{pad}RETURN;")
    elif isinstance(s, A.Exit):
        out.append(f"{pad}EXIT;")
    elif isinstance(s, A.Empty):
        out.append(f"{pad};")
    else:
        raise TypeError(s)


def pretty(ast: A.TypedAst) -> str:
    out: list[str] = []
    for u in ast.units:
        head = f"{u.kind} {u.name}"
        if u.kind == "FUNCTION":
            head += f" : {u.return_type}"
        out.append(head)
        decls = [d for d in u.decls if not (u.kind == "FUNCTION" and d.name == u.name)]
        current = None
        for d in decls:
            if d.section != current:
                if current is not None:
                    out.append("END_VAR")
                out.append(_SECTION_KW[d.section])
                current = d.section
            out.append("    " + _decl(d))
        if current is not None:
            out.append("END_VAR")
        _block(u.body, 1, out)
        out.append(f"END_{u.kind}")
        out.append("")
    return "\n".join(out)

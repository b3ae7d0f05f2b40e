"""Recursive-descent parser and type resolver for the Structured Text subset.

Parsing runs in two phases so that units may reference each other in any
order: first every unit header and declaration section is read (bodies are
skipped), then bodies are parsed with the complete symbol table. Syntax errors
abort the file; semantic errors are collected and parsing continues with an
error-typed placeholder so one mistake does not cascade.
"""
from __future__ import annotations

from dataclasses import dataclass

from ..expr import (
    BOOL, COMPARE_OPS, DINT, INT, LOGIC_OPS, ArrayType, Binary, Const, ElementaryType, Expr,
    Index, Span, Unary, Var, eval_expr, RuntimeFault,
)
from . import ast as A
from .lexer import Diagnostic, DiagnosticError, SourceUnit, Token, int_value, tokenize

ERR = ElementaryType("?", 0)

UNIT_END = {"PROGRAM": "END_PROGRAM", "FUNCTION_BLOCK": "END_FUNCTION_BLOCK", "FUNCTION": "END_FUNCTION"}
SECTIONS = {"VAR_INPUT": "input", "VAR_OUTPUT": "output", "VAR": "local", "VAR_TEMP": "temp"}
CONVERSIONS = {"INT_TO_DINT": ("TO_DINT", INT, DINT), "DINT_TO_INT": ("TO_INT", DINT, INT)}
_EOF = Token("eof", "", (0, 0))


class ParseError(DiagnosticError):
    pass


class _Abort(Exception):
    pass


@dataclass
class _Header:
    kind: str
    name: str
    decls: list
    return_type: ElementaryType | None
    span: Span
    body_start: int
    body_span_start: int
    parser: "_Parser"


class _Program:
    def __init__(self):
        self.headers: dict[str, _Header] = {}
        self.order: list[str] = []
        self.errors: list[Diagnostic] = []
        self.warnings: list[Diagnostic] = []


class _Parser:
    def __init__(self, unit: SourceUnit, tokens: list[Token], prog: _Program):
        self.src = unit
        self.toks = [t for t in tokens if t.kind != "comment"]
        end = len(unit.text)
        self.toks.append(Token("eof", "", (end, end)))
        self.i = 0
        self.prog = prog
        self.scope: dict[str, A.VarDecl] = {}
        self.unit: _Header | None = None
        self.loop_depth = 0

    # -- token helpers -----------------------------------------------------
    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, *values: str, k: int = 0) -> bool:
        t = self.peek(k)
        return t.kind != "identifier" and t.kind != "eof" and t.value in values

    def advance(self) -> Token:
        t = self.peek()
        self.i += 1
        return t

    def accept(self, value: str) -> Token | None:
        if self.at(value):
            return self.advance()
        return None

    def expect(self, *values: str) -> Token:
        if self.at(*values):
            return self.advance()
        self.syntax(values)

    def expect_ident(self) -> Token:
        if self.peek().kind == "identifier":
            return self.advance()
        self.syntax(("identifier",))

    def syntax(self, expected) -> None:
        t = self.peek()
        found = "end of input" if t.kind == "eof" else repr(t.lexeme)
        msg = f"syntax error: expected one of {{{', '.join(sorted(expected))}}}, found {found}"
        self.prog.errors.append(Diagnostic("error", msg, self.span_of(t)))
        raise _Abort()

    def span_of(self, t: Token, last: Token | None = None) -> Span:
        return self.src.span(t.span[0], (last or t).span[1])

    def span_from(self, first: Token) -> Span:
        last = self.toks[self.i - 1] if self.i > 0 else first
        return self.src.span(first.span[0], max(last.span[1], first.span[0]))

    def error(self, msg: str, span: Span) -> None:
        self.prog.errors.append(Diagnostic("error", msg, span))

    # -- phase 1: headers and declarations --------------------------------
    def parse_headers(self) -> None:
        while self.peek().kind != "eof":
            first = self.expect("PROGRAM", "FUNCTION_BLOCK", "FUNCTION")
            kind = first.value
            name_tok = self.expect_ident()
            name = name_tok.lexeme
            ret = None
            if kind == "FUNCTION":
                self.expect(":")
                ret = self.parse_elementary()
            hdr = _Header(kind, name, [], ret, self.span_of(first, name_tok), 0, 0, self)
            self.unit = hdr
            self.scope = {}
            if ret is not None:
                self.declare(A.VarDecl(name, ret, "output", None, self.span_of(name_tok)))
            while self.at("VAR_INPUT", "VAR_OUTPUT", "VAR", "VAR_TEMP"):
                self.parse_var_section()
            hdr.decls = list(self.scope.values())
            hdr.body_start = self.i
            hdr.body_span_start = self.toks[self.i - 1].span[1]
            end_kw = UNIT_END[kind]
            while not self.at(end_kw):
                if self.peek().kind == "eof":
                    self.syntax((end_kw,))
                if self.at("PROGRAM", "FUNCTION_BLOCK", "FUNCTION"):
                    self.syntax((end_kw,))
                self.advance()
            self.advance()
            self.accept(";")
            if name in self.prog.headers:
                self.error(f"duplicate declaration of unit '{name}'", hdr.span)
                continue
            self.prog.headers[name] = hdr
            self.prog.order.append(name)

    def declare(self, d: A.VarDecl) -> None:
        if d.name in self.scope:
            self.error(f"duplicate declaration of '{d.name}'", d.span)
            return
        self.scope[d.name] = d

    def parse_var_section(self) -> None:
        section = SECTIONS[self.advance().value]
        if section == "local" and self.accept("CONSTANT"):
            section = "constant"
        while not self.at("END_VAR"):
            names = [self.expect_ident()]
            while self.accept(","):
                names.append(self.expect_ident())
            self.expect(":")
            typ = self.parse_type()
            init = None
            if self.accept(":="):
                init = self.parse_initializer(typ)
            self.expect(";")
            if section == "constant" and init is None:
                self.error("constant requires an initializer", self.span_of(names[0]))
            if isinstance(typ, A.FbType) and (section != "local" or self.unit.kind == "FUNCTION"):
                self.error(f"function block instance '{names[0].lexeme}' must be declared in VAR of a "
                           "PROGRAM or FUNCTION_BLOCK", self.span_of(names[0]))
            if isinstance(typ, ArrayType) and section in ("input", "output") and self.unit.kind != "PROGRAM":
                self.error("array parameters are not supported", self.span_of(names[0]))
            for nt in names:
                self.declare(A.VarDecl(nt.lexeme, typ, section, init, self.span_of(nt)))
        self.expect("END_VAR")

    def parse_elementary(self) -> ElementaryType:
        t = self.expect("BOOL", "INT", "DINT")
        return {"BOOL": BOOL, "INT": INT, "DINT": DINT}[t.value]

    def parse_type(self):
        if self.at("BOOL", "INT", "DINT"):
            return self.parse_elementary()
        if self.accept("ARRAY"):
            first = self.peek()
            self.expect("[")
            lo = self.parse_const_int()
            self.expect("..")
            hi = self.parse_const_int()
            self.expect("]")
            self.expect("OF")
            if self.at("ARRAY"):
                self.error("multi-dimensional arrays are not supported", self.span_of(self.peek()))
            elem = self.parse_elementary()
            if lo > hi:
                self.error(f"array range {lo}..{hi} is empty", self.span_from(first))
                hi = lo
            return ArrayType(lo, hi, elem)
        t = self.expect_ident()
        return A.FbType(t.lexeme)

    def parse_initializer(self, typ):
        if isinstance(typ, ArrayType):
            first = self.peek()
            self.expect("[")
            vals = [self.parse_const_value(typ.elem)]
            while self.accept(","):
                vals.append(self.parse_const_value(typ.elem))
            self.expect("]")
            if len(vals) > typ.size:
                self.error("too many array initializer values", self.span_from(first))
                vals = vals[:typ.size]
            return tuple(vals) + (typ.elem.default(),) * (typ.size - len(vals))
        if isinstance(typ, A.FbType):
            self.syntax((";",))
        return self.parse_const_value(typ)

    def parse_const_value(self, typ: ElementaryType):
        first = self.peek()
        e = self.coerce(self.parse_expr(), typ, self.span_from(first))
        val = self.const_eval(e, self.span_from(first))
        return typ.default() if val is None else val

    def parse_const_int(self) -> int:
        first = self.peek()
        e = self.parse_expr()
        span = self.span_from(first)
        if e.type is ERR:
            return 0
        if not e.type.is_int:
            self.error("integer constant expected", span)
            return 0
        v = self.const_eval(e, span)
        return 0 if v is None else v

    def const_eval(self, e: Expr, span: Span):
        if e.type is ERR:
            return None
        values = {}
        from ..expr import free_vars
        for name in free_vars(e):
            d = self.scope.get(name)
            if d is None or d.section != "constant":
                self.error("constant expression expected", span)
                return None
            values[name] = d.init
        try:
            return eval_expr(e, values)
        except RuntimeFault as exc:
            self.error(f"constant expression faults: {exc.kind}", span)
            return None

    # -- phase 2: bodies ----------------------------------------------------
    def parse_body(self, hdr: _Header) -> A.ProgramUnit:
        self.unit = hdr
        self.scope = {d.name: d for d in hdr.decls}
        self.i = hdr.body_start
        self.loop_depth = 0
        body = self.parse_block(UNIT_END[hdr.kind], start=hdr.body_span_start)
        return A.ProgramUnit(hdr.kind, hdr.name, tuple(hdr.decls), body, hdr.return_type, hdr.span)

    def parse_block(self, *terminators: str, start: int | None = None) -> A.Block:
        if start is None:
            start = self.toks[self.i - 1].span[1]
        stmts = []
        while not self.at(*terminators):
            if self.peek().kind == "eof":
                self.syntax(terminators)
            stmts.append(self.parse_statement())
        end = self.peek().span[0]
        return A.Block(tuple(stmts), self.src.span(start, end))

    def parse_statement(self):
        t = self.peek()
        if t.kind == "identifier":
            return self.parse_assign_or_call()
        if self.accept(";"):
            return A.Empty(self.span_of(t))
        kw = t.value if t.kind == "keyword" else None
        if kw == "IF":
            return self.parse_if()
        if kw == "CASE":
            return self.parse_case()
        if kw == "FOR":
            return self.parse_for()
        if kw == "WHILE":
            return self.parse_while()
        if kw == "REPEAT":
            return self.parse_repeat()
        if kw == "RETURN":
            self.advance()
            self.expect(";")
            return A.Return(self.span_from(t))
        if kw == "EXIT":
            self.advance()
            self.expect(";")
            span = self.span_from(t)
            if self.loop_depth == 0:
                self.error("EXIT outside of a loop", span)
            return A.Exit(span)
        self.syntax(("identifier", "IF", "CASE", "FOR", "WHILE", "REPEAT", "RETURN", "EXIT", ";"))

    def parse_assign_or_call(self):
        first = self.peek()
        if self.at("(", k=1):
            name = self.advance().lexeme
            call = self.parse_call(name, first, None)
            self.expect(";")
            return self._respan(call, first)
        target = self.parse_lvalue()
        self.expect(":=")
        t = self.peek()
        if t.kind == "identifier" and self.at("(", k=1) and t.lexeme not in CONVERSIONS:
            name = self.advance().lexeme
            call = self.parse_call(name, t, target)
            if not self.at(";"):
                self.error("function calls are only supported as a whole right-hand side",
                           self.span_of(self.peek()))
                self.parse_expr_tail()
            self.expect(";")
            return self._respan(call, first)
        value = self.parse_expr()
        self.expect(";")
        span = self.span_from(first)
        if target is not None:
            value = self.coerce(value, target.type, span)
        return A.Assign(target if target is not None else Var("?", ERR), value, span)

    def parse_expr_tail(self):
        while not self.at(";") and self.peek().kind != "eof":
            self.advance()

    def _respan(self, call: A.Call, first: Token) -> A.Call:
        return A.Call(call.callee, call.instance, call.inputs, call.outputs, call.result_form,
                      self.span_from(first))

    def parse_lvalue(self):
        t = self.expect_ident()
        name = t.lexeme
        d = self.scope.get(name)
        if self.at("."):
            self.advance()
            self.expect_ident()
            self.error("assignment to a function block member is not supported", self.span_from(t))
            return None
        if d is None:
            self.error(f"undeclared identifier '{name}'", self.span_of(t))
            if self.accept("["):
                self.parse_expr()
                self.expect("]")
            return None
        if d.section == "constant":
            self.error(f"cannot assign to constant '{name}'", self.span_of(t))
        if isinstance(d.type, A.FbType):
            self.error(f"cannot assign to function block instance '{name}'", self.span_of(t))
            return None
        if isinstance(d.type, ArrayType):
            if not self.at("["):
                self.error(f"whole-array assignment to '{name}' is not supported", self.span_of(t))
                return None
            return self.parse_index(d, t)
        return Var(name, d.type)

    def parse_index(self, d: A.VarDecl, t: Token) -> Index:
        self.expect("[")
        idx = self.parse_expr()
        self.expect("]")
        span = self.span_from(t)
        if idx.type is not ERR and not idx.type.is_int:
            self.error("array index must be an integer", span)
        return Index(d.name, idx, d.type.elem, d.type.lo, d.type.hi, span)

    def parse_call(self, name: str, first: Token, result_target) -> A.Call:
        d = self.scope.get(name)
        callee_hdr = None
        instance = None
        if d is not None and isinstance(d.type, A.FbType):
            callee_hdr = self.prog.headers.get(d.type.name)
            instance = name
            if result_target is not None:
                self.error(f"function block instance '{name}' has no return value", self.span_of(first))
        elif d is None and name in self.prog.headers and self.prog.headers[name].kind == "FUNCTION":
            callee_hdr = self.prog.headers[name]
        else:
            what = "undeclared" if d is None and name not in self.prog.headers else "not callable"
            self.error(f"{what} callee '{name}'", self.span_of(first))
        self.expect("(")
        inputs, outputs = [], []
        positional = [p for p in callee_hdr.decls if p.section == "input"] if callee_hdr else []
        pos_index = 0
        if not self.at(")"):
            while True:
                if self.peek().kind == "identifier" and self.at(":=", "=>", k=1):
                    pname_tok = self.advance()
                    arrow = self.advance().lexeme
                    param = callee_hdr and next((p for p in callee_hdr.decls if p.name == pname_tok.lexeme), None)
                    if arrow == ":=":
                        e_first = self.peek()
                        val = self.parse_expr()
                        if callee_hdr is not None:
                            if param is None or param.section != "input":
                                self.error(f"'{pname_tok.lexeme}' is not an input of '{callee_hdr.name}'",
                                           self.span_of(pname_tok))
                            else:
                                inputs.append((param.name, self.coerce(val, param.type, self.span_from(e_first))))
                    else:
                        lv = self.parse_lvalue()
                        if callee_hdr is not None:
                            if param is None or param.section != "output" or param.name == callee_hdr.name:
                                self.error(f"'{pname_tok.lexeme}' is not an output of '{callee_hdr.name}'",
                                           self.span_of(pname_tok))
                            elif lv is not None:
                                self.check_output(param.type, lv, self.span_of(pname_tok))
                                outputs.append((param.name, lv))
                else:
                    e_first = self.peek()
                    val = self.parse_expr()
                    if callee_hdr is not None:
                        if pos_index >= len(positional):
                            self.error("too many positional arguments", self.span_from(e_first))
                        else:
                            p = positional[pos_index]
                            inputs.append((p.name, self.coerce(val, p.type, self.span_from(e_first))))
                    pos_index += 1
                if not self.accept(","):
                    break
        self.expect(")")
        seen = set()
        for pname, _ in inputs:
            if pname in seen:
                self.error(f"input '{pname}' bound twice", self.span_from(first))
            seen.add(pname)
        if result_target is not None and callee_hdr is not None:
            self.check_output(callee_hdr.return_type, result_target, self.span_from(first))
            outputs.insert(0, (callee_hdr.name, result_target))
        callee = callee_hdr.name if callee_hdr else name
        return A.Call(callee, instance, tuple(inputs), tuple(outputs), result_target is not None,
                      self.span_from(first))

    def check_output(self, ptype, lv, span):
        if ptype is None or lv.type is ERR:
            return
        if lv.type != ptype and not (lv.type == DINT and ptype == INT):
            self.error(f"type mismatch: cannot store {ptype} into {lv.type}", span)

    def parse_if(self):
        first = self.advance()
        branches = []
        cond = self.parse_cond()
        self.expect("THEN")
        body = self.parse_block("ELSIF", "ELSE", "END_IF")
        branches.append((cond, body))
        else_body = None
        while True:
            if self.accept("ELSIF"):
                cond = self.parse_cond()
                self.expect("THEN")
                branches.append((cond, self.parse_block("ELSIF", "ELSE", "END_IF")))
                continue
            if self.accept("ELSE"):
                else_body = self.parse_block("END_IF")
            break
        self.expect("END_IF")
        self.accept(";")
        return A.If(tuple(branches), else_body, self.span_from(first))

    def parse_cond(self) -> Expr:
        first = self.peek()
        e = self.parse_expr()
        if e.type is not ERR and e.type != BOOL:
            self.error(f"type mismatch: condition must be BOOL, found {e.type}", self.span_from(first))
        return e

    def parse_case(self):
        first = self.advance()
        sel_first = self.peek()
        selector = self.parse_expr()
        if selector.type is not ERR and not selector.type.is_int:
            self.error("CASE selector must be an integer", self.span_from(sel_first))
        self.expect("OF")
        arms = []
        else_body = None
        while not self.at("END_CASE"):
            if self.accept("ELSE"):
                else_body = self.parse_block("END_CASE")
                break
            labels = [self.parse_case_label()]
            while self.accept(","):
                labels.append(self.parse_case_label())
            self.expect(":")
            body = self.parse_block_until_case_label()
            arms.append(A.CaseArm(tuple(labels), body))
        self.expect("END_CASE")
        self.accept(";")
        if not arms:
            self.error("CASE needs at least one arm", self.span_from(first))
        return A.Case(selector, tuple(arms), else_body, self.span_from(first))

    def parse_case_label(self):
        lo = self.parse_const_int()
        hi = lo
        if self.accept(".."):
            hi = self.parse_const_int()
        return (lo, hi)

    def _at_case_label(self) -> bool:
        # a new arm starts with a constant (possibly negative) followed by ':' , ',' or '..'
        k = 0
        if self.at("-"):
            k = 1
        t = self.peek(k)
        if t.kind == "integer-literal" or (t.kind == "identifier" and self.scope.get(t.lexeme) is not None
                                             and self.scope[t.lexeme].section == "constant"):
            return self.at(":", ",", "..", k=k + 1) and not self.at(":=", k=k + 1)
        return False

    def parse_block_until_case_label(self) -> A.Block:
        start = self.toks[self.i - 1].span[1]
        stmts = []
        while not self.at("END_CASE", "ELSE") and not self._at_case_label():
            if self.peek().kind == "eof":
                self.syntax(("END_CASE",))
            stmts.append(self.parse_statement())
        return A.Block(tuple(stmts), self.src.span(start, self.peek().span[0]))

    def parse_for(self):
        first = self.advance()
        vt = self.expect_ident()
        d = self.scope.get(vt.lexeme)
        var = None
        if d is None:
            self.error(f"undeclared identifier '{vt.lexeme}'", self.span_of(vt))
        elif not isinstance(d.type, ElementaryType) or not d.type.is_int or d.section == "constant":
            self.error("FOR variable must be an integer variable", self.span_of(vt))
        else:
            var = Var(d.name, d.type)
        self.expect(":=")
        typ = var.type if var is not None else ERR
        s_first = self.peek()
        start = self.coerce(self.parse_expr(), typ, self.span_from(s_first))
        self.expect("TO")
        s_first = self.peek()
        stop = self.coerce(self.parse_expr(), typ, self.span_from(s_first))
        step = 1
        if self.accept("BY"):
            step = self.parse_const_int()
            if step == 0:
                self.error("FOR step must not be zero", self.span_from(first))
                step = 1
        self.expect("DO")
        self.loop_depth += 1
        body = self.parse_block("END_FOR")
        self.loop_depth -= 1
        self.expect("END_FOR")
        self.accept(";")
        return A.For(var if var is not None else Var("?", ERR), start, stop, step, body, self.span_from(first))

    def parse_while(self):
        first = self.advance()
        cond = self.parse_cond()
        self.expect("DO")
        self.loop_depth += 1
        body = self.parse_block("END_WHILE")
        self.loop_depth -= 1
        self.expect("END_WHILE")
        self.accept(";")
        return A.While(cond, body, self.span_from(first))

    def parse_repeat(self):
        first = self.advance()
        self.loop_depth += 1
        body = self.parse_block("UNTIL")
        self.loop_depth -= 1
        self.expect("UNTIL")
        cond = self.parse_cond()
        self.expect("END_REPEAT")
        self.accept(";")
        return A.Repeat(body, cond, self.span_from(first))

    # -- expressions -------------------------------------------------------
    def parse_expr(self) -> Expr:
        return self._binary_level(0)

    _LEVELS = (("OR",), ("XOR",), ("AND",), COMPARE_OPS, ("+", "-"), ("*", "/", "MOD"))

    def _binary_level(self, level: int) -> Expr:
        if level == len(self._LEVELS):
            return self.parse_unary()
        first = self.peek()
        left = self._binary_level(level + 1)
        ops = self._LEVELS[level]
        while self.at(*ops):
            op_tok = self.advance()
            right = self._binary_level(level + 1)
            left = self.binop(op_tok.value, left, right, self.span_from(first))
        return left

    def parse_unary(self) -> Expr:
        t = self.peek()
        if self.accept("NOT"):
            arg = self.parse_unary()
            if arg.type is ERR:
                return arg
            if arg.type != BOOL:
                self.error(f"type mismatch: NOT applied to {arg.type}", self.span_from(t))
                return Const(False, ERR)
            return Unary("NOT", arg, BOOL)
        if self.accept("-"):
            literal = self.peek().kind == "integer-literal"
            arg = self.parse_unary()
            if arg.type is ERR:
                return arg
            if not arg.type.is_int:
                self.error(f"type mismatch: unary minus applied to {arg.type}", self.span_from(t))
                return Const(0, ERR)
            if literal and isinstance(arg, Const):
                v = -arg.value
                if v < DINT.lo:
                    self.error("integer literal out of range", self.span_from(t))
                    return Const(0, ERR)
                return Const(v, INT if INT.lo <= v <= INT.hi else DINT)
            return Unary("NEG", arg, arg.type)
        return self.parse_primary()

    def _negated(self) -> bool:
        prev = self.toks[self.i - 2] if self.i >= 2 else None
        return prev is not None and prev.kind == "operator" and prev.lexeme == "-"

    def parse_primary(self) -> Expr:
        t = self.peek()
        if t.kind == "integer-literal":
            self.advance()
            v = int_value(t.lexeme)
            if v > DINT.hi + 1 or (v == DINT.hi + 1 and not self._negated()):
                self.error(f"integer literal {t.lexeme} out of range", self.span_of(t))
                return Const(0, ERR)
            return Const(v, INT if v <= INT.hi else DINT)
        if t.kind == "boolean-literal":
            self.advance()
            return Const(t.value == "TRUE", BOOL)
        if self.accept("("):
            e = self.parse_expr()
            self.expect(")")
            return e
        if t.kind == "identifier":
            self.advance()
            name = t.lexeme
            if name in CONVERSIONS and self.at("("):
                op, src, dst = CONVERSIONS[name]
                self.advance()
                arg = self.parse_expr()
                self.expect(")")
                if arg.type is ERR:
                    return Const(0, ERR)
                if arg.type != src:
                    if isinstance(arg, Const) and src == DINT and arg.type == INT:
                        arg = Const(arg.value, DINT)
                    else:
                        self.error(f"type mismatch: {name} expects {src}, found {arg.type}", self.span_from(t))
                        return Const(0, ERR)
                return Unary(op, arg, dst)
            if self.at("("):
                self.error("function calls are only supported as a whole right-hand side", self.span_of(t))
                depth = 0
                while True:
                    if self.at("("):
                        depth += 1
                    elif self.at(")"):
                        depth -= 1
                        if depth == 0:
                            self.advance()
                            break
                    elif self.peek().kind == "eof":
                        break
                    self.advance()
                return Const(0, ERR)
            d = self.scope.get(name)
            if d is None:
                if self.at("["):
                    self.advance()
                    self.parse_expr()
                    self.expect("]")
                self.error(f"undeclared identifier '{name}'", self.span_of(t))
                return Const(0, ERR)
            if isinstance(d.type, A.FbType):
                self.expect(".")
                m = self.expect_ident()
                hdr = self.prog.headers.get(d.type.name)
                if hdr is None:
                    return Const(0, ERR)
                md = next((p for p in hdr.decls if p.name == m.lexeme and p.section in ("input", "output")), None)
                if md is None:
                    self.error(f"'{m.lexeme}' is not a parameter of '{hdr.name}'", self.span_from(t))
                    return Const(0, ERR)
                return Var(f"{name}.{md.name}", md.type)
            if isinstance(d.type, ArrayType):
                if not self.at("["):
                    self.error(f"array '{name}' used without an index", self.span_of(t))
                    return Const(0, ERR)
                return self.parse_index(d, t)
            return Var(name, d.type)
        self.syntax(("expression",))

    def binop(self, op: str, left: Expr, right: Expr, span: Span) -> Expr:
        if left.type is ERR or right.type is ERR:
            return Const(False, ERR)
        if op in LOGIC_OPS:
            if left.type != BOOL or right.type != BOOL:
                return self._mismatch(op, left, right, span)
            return Binary(op, left, right, BOOL, span)
        if op in ("=", "<>") and left.type == BOOL and right.type == BOOL:
            return Binary(op, left, right, BOOL, span)
        if not (left.type.is_int and right.type.is_int):
            return self._mismatch(op, left, right, span)
        left, right = unify(left, right)
        if op in COMPARE_OPS:
            return Binary(op, left, right, BOOL, span)
        return Binary(op, left, right, left.type, span if op in ("/", "MOD") else None)

    def _mismatch(self, op, left, right, span):
        self.error(f"type mismatch: {left.type} {op} {right.type}", span)
        return Const(False, ERR)

    def coerce(self, e: Expr, typ, span: Span) -> Expr:
        if typ is ERR or e.type is ERR or e.type == typ:
            return e
        if typ == DINT and e.type == INT:
            return widen(e)
        if typ == INT and e.type == DINT and isinstance(e, Const) and INT.lo <= e.value <= INT.hi:
            return Const(e.value, INT)
        self.error(f"type mismatch: cannot assign {e.type} to {typ}", span)
        return e


def widen(e: Expr) -> Expr:
    if isinstance(e, Const):
        return Const(e.value, DINT)
    return Unary("TO_DINT", e, DINT)


def unify(left: Expr, right: Expr):
    if left.type == right.type:
        return left, right
    if left.type == INT:
        return widen(left), right
    return left, widen(right)


def parse_units(units: list[SourceUnit]) -> A.TypedAst:
    """Parse and resolve several files into one namespace."""
    prog = _Program()
    parsers = []
    for unit in units:
        try:
            tokens = tokenize(unit)
        except DiagnosticError as exc:
            prog.errors.extend(exc.diagnostics)
            continue
        p = _Parser(unit, tokens, prog)
        parsers.append(p)
        try:
            p.parse_headers()
        except _Abort:
            pass
    if prog.errors:
        raise ParseError(prog.errors)
    for name in prog.order:
        hdr = prog.headers[name]
        for d in hdr.decls:
            if isinstance(d.type, A.FbType):
                target = prog.headers.get(d.type.name)
                if target is None or target.kind != "FUNCTION_BLOCK":
                    hdr.parser.error(f"unknown function block type '{d.type.name}'", d.span)
    if prog.errors:
        raise ParseError(prog.errors)
    result = []
    for name in prog.order:
        hdr = prog.headers[name]
        try:
            result.append(hdr.parser.parse_body(hdr))
        except _Abort:
            pass
    if prog.errors:
        raise ParseError(prog.errors)
    for u in units:
        u.declarations = [r for r in result if r.span.path == u.path]
    return A.TypedAst(tuple(result), tuple(prog.warnings))


def parse(unit: SourceUnit) -> A.TypedAst:
    return parse_units([unit])


def parse_source(text: str, path: str = "<input>") -> A.TypedAst:
    return parse(SourceUnit(path, text))


def parse_expression(text: str, ast: A.TypedAst, unit_name: str, path: str = "<expr>",
                     offset: int = 0, source: SourceUnit | None = None) -> Expr:
    """Parse a standalone expression in the scope of `unit_name`.

    `offset` shifts spans so diagnostics point into an enclosing file (used for
    assertion comments); `source` supplies that file for line numbers.
    """
    spans_src = source if source is not None else SourceUnit(path, " " * offset + text)
    toks = tokenize(SourceUnit(spans_src.path, " " * offset + text))
    prog = _Program()
    for u in ast.units:
        prog.headers[u.name] = _Header(u.kind, u.name, list(u.decls), u.return_type, u.span, 0, 0, None)
    p = _Parser(spans_src, toks, prog)
    unit = ast.unit(unit_name)
    p.unit = prog.headers[unit_name]
    p.scope = {d.name: d for d in unit.decls}
    try:
        e = p.parse_expr()
        if p.peek().kind != "eof":
            p.syntax(("end of expression",))
    except _Abort:
        pass
    if prog.errors:
        raise ParseError(prog.errors)
    return e

"""Elementary types and the typed expression tree shared by the parser and the CFA.

Expressions are immutable dataclasses. Source spans are carried where a
runtime fault can be attributed (division, MOD, array indexing) and are
excluded from equality so structurally identical trees compare equal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Union


@dataclass(frozen=True)
class Span:
    path: str
    start: int
    end: int
    line: int = 0
    col: int = 0

    def __str__(self) -> str:
        return f"{self.path}:{self.line}:{self.col}"


@dataclass(frozen=True)
class ElementaryType:
    name: str
    bits: int

    @property
    def is_bool(self) -> bool:
        return self.name == "BOOL"

    @property
    def is_int(self) -> bool:
        return self.name != "BOOL"

    @property
    def lo(self) -> int:
        return 0 if self.is_bool else -(1 << (self.bits - 1))

    @property
    def hi(self) -> int:
        return 1 if self.is_bool else (1 << (self.bits - 1)) - 1

    def values(self):
        if self.is_bool:
            return (False, True)
        return range(self.lo, self.hi + 1)

    def default(self):
        return False if self.is_bool else 0

    def wrap(self, x: int) -> int:
        half = 1 << (self.bits - 1)
        return ((x + half) & ((1 << self.bits) - 1)) - half

    def __str__(self) -> str:
        return self.name


BOOL = ElementaryType("BOOL", 1)
INT = ElementaryType("INT", 16)
DINT = ElementaryType("DINT", 32)


@dataclass(frozen=True)
class ArrayType:
    lo: int
    hi: int
    elem: ElementaryType

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty array range {self.lo}..{self.hi}")

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def default(self):
        return (self.elem.default(),) * self.size

    def __str__(self) -> str:
        return f"ARRAY[{self.lo}..{self.hi}] OF {self.elem}"


Type = Union[ElementaryType, ArrayType]


class RuntimeFault(Exception):
    """Division by zero or an out-of-range array index reached during execution."""

    def __init__(self, kind: str, span: Span | None, detail: str = ""):
        self.kind = kind
        self.span = span
        self.detail = detail
        where = f" at {span}" if span else ""
        super().__init__(f"{kind}{where}{': ' + detail if detail else ''}")


# ---------------------------------------------------------------------------
# expression nodes


@dataclass(frozen=True)
class Const:
    value: Union[bool, int]
    type: ElementaryType


@dataclass(frozen=True)
class Var:
    name: str
    type: ElementaryType


@dataclass(frozen=True)
class Index:
    array: str
    index: "Expr"
    type: ElementaryType
    lo: int
    hi: int
    span: Span | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Unary:
    op: str  # NOT, NEG, TO_DINT, TO_INT
    arg: "Expr"
    type: ElementaryType


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    type: ElementaryType
    span: Span | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Nondet:
    """Marks a value chosen nondeterministically from the target's domain."""

    type: ElementaryType


Expr = Union[Const, Var, Index, Unary, Binary, Nondet]

TRUE = Const(True, BOOL)
FALSE = Const(False, BOOL)

LOGIC_OPS = ("AND", "OR", "XOR")
COMPARE_OPS = ("=", "<>", "<", "<=", ">", ">=")
ARITH_OPS = ("+", "-", "*", "/", "MOD")


def const(value: Union[bool, int], typ: ElementaryType | None = None) -> Const:
    if isinstance(value, bool):
        return Const(value, BOOL)
    if typ is None:
        typ = INT if INT.lo <= value <= INT.hi else DINT
    return Const(value, typ)


def lvalue_name(e: Expr) -> str:
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Index):
        return e.array
    raise TypeError(f"not an lvalue: {e!r}")


def children(e: Expr) -> tuple:
    if isinstance(e, (Const, Var, Nondet)):
        return ()
    if isinstance(e, Index):
        return (e.index,)
    if isinstance(e, Unary):
        return (e.arg,)
    return (e.left, e.right)


def walk(e: Expr) -> Iterator[Expr]:
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def free_vars(e: Expr) -> set[str]:
    """Variable names read by `e`; arrays are reported by their base name."""
    out = set()
    for node in walk(e):
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, Index):
            out.add(node.array)
    return out


def map_expr(e: Expr, fn: Callable[[Expr], Expr | None]) -> Expr:
    """Bottom-up rebuild; `fn` may return a replacement for a node or None to keep it."""
    if isinstance(e, Index):
        idx = map_expr(e.index, fn)
        if idx is not e.index:
            e = Index(e.array, idx, e.type, e.lo, e.hi, e.span)
    elif isinstance(e, Unary):
        arg = map_expr(e.arg, fn)
        if arg is not e.arg:
            e = Unary(e.op, arg, e.type)
    elif isinstance(e, Binary):
        left, right = map_expr(e.left, fn), map_expr(e.right, fn)
        if left is not e.left or right is not e.right:
            e = Binary(e.op, left, right, e.type, e.span)
    repl = fn(e)
    return e if repl is None else repl


def rename(e: Expr, mapping: Callable[[str], str]) -> Expr:
    def fn(node):
        if isinstance(node, Var):
            return Var(mapping(node.name), node.type)
        if isinstance(node, Index):
            return Index(mapping(node.array), node.index, node.type, node.lo, node.hi, node.span)
        return None

    return map_expr(e, fn)


def substitute(e: Expr, values: Mapping[str, Expr]) -> Expr:
    def fn(node):
        if isinstance(node, Var) and node.name in values:
            return values[node.name]
        return None

    return map_expr(e, fn)


def may_fault(e: Expr) -> bool:
    """True unless every division/MOD divisor and array index is a safe constant."""
    for node in walk(e):
        if isinstance(node, Binary) and node.op in ("/", "MOD"):
            if not (isinstance(node.right, Const) and node.right.value != 0):
                return True
        elif isinstance(node, Index):
            if not (isinstance(node.index, Const) and node.lo <= node.index.value <= node.hi):
                return True
    return False


# ---------------------------------------------------------------------------
# semantics


def int_div(a: int, b: int, typ: ElementaryType, span: Span | None = None) -> int:
    if b == 0:
        raise RuntimeFault("division-by-zero", span)
    q = abs(a) // abs(b)
    if (a < 0) != (b < 0):
        q = -q
    return typ.wrap(q)


def int_mod(a: int, b: int, span: Span | None = None) -> int:
    if b == 0:
        raise RuntimeFault("division-by-zero", span)
    q = abs(a) // abs(b)
    if (a < 0) != (b < 0):
        q = -q
    return a - b * q


def check_index(i: int, lo: int, hi: int, span: Span | None = None) -> int:
    if i < lo or i > hi:
        raise RuntimeFault("index-out-of-range", span, f"index {i} not in [{lo}..{hi}]")
    return i - lo


def eval_expr(e: Expr, s: Mapping[str, object]):
    """Evaluate `e` under valuation `s`.

    Arrays are stored in `s` under their base name as a sequence indexed from
    the declared lower bound. Both operands of AND/OR are always evaluated, so a
    fault on the right-hand side is never masked.
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return s[e.name]
    if isinstance(e, Index):
        i = eval_expr(e.index, s)
        return s[e.array][check_index(i, e.lo, e.hi, e.span)]
    if isinstance(e, Unary):
        v = eval_expr(e.arg, s)
        if e.op == "NOT":
            return not v
        if e.op == "NEG":
            return e.type.wrap(-v)
        return e.type.wrap(v)
    if isinstance(e, Nondet):
        raise ValueError("nondeterministic choice has no value")
    a = eval_expr(e.left, s)
    b = eval_expr(e.right, s)
    op = e.op
    if op == "AND":
        return a and b
    if op == "OR":
        return a or b
    if op == "XOR":
        return a != b
    if op == "=":
        return a == b
    if op == "<>":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    if op == "+":
        return e.type.wrap(a + b)
    if op == "-":
        return e.type.wrap(a - b)
    if op == "*":
        return e.type.wrap(a * b)
    if op == "/":
        return int_div(a, b, e.type, e.span)
    if op == "MOD":
        return int_mod(a, b, e.span)
    raise ValueError(f"unknown operator {op}")


class PyCodegen:
    """Translates expressions into Python source over a flat slot list `v`.

    Used by the explicit-state checker and the brute-force oracle; both reach the
    same results as `eval_expr`, which the test-suite checks on random trees.
    """

    def __init__(self, slot_of: Callable[[str], int]):
        self.slot_of = slot_of
        self.spans: list[Span | None] = []
        self.namespace = {
            "_div": self._div,
            "_mod": self._mod,
            "_idx": self._idx,
        }

    def _div(self, a, b, bits, sid):
        return int_div(a, b, INT if bits == 16 else DINT, self.spans[sid])

    def _mod(self, a, b, sid):
        return int_mod(a, b, self.spans[sid])

    def _idx(self, i, lo, hi, sid):
        if i < lo or i > hi:
            raise RuntimeFault("index-out-of-range", self.spans[sid], f"index {i} not in [{lo}..{hi}]")
        return i - lo

    def _sid(self, span):
        self.spans.append(span)
        return len(self.spans) - 1

    def index_offset(self, e: Index) -> str:
        if isinstance(e.index, Const) and e.lo <= e.index.value <= e.hi:
            return str(self.slot_of(e.array) + e.index.value - e.lo)
        sid = self._sid(e.span)
        return f"{self.slot_of(e.array)}+_idx({self.source(e.index)},{e.lo},{e.hi},{sid})"

    def source(self, e: Expr) -> str:
        if isinstance(e, Const):
            return repr(e.value)
        if isinstance(e, Var):
            return f"v[{self.slot_of(e.name)}]"
        if isinstance(e, Index):
            return f"v[{self.index_offset(e)}]"
        if isinstance(e, Unary):
            a = self.source(e.arg)
            if e.op == "NOT":
                return f"(not {a})"
            if e.op == "NEG":
                return _wrap_src(f"-{a}", e.type)
            return _wrap_src(a, e.type) if e.op == "TO_INT" else a
        if isinstance(e, Nondet):
            raise ValueError("nondeterministic choice has no value")
        a, b = self.source(e.left), self.source(e.right)
        op = e.op
        if op == "AND":
            return f"({a} & {b})"
        if op == "OR":
            return f"({a} | {b})"
        if op in ("XOR", "<>"):
            return f"({a} != {b})"
        if op == "=":
            return f"({a} == {b})"
        if op in ("<", "<=", ">", ">="):
            return f"({a} {op} {b})"
        if op in ("+", "-", "*"):
            return _wrap_src(f"{a} {op} {b}", e.type)
        if op == "/":
            return f"_div({a}, {b}, {e.type.bits}, {self._sid(e.span)})"
        if op == "MOD":
            return f"_mod({a}, {b}, {self._sid(e.span)})"
        raise ValueError(f"unknown operator {op}")

    def function(self, e: Expr) -> Callable:
        return eval(f"lambda v: {self.source(e)}", self.namespace)


def _wrap_src(src: str, typ: ElementaryType) -> str:
    half = 1 << (typ.bits - 1)
    mask = (1 << typ.bits) - 1
    return f"((((({src}) + {half}) & {mask}) - {half}))"


# ---------------------------------------------------------------------------
# rendering in Structured Text syntax

_PREC = {"OR": 1, "XOR": 2, "AND": 3, "=": 4, "<>": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
         "+": 5, "-": 5, "*": 6, "/": 6, "MOD": 6}


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op in ("NOT", "NEG"):
        return 7
    if isinstance(e, Const) and isinstance(e.value, int) and not isinstance(e.value, bool) and e.value < 0:
        return 7
    return 8


def to_st(e: Expr) -> str:
    if isinstance(e, Const):
        if isinstance(e.value, bool):
            return "TRUE" if e.value else "FALSE"
        if e.type == DINT and INT.lo <= e.value <= INT.hi:
            # a bare literal in this range would read back as INT
            return f"INT_TO_DINT({e.value})"
        return str(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Index):
        return f"{e.array}[{to_st(e.index)}]"
    if isinstance(e, Nondet):
        return f"NONDET({e.type})"
    if isinstance(e, Unary):
        if e.op == "TO_DINT":
            return f"INT_TO_DINT({to_st(e.arg)})"
        if e.op == "TO_INT":
            return f"DINT_TO_INT({to_st(e.arg)})"
        inner = to_st(e.arg)
        if _prec(e.arg) < 7 or (e.op == "NEG" and isinstance(e.arg, (Const, Unary))):
            inner = f"({inner})"
        return f"NOT {inner}" if e.op == "NOT" else f"-{inner}"
    p = _PREC[e.op]
    left, right = to_st(e.left), to_st(e.right)
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"

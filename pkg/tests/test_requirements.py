import pytest

from stverif.cfa import ASSERTION, END_OF_CYCLE, build_cfa
from stverif.engine import SATISFIED, VIOLATED, check
from stverif.expr import BOOL, Binary, Const, Unary, Var, walk
from stverif.reductions import reduce_problem
from stverif.requirements import (PATTERNS, RequirementError, assertions_to_problems, instantiate_pattern,
                                  restrict_inputs)
from stverif.stparser import SourceUnit, extract_assertions, parse_expression, parse_source, parse_units, tokenize

SRC = """PROGRAM P
VAR_INPUT cmd : BOOL; en : BOOL; n : INT; END_VAR
VAR out : BOOL; On : BOOL; Off : BOOL; END_VAR
out := cmd AND en;
On := cmd; Off := NOT cmd;
//#ASSERT On<>Off
//#ASSERT:second out OR NOT cmd
//#ASSERT n < 100 OR TRUE
END_PROGRAM
"""


def net_and_ast(src=SRC):
    ast = parse_source(src)
    return build_cfa(ast, "P"), ast


def expr(text, ast):
    return parse_expression(text, ast, "P")


def test_one_problem_per_assertion(problems):
    ps = problems(SRC)
    assert [p.property.label for p in ps] == ["A1", "second", "A2"]
    assert len({p.provenance for p in ps}) == 3
    assert all(p.property.at == frozenset({ASSERTION}) for p in ps)
    # count does not depend on reductions
    assert len([reduce_problem(p)[0] for p in ps]) == 3


def test_micro_example_property(problems):
    p = next(q for q in problems(SRC) if q.property.label == "A1")
    e = p.property.expr
    assert isinstance(e, Binary) and e.op == "<>"
    assert {e.left.name, e.right.name} == {"On", "Off"}


def test_no_assertions_is_an_error():
    net, _ = net_and_ast("PROGRAM P VAR a : BOOL; END_VAR a := TRUE; END_PROGRAM")
    with pytest.raises(RequirementError, match="no assertions"):
        assertions_to_problems(net)


def test_select_unknown_label():
    unit = SourceUnit("x.st", SRC)
    ast = parse_units([unit])
    net = build_cfa(ast, "P", extract_assertions(tokenize(unit), ast, unit))
    assert [p.property.label for p in assertions_to_problems(net, select=["second"])] == ["second"]
    with pytest.raises(RequirementError, match="unknown assertion 'nope'"):
        assertions_to_problems(net, select=["nope"])


def test_p1_is_implication_at_end_of_cycle():
    net, ast = net_and_ast()
    a, b = expr("cmd", ast), expr("out", ast)
    p = instantiate_pattern("P1", {"alpha": a, "beta": b}, net)
    assert p.property.at == frozenset({END_OF_CYCLE})
    assert p.property.expr == Binary("OR", Unary("NOT", a, BOOL), b, BOOL)
    assert "cmd" in p.provenance and "out" in p.provenance


def test_p2_p3_shapes_and_aliases():
    net, ast = net_and_ast()
    a, b = expr("cmd", ast), expr("en", ast)
    assert instantiate_pattern("P2", {"β": b}, net).property.expr == b
    p3 = instantiate_pattern("P3", {"α": a, "β": b}, net).property.expr
    assert p3 == Unary("NOT", Binary("AND", a, b, BOOL), BOOL)


def test_p2_true_is_satisfied():
    net, _ = net_and_ast()
    p = instantiate_pattern("P2", {"beta": Const(True, BOOL)}, net)
    assert check(p).kind == SATISFIED


@pytest.mark.parametrize("pid,bindings,msg", [
    ("P9", {}, "unknown pattern"),
    ("P1", {"alpha": Var("cmd", BOOL)}, "unbound"),
    ("P1", {"alpha": Var("cmd", BOOL), "beta": Var("n", BOOL)}, None),
])
def test_pattern_errors(pid, bindings, msg):
    net, ast = net_and_ast()
    if msg is None:
        bindings = {"alpha": Var("cmd", BOOL), "beta": expr("n + 1", ast)}
        msg = "must be BOOL"
    with pytest.raises(RequirementError, match=msg):
        instantiate_pattern(pid, bindings, net)


def test_pattern_rejects_unknown_variable():
    net, _ = net_and_ast()
    with pytest.raises(RequirementError, match="not a variable"):
        instantiate_pattern("P2", {"beta": Var("ghost", BOOL)}, net)


def test_bindings_appear_structurally():
    net, ast = net_and_ast()
    a, b = expr("cmd AND en", ast), expr("NOT out", ast)
    for pid, pat in PATTERNS.items():
        bindings = {"alpha": a, "beta": b}
        e = instantiate_pattern(pid, bindings, net).property.expr
        subs = list(walk(e))
        for ph in pat.placeholders:
            assert any(s == bindings[ph] for s in subs)


def test_p1_violation_on_crafted_program():
    src = "PROGRAM P VAR_INPUT x : BOOL; END_VAR VAR a : BOOL; b : BOOL; END_VAR a := x; b := FALSE; END_PROGRAM"
    net, ast = net_and_ast(src)
    p = instantiate_pattern("P1", {"alpha": expr("a", ast), "beta": expr("b", ast)}, net)
    v = check(p)
    assert v.kind == VIOLATED and v.trace.cycles[0].input_dict() == {"x": True}


def test_restrict_inputs(problems):
    p = problems(SRC)[0]
    r = restrict_inputs(p, {"n": [3, 1, 1]})
    assert r.net.var("n").domain == (1, 3)
    assert r.reference.var("n").domain == (1, 3)
    with pytest.raises(RequirementError, match="not a scalar input"):
        restrict_inputs(p, {"out": [True]})
    with pytest.raises(RequirementError, match="unknown input"):
        restrict_inputs(p, {"zz": [1]})
    with pytest.raises(RequirementError, match="outside"):
        restrict_inputs(p, {"n": [70000]})

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from stverif.engine import SATISFIED, EngineConfig, comparable, branching_factor, check, concrete_net
from stverif.requirements import restrict_inputs
from stverif.expr import INT, Binary, Const
from stverif.reductions import (cone_of_influence, constant_fold, eliminate_unreachable, fold_expr, reduce_problem,
                                value_set_abstraction)

import progen

PASSES = [constant_fold, eliminate_unreachable, cone_of_influence]
SLOW = settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def prog(problems, decl, body):
    return problems(f"PROGRAM P {decl}\n{body}\nEND_PROGRAM\n")[0]


def names(p):
    return {v.name for v in p.net.variables}


def assigned(p):
    return {a.target.name for t in p.net.main.transitions for a in t.assignments if hasattr(a.target, "name")}


def test_coi_drops_irrelevant_variable(problems):
    p = prog(problems, "VAR_INPUT a : BOOL; b : BOOL; END_VAR VAR q : BOOL; z : INT; END_VAR",
             "z := z + 1; q := a OR b;\n//#ASSERT q OR NOT a")
    r, rep = cone_of_influence(p)
    assert "z" not in names(r) and "z" in rep.detail["removed_variables"]
    assert rep.variables_removed == 1
    # dropping the counter lets exploration close: bounded and exhaustive no-violation are equivalent here
    assert check(r, EngineConfig(K=3)).kind == SATISFIED
    assert comparable(check(p, EngineConfig(K=3)).kind) == comparable(SATISFIED)


def test_coi_identity_when_everything_is_read(problems):
    p = prog(problems, "VAR_INPUT a : BOOL; END_VAR VAR q : BOOL; END_VAR", "q := a;\n//#ASSERT q = a")
    r, rep = cone_of_influence(p)
    assert rep.before == rep.after and names(r) == names(p)


def test_coi_keeps_control_dependence(problems):
    p = prog(problems, "VAR_INPUT c : BOOL; END_VAR VAR x : INT; y : INT; END_VAR",
             "y := 3; IF c THEN x := x + 1; END_IF;\n//#ASSERT x < 2")
    r, _ = cone_of_influence(p)
    assert {"c", "x"} <= names(r) and "y" not in names(r)
    assert check(r).kind == check(p).kind != SATISFIED


def test_coi_keeps_fault_sources(problems):
    p = prog(problems, "VAR_INPUT n : INT; END_VAR VAR z : INT; q : BOOL; END_VAR",
             "z := 1 / n; q := TRUE;\n//#ASSERT q")
    p = restrict_inputs(p, {"n": [0, 1]})
    r, _ = cone_of_influence(p)
    assert check(r).kind == check(p).kind == "fault"


def test_fold_removes_false_guards_and_folds_arithmetic(problems):
    p = prog(problems, "VAR_INPUT a : BOOL; END_VAR VAR x : INT; q : BOOL; END_VAR",
             "x := 2 + 3; IF 1 = 2 THEN q := TRUE; END_IF;\n//#ASSERT NOT q OR a")
    r, rep = constant_fold(p)
    values = [a.value for t in r.net.main.transitions for a in t.assignments if getattr(a.target, "name", "") == "x"]
    assert values == [Const(5, INT)]
    assert rep.constants_folded > 0 and rep.transitions_removed >= 1
    r2, rep2 = eliminate_unreachable(r)
    assert rep2.locations_removed >= 1
    assert check(r2).kind == check(p).kind == SATISFIED


def test_fold_wraps():
    assert fold_expr(Binary("+", Const(32767, INT), Const(1, INT), INT)) == Const(-32768, INT)


def test_unreachable_identity_on_reachable_automaton(problems):
    p = prog(problems, "VAR_INPUT a : BOOL; END_VAR VAR q : BOOL; END_VAR",
             "IF a THEN q := TRUE; ELSE q := FALSE; END_IF;\n//#ASSERT q = a")
    r, rep = eliminate_unreachable(p)
    assert rep.before == rep.after and r.net == concrete_net(p)


def test_value_set_boundaries(problems):
    p = prog(problems, "VAR_INPUT i : INT; END_VAR VAR q : BOOL; END_VAR", "q := i > 5;\n//#ASSERT NOT q OR i > 0")
    r, rep = value_set_abstraction(p, "i")
    assert not rep.refused
    # constants 5 and 0 both bound i
    assert r.net.var("i").domain == (-32768, -1, 0, 1, 4, 5, 6, 32767)
    assert branching_factor(concrete_net(p)) == 65536
    assert check(r, EngineConfig(K=2)).kind == check(p, EngineConfig(K=2)).kind


def test_value_set_single_boundary(problems):
    p = prog(problems, "VAR_INPUT i : INT; END_VAR VAR q : BOOL; END_VAR", "q := i > 5;\n//#ASSERT TRUE OR q")
    r, _ = value_set_abstraction(p, "i")
    assert r.net.var("i").domain == (-32768, 4, 5, 6, 32767)
    assert branching_factor(r.net) <= 5


def test_value_set_unused_variable(problems):
    p = prog(problems, "VAR_INPUT i : INT; a : BOOL; END_VAR VAR q : BOOL; END_VAR", "q := a;\n//#ASSERT q = a")
    r, rep = value_set_abstraction(p, "i")
    assert len(r.net.var("i").domain) == 1 and rep.domains_restricted == 1
    assert check(r).kind == check(p, EngineConfig(K=2)).kind


def test_value_set_refuses_arithmetic(problems):
    p = prog(problems, "VAR_INPUT i : INT; j : INT; END_VAR VAR s : INT; END_VAR", "s := i + j;\n//#ASSERT s < 9")
    r, rep = value_set_abstraction(p, "i")
    assert rep.refused and "outside a comparison" in rep.reason
    assert r.net.var("i").domain is None


def test_value_set_refuses_non_inputs(problems):
    p = prog(problems, "VAR_INPUT a : BOOL; END_VAR VAR s : INT; END_VAR", "s := 1;\n//#ASSERT s < 9 OR a")
    assert value_set_abstraction(p, "s")[1].refused
    assert value_set_abstraction(p, "a")[1].refused
    assert value_set_abstraction(p, "missing")[1].refused


def test_pipeline_reports_in_order(problems):
    p = prog(problems, "VAR_INPUT i : INT; END_VAR VAR q : BOOL; END_VAR", "q := i > 5;\n//#ASSERT NOT q OR i > 5")
    _, reports = reduce_problem(p, valueset=True)
    assert [r.pass_name for r in reports] == ["constant_fold", "eliminate_unreachable", "cone_of_influence",
                                              "value_set_abstraction"]
    for r in reports:
        d = r.as_dict()
        assert all(d[k] >= 0 for k in ("variables_removed", "transitions_removed", "locations_removed"))


@SLOW
@given(st.integers(0, 10 ** 6), st.sampled_from(PASSES))
def test_idempotent_and_monotone(seed, fn):
    p = progen.generate(seed).problem()
    once, rep = fn(p)
    twice, _ = fn(once)
    assert twice.net == once.net and twice.property == once.property
    for k in ("locations", "transitions", "variables"):
        assert rep.after[k] <= rep.before[k]


@SLOW
@given(st.integers(0, 10 ** 6))
def test_value_set_idempotent(seed):
    s = progen.generate(seed)
    for name in s.int_inputs:
        once, rep = value_set_abstraction(s.problem(), name)
        twice, _ = value_set_abstraction(once, name)
        assert twice.net == once.net
        assert len(once.net.var(name).domain) <= len(s.problem().net.var(name).domain)


@pytest.mark.parametrize("seed", range(2024, 2034))
def test_verdicts_preserved_on_samples(seed):
    s = progen.generate(seed)
    p = s.problem()
    cfg = EngineConfig(K=s.cycles)
    base = comparable(check(p, cfg).kind)
    for fn in PASSES:
        assert comparable(check(fn(p)[0], cfg).kind) == base
    assert comparable(check(reduce_problem(p)[0], cfg).kind) == base

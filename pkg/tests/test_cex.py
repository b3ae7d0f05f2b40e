from dataclasses import replace

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from stverif.cex import (CexError, emit_simulator_inputs, localize, parse_simulator_inputs, replay, replay_problem,
                         validate)
from stverif.cfa.model import Automaton
from stverif.engine import FAULT, VIOLATED, EngineConfig, check, concrete_net
from stverif.expr import to_st
from stverif.requirements import checks, restrict_inputs
from stverif.trace import CycleRecord, Trace

import progen

SLOW = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

GUARDED = "PROGRAM P VAR_INPUT a : BOOL; END_VAR VAR q : BOOL; END_VAR\nIF a THEN q := TRUE; END_IF;\n" \
          "//#ASSERT NOT q\nEND_PROGRAM\n"
LOOP = """PROGRAM P
VAR_INPUT go : BOOL; END_VAR
VAR i : INT; s : INT; END_VAR
IF go THEN
  FOR i := 1 TO 4 DO s := s + i; END_FOR;
END_IF;
//#ASSERT s < 20
END_PROGRAM
"""


def test_replay_rejects_empty_and_incomplete(problems):
    net = concrete_net(problems(GUARDED)[0])
    with pytest.raises(CexError, match="at least one cycle"):
        replay(net, [])
    with pytest.raises(CexError, match="missing a"):
        replay(net, [{}])


def test_constant_program_replays_identically(problems):
    p = problems("PROGRAM P VAR_INPUT a : BOOL; END_VAR VAR k : INT := 4; END_VAR k := 4;\n//#ASSERT k = 4\n"
                 "END_PROGRAM")[0]
    t = replay_problem(p, [{"a": False}, {"a": True}, {"a": False}])
    assert len({c.state for c in t.cycles}) == 1 and t.violation is None


def test_simulator_file_format():
    t = Trace((CycleRecord((("a", True), ("n", 5)), ()), CycleRecord((("a", False), ("n", -3)), ())))
    text = emit_simulator_inputs(t)
    assert text == "cycle;a;n\n1;TRUE;5\n2;FALSE;-3\n"
    assert parse_simulator_inputs(text) == [{"a": True, "n": 5}, {"a": False, "n": -3}]


@pytest.mark.parametrize("text,msg", [
    ("", "empty"), ("a;b\n1;2\n", "'cycle'"), ("cycle;a\n1;TRUE;3\n", "fields"), ("cycle;a\n2;TRUE\n", "labelled"),
    ("cycle;a\n1;maybe\n", "malformed"),
])
def test_simulator_file_errors(text, msg):
    with pytest.raises(CexError, match=msg):
        parse_simulator_inputs(text)


def test_spurious_loop_trace(problems):
    p = problems(LOOP)[0]
    good = replay_problem(p, [{"go": True}, {"go": True}])
    assert [c.state_dict()["s"] for c in good.cycles] == [10, 20]
    assert validate(p, good).feasible
    # claim the loop ran twice over within cycle 2, violating one cycle early
    first, second = good.cycles
    doubled = tuple((n, 20 if n == "s" else v) for n, v in first.state)
    forged = Trace((replace(first, state=doubled),), replace(good.violation, cycle=1))
    r = validate(p, forged)
    assert not r.feasible and r.kind == "Spurious"
    assert (r.cycle, r.variable, r.expected, r.actual) == (1, "s", 20, 10)
    assert "cycle 1" in r.describe()
    # a correct first cycle followed by a wrong second one diverges at cycle 2
    skewed = tuple((n, 25 if n == "s" else v) for n, v in second.state)
    late = Trace((first, replace(second, state=skewed)), replace(good.violation, cycle=3))
    r = validate(p, late)
    assert not r.feasible and (r.cycle, r.variable) == (2, "s")


def test_trace_violating_at_wrong_cycle_is_spurious(problems):
    p = problems(LOOP)[0]
    t = replay_problem(p, [{"go": True}, {"go": True}])
    early = Trace(t.cycles[:1], replace(t.violation, cycle=1))
    r = validate(p, early)
    assert not r.feasible and r.cycle == 1


def test_localization_of_guarded_assignment(problems):
    p = problems(GUARDED)[0]
    v = check(p)
    rep = localize(p, v.trace)
    got = [(e.statement, round(e.score, 3)) for e in rep]
    assert got == [("q := TRUE", 0.5), ("a", 0.333)]
    assert rep.entries[0].span.line == 2


def test_localization_ignores_unrelated_statements(problems):
    p = problems("PROGRAM P VAR_INPUT a : BOOL; b : BOOL; END_VAR VAR q : BOOL; z : BOOL; END_VAR\n"
                 "z := b;\nIF a THEN q := TRUE; END_IF;\n//#ASSERT NOT q\nEND_PROGRAM\n")[0]
    rep = localize(p, check(p).trace)
    assert all("z" not in e.statement for e in rep)


def test_localization_constant_property(problems):
    p = problems("PROGRAM P VAR_INPUT a : BOOL; END_VAR VAR q : BOOL; END_VAR q := a;\n//#ASSERT FALSE\n"
                 "END_PROGRAM")[0]
    assert len(localize(p, check(p).trace)) == 0


def test_localization_requires_feasible_trace(problems):
    p = problems(LOOP)[0]
    t = replay_problem(p, [{"go": True}, {"go": True}])
    with pytest.raises(CexError, match="not feasible"):
        localize(p, Trace(t.cycles[:1], replace(t.violation, cycle=1)))
    with pytest.raises(CexError, match="no violation"):
        localize(p, Trace(t.cycles[:1]))


CORPUS = [
    GUARDED,
    LOOP,
    """PROGRAM P VAR_INPUT a : BOOL; b : BOOL; END_VAR VAR x : INT; y : INT; END_VAR
    x := 1; IF a THEN x := x + 2; END_IF; IF b THEN y := x * 3; ELSE y := 1; END_IF;
    //#ASSERT y <> 9
    END_PROGRAM""",
    """PROGRAM P VAR_INPUT a : BOOL; END_VAR VAR c : INT; hi : BOOL; END_VAR
    IF a THEN c := c + 1; END_IF; hi := c >= 2;
    //#ASSERT NOT hi
    END_PROGRAM""",
]


def _drop(net, span, text):
    transitions = []
    for t in net.main.transitions:
        if t.span == span:
            t = replace(t, assignments=tuple(a for a in t.assignments if f"{to_st(a.target)} := {to_st(a.value)}" != text))
        transitions.append(t)
    main = Automaton(net.main.name, net.main.locations, tuple(transitions), net.main.initial)
    return replace(net, main=main)


@pytest.mark.parametrize("src", CORPUS)
def test_localization_soundness(problems, src):
    p = problems(src)[0]
    v = check(p)
    assert v.kind == VIOLATED
    rep = localize(p, v.trace)
    net = p.reference
    base = replay(net, v.trace.inputs(), checks(net, p.property))
    sliced = {e.variable for e in rep}
    k = v.trace.violation.cycle
    for e in rep:
        if ":=" not in e.statement:
            continue
        mutated = _drop(net, e.span, e.statement)
        after = replay(mutated, v.trace.inputs(), checks(mutated, p.property))
        changed_outcome = after.violation != base.violation
        before_state = base.cycles[k - 1].state_dict()
        after_state = after.cycles[min(k, len(after.cycles)) - 1].state_dict()
        changed_value = any(before_state.get(n) != after_state.get(n) for n in sliced)
        assert changed_outcome or changed_value, e.statement
    scores = [e.score for e in rep]
    assert scores == sorted(scores, reverse=True) and all(0 < s <= 1 for s in scores)


@SLOW
@given(st.integers(0, 10 ** 6))
def test_engine_traces_validate_and_round_trip(seed):
    s = progen.generate(seed)
    p = s.problem()
    v = check(p, EngineConfig(K=s.cycles))
    if v.kind not in (VIOLATED, FAULT):
        return
    assert validate(p, v.trace).feasible
    again = replay_problem(p, parse_simulator_inputs(emit_simulator_inputs(v.trace)))
    assert again == v.trace
    assert replay_problem(p, v.trace.inputs()) == again
    # forcing the trace inputs: the engine finds a violation at the same cycle
    forced = restrict_inputs(p, {n: sorted({c.input_dict()[n] for c in v.trace.cycles})
                                        for n in s.int_inputs})
    w = check(forced, EngineConfig(K=s.cycles))
    assert w.kind in (VIOLATED, FAULT) and w.trace.violation.cycle <= v.trace.violation.cycle

import os
import random
import re
import shutil
import stat
import subprocess

import pytest
from hypothesis import given, strategies as st

from stverif.backends import (BackendConfigError, NameMap, ToolConfig, ToolRun, UnsupportedFeature, emit_c, emit_smv,
                              parse_tool_output, resolve_tool, run_external, tool_available)
from stverif.backends import cbmc as cbmc_mod
from stverif.backends.runner import smv_value
from stverif.cex import replay_problem, validate
from stverif.engine import BOUND_REACHED, FAULT, SATISFIED, UNKNOWN, VIOLATED, EngineConfig, check, concrete_net

import progen

HERE = os.path.dirname(__file__)
GCC = shutil.which("gcc")
GUARDED = "PROGRAM P VAR_INPUT a : BOOL; END_VAR VAR q : BOOL; END_VAR\nIF a THEN q := TRUE; END_IF;\n" \
          "//#ASSERT NOT q\nEND_PROGRAM\n"
COUNTER = """PROGRAM P
VAR_INPUT up : BOOL; n : INT; END_VAR
VAR c : INT; i : INT; s : INT; ok : BOOL; END_VAR
IF up THEN c := c + 1; END_IF;
s := 0;
FOR i := 1 TO 3 DO s := s + n / 2; END_FOR;
ok := c < 3;
//#ASSERT ok OR s > 100
END_PROGRAM
"""


def golden(name, text):
    path = os.path.join(HERE, "golden", name)
    if os.environ.get("STVERIF_REGEN_GOLDEN"):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    with open(path, encoding="utf-8") as fh:
        assert fh.read() == text


# -- name maps and emission -------------------------------------------------------------------

@given(st.lists(st.text(alphabet="abcz_.[]@0", min_size=1, max_size=6), max_size=30),
       st.sampled_from(["c", "smv"]))
def test_name_map_is_a_bijection(names, style):
    m = NameMap("v_" if style == "c" else "", style)
    for n in names + ["int", "main", "next", "case"]:
        m.add(n)
    idents = [m[n] for n in m.forward]
    assert len(set(idents)) == len(idents)
    assert all(re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", i) for i in idents)
    assert all(m.to_cfa(m[n]) == n for n in m.forward)


@pytest.mark.parametrize("src,name", [(GUARDED, "guarded"), (COUNTER, "counter")])
def test_golden_models(problems, src, name):
    p = problems(src)[0]
    c1, c2 = emit_c(p).text, emit_c(problems(src)[0]).text
    assert c1 == c2
    golden(name + ".c", c1)
    if name == "guarded":
        s1 = emit_smv(p).text
        assert s1 == emit_smv(problems(src)[0]).text
        golden(name + ".smv", s1)


def test_smv_shapes(problems):
    text = emit_smv(problems(COUNTER)[0]).text
    assert "signed word[16]" in text and "IVAR" in text and "INVARSPEC NAME p_A1" in text
    # division faults become part of the invariant
    assert "0sd16_2 = 0sd16_0" in text


def test_smv_rejects_dynamic_indexing(problems):
    p = problems("PROGRAM P VAR_INPUT i : INT; END_VAR VAR arr : ARRAY[0..3] OF INT; END_VAR\n"
                 "arr[i] := 1;\n//#ASSERT arr[0] = 0\nEND_PROGRAM\n")[0]
    with pytest.raises(UnsupportedFeature, match="dynamic array indexing") as e:
        emit_smv(p)
    assert e.value.span is not None and e.value.span.line == 2


def test_smv_constants():
    assert smv_value("-0sd16_5") == -5 and smv_value("0ud16_65535") == -1
    assert smv_value("signed(0ud16_32768)") == -32768 and smv_value("TRUE") is True


@pytest.mark.parametrize("seed", range(2024, 2044))
def test_c_is_structured(seed):
    s = progen.generate(seed)
    text = emit_c(s.problem()).text
    assert "goto" not in text
    body = text[text.index("static void plc_cycle(void)"):text.index("int main(void)")]
    assert ("while (" in body) == s.has_loop


# -- differential execution of the C model with gcc ----------------------------------------------

HARNESS = r"""
#include <stdio.h>
#include <stdlib.h>
extern unsigned plc_cycle_count;
%(externs)s
static long vals[4096];
static int nvals, pos;
static unsigned seen;
static void dump(void)
{
%(dump)s
    printf("E\n");
}
static long next_value(void)
{
    if (plc_cycle_count != seen) {
        if (seen) dump();
        seen = plc_cycle_count;
    }
    if (pos >= nvals) { printf("END\n"); exit(0); }
    return vals[pos++];
}
_Bool nondet_bool(void) { return next_value() != 0; }
short nondet_short(void) { return (short)next_value(); }
int nondet_int(void) { return (int)next_value(); }
void __CPROVER_assume(_Bool c) { if (!c) { printf("INFEASIBLE %%u\n", plc_cycle_count); exit(0); } }
void __CPROVER_assert(_Bool c, const char *m) { if (!c) { printf("FAIL %%u %%s\n", plc_cycle_count, m); exit(0); } }
int plc_model_main(void);
int main(int argc, char **argv)
{
    for (int k = 1; k < argc; k++) vals[nvals++] = atol(argv[k]);
    return plc_model_main();
}
"""

_CT = {"BOOL": "_Bool", "INT": "short", "DINT": "int"}


def build_binary(model, tmp_path):
    net = model.net
    externs, dump = [], []
    for v in net.variables:
        ident = model.map[v.name]
        if v.is_array:
            externs.append(f"extern {_CT[v.elem_type.name]} {ident}[];")
            for k, n in enumerate(v.element_names()):
                if v.persistent:
                    dump.append(f'    printf("S {n} %d\\n", (int){ident}[{k}]);')
        else:
            externs.append(f"extern {_CT[v.type.name]} {ident};")
            if v.persistent:
                dump.append(f'    printf("S {v.name} %d\\n", (int){ident});')
    (tmp_path / "model.c").write_text(model.text)
    (tmp_path / "harness.c").write_text(HARNESS % {"externs": "\n".join(externs), "dump": "\n".join(dump)})
    exe = tmp_path / "model"
    subprocess.run([GCC, "-std=c99", "-O0", "-w", "-fwrapv", "-Dmain=plc_model_main", "-c", "model.c", "-o", "model.o"],
                   cwd=tmp_path, check=True)
    subprocess.run([GCC, "-std=c99", "-O0", "-w", "harness.c", "model.o", "-o", str(exe)], cwd=tmp_path, check=True)
    return exe


def run_binary(exe, net, inputs):
    names = [v for v in net.inputs()]
    args = []
    for cycle in inputs:
        for v in names:
            for n in v.element_names():
                args.append(str(int(cycle[n])))
    out = subprocess.run([str(exe), *args], capture_output=True, text=True, timeout=30, stdin=subprocess.DEVNULL)
    states, cur, event = [], {}, None
    for line in out.stdout.splitlines():
        if line.startswith("S "):
            _, n, x = line.split()
            cur[n] = int(x)
        elif line == "E":
            states.append(cur)
            cur = {}
        elif line.startswith("FAIL"):
            _, cyc, msg = line.split(" ", 2)
            event = (int(cyc), "fault" if msg.startswith("fault") else "property")
        elif line.startswith("INFEASIBLE"):
            event = ("infeasible", line)
    return states, event


def _as_int(state):
    return {n: int(x) for n, x in state}


def differential(problem, inputs, tmp_path):
    model = emit_c(problem)
    exe = build_binary(model, tmp_path)
    states, event = run_binary(exe, model.net, inputs)
    t = replay_problem(problem, inputs)
    completed = t.cycles if t.violation is None else t.cycles[:-1]
    # the harness dumps the state of every finished cycle before the next one reads inputs
    assert states[:len(completed)] == [_as_int(c.state) for c in completed]
    if t.violation is None:
        assert event is None
    else:
        assert event == (t.violation.cycle, "fault" if t.violation.is_fault else "property")


def sample_inputs(s, rng, cycles=3):
    out = []
    for _ in range(cycles):
        d = {n: rng.random() < 0.5 for n in s.bool_inputs}
        d.update({n: rng.choice(progen.FOUR_BIT) for n in s.int_inputs})
        out.append(d)
    return out


@pytest.mark.skipif(GCC is None, reason="gcc not installed")
@pytest.mark.parametrize("seed", range(2024, 2064))
def test_c_model_matches_interpreter(seed, tmp_path):
    s = progen.generate(seed)
    p = s.problem()
    v = check(p, EngineConfig(K=s.cycles))
    inputs = v.trace.inputs() if v.trace is not None else sample_inputs(s, random.Random(seed))
    differential(p, inputs, tmp_path)


@pytest.mark.skipif(GCC is None, reason="gcc not installed")
@pytest.mark.parametrize("seed", range(2024, 2034))
def test_dispatch_fallback_matches_interpreter(seed, tmp_path, monkeypatch):
    def refuse(self):
        raise cbmc_mod._Unstructured()

    monkeypatch.setattr(cbmc_mod._Structurer, "body", refuse)
    s = progen.generate(seed)
    p = s.problem()
    assert "int pc = " in emit_c(p).text
    differential(p, sample_inputs(s, random.Random(seed)), tmp_path)


@pytest.mark.skipif(GCC is None, reason="gcc not installed")
def test_counter_model_with_division(problems, tmp_path):
    p = problems(COUNTER)[0]
    differential(p, [{"up": True, "n": 7}, {"up": True, "n": -32768}, {"up": True, "n": 3}], tmp_path)


# -- tool runner ----------------------------------------------------------------------------------

def fake_tool(tmp_path, name, body):
    path = tmp_path / name
    path.write_text("#!/bin/sh\n" + body)
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return str(path)


def test_resolution_order(tmp_path, monkeypatch):
    with pytest.raises(BackendConfigError, match="unknown backend"):
        resolve_tool(ToolConfig("spin"))
    with pytest.raises(BackendConfigError, match="not found"):
        resolve_tool(ToolConfig("nusmv", str(tmp_path / "missing")))
    exe = fake_tool(tmp_path, "NuSMV", "exit 0\n")
    monkeypatch.setenv("STVERIF_TOOL_DIR", str(tmp_path))
    monkeypatch.setenv("PATH", "/nonexistent")
    assert resolve_tool(ToolConfig("nusmv")) == exe
    assert tool_available("nusmv") and not tool_available("cbmc")


def test_timeout_gives_unknown(problems, tmp_path):
    exe = fake_tool(tmp_path, "slow", "sleep 5\n")
    model = emit_smv(problems(GUARDED)[0])
    run = run_external(ToolConfig("nusmv", exe, timeout_s=0.3), model)
    assert run.timed_out
    v = parse_tool_output(run, model)
    assert v.kind == UNKNOWN and "timed out" in v.message


def test_garbage_output_is_unknown(problems, tmp_path):
    for fmt, emit in (("nusmv", emit_smv), ("cbmc", emit_c)):
        exe = fake_tool(tmp_path, fmt, "echo 'segmentation fault'\n")
        model = emit(problems(GUARDED)[0])
        v = parse_tool_output(run_external(ToolConfig(fmt, exe), model), model)
        assert v.kind == UNKNOWN and "segmentation fault" in v.message


NUSMV_CEX = """*** This is NuSMV 2.6.0
-- invariant p_A1 is false
-- as demonstrated by the following execution sequence
Trace Description: AG alpha Counterexample
Trace Type: Counterexample
  -> State: 1.1 <-
    loc = L_init
    v_a = FALSE
    v_q = FALSE
  -> Input: 1.2 <-
    nd_1_0 = FALSE
  -> State: 1.2 <-
    loc = L_cs
  -> Input: 1.3 <-
    nd_1_0 = FALSE
  -> State: 1.3 <-
    loc = L_l1
  -> State: 1.4 <-
    loc = L_l2
  -> State: 1.5 <-
    loc = L_l4
  -> State: 1.6 <-
    loc = L_eoc
  -> Input: 1.7 <-
    nd_1_0 = TRUE
  -> State: 1.7 <-
    loc = L_cs
  -> State: 1.8 <-
    loc = L_l1
    v_a = TRUE
  -> State: 1.9 <-
    loc = L_l3
  -> State: 1.10 <-
    loc = L_l2
    v_q = TRUE
  -> State: 1.11 <-
    loc = L_l4
"""

CBMC_CEX = """CBMC version 5.95.1 (cbmc-5.95.1) 64-bit x86_64 linux
Parsing model.c
Counterexample:

State 17 file model.c function main line 60 thread 0
----------------------------------------------------
  plc_cycle_count=1u (00000000 00000000 00000000 00000001)

State 18 file model.c function main line 61 thread 0
----------------------------------------------------
  v_a=FALSE (00000000)

State 25 file model.c function main line 60 thread 0
----------------------------------------------------
  plc_cycle_count=2u (00000000 00000000 00000000 00000010)

State 26 file model.c function main line 61 thread 0
----------------------------------------------------
  v_a=TRUE (00000001)

State 30 file model.c function plc_cycle line 52 thread 0
----------------------------------------------------
  v_q=TRUE (00000001)

Violated property:
  file model.c function plc_cycle line 54 thread 0
  property A1
  !v_q

VERIFICATION FAILED
"""


def test_parse_nusmv_counterexample(problems, tmp_path):
    p = problems(GUARDED)[0]
    model = emit_smv(p)
    assert model.locations is not None
    exe = fake_tool(tmp_path, "NuSMV", "cat <<'OUT'\n" + NUSMV_CEX + "OUT\n")
    run = run_external(ToolConfig("nusmv", exe), model)
    v = parse_tool_output(run, model)
    assert v.kind == VIOLATED
    assert [c.input_dict() for c in v.trace.cycles] == [{"a": False}, {"a": True}]
    assert v.trace.violation.cycle == 2 and v.trace.cycles[-1].state_dict()["q"] is True
    assert validate(p, v.trace).feasible
    ok = ToolRun(["NuSMV"], 0, "-- invariant p_A1 is true\n", 0.1)
    assert parse_tool_output(ok, model).kind == SATISFIED


def test_parse_cbmc_counterexample(problems, tmp_path):
    p = problems(GUARDED)[0]
    model = emit_c(p)
    exe = fake_tool(tmp_path, "cbmc", "cat <<'OUT'\n" + CBMC_CEX + "OUT\n")
    run = run_external(ToolConfig("cbmc", exe), model, bound=4)
    assert run.command[2:] == ["--partial-loops", "--unwind", "5", "--trace", "--stop-on-fail"]
    v = parse_tool_output(run, model)
    assert v.kind == VIOLATED
    assert [c.input_dict() for c in v.trace.cycles] == [{"a": False}, {"a": True}]
    assert validate(p, v.trace).feasible
    fault = CBMC_CEX.replace("  property A1\n  !v_q", "  fault: division by zero\n  b != 0")
    assert parse_tool_output(ToolRun(["cbmc"], 10, fault, 0.1), model).kind == FAULT
    ok = ToolRun(["cbmc"], 0, "** 0 of 3 failed\nVERIFICATION SUCCESSFUL\n", 0.1)
    assert parse_tool_output(ok, model).kind == BOUND_REACHED


def test_keep_dir_retains_model(problems, tmp_path):
    exe = fake_tool(tmp_path, "NuSMV", "echo '-- invariant p_A1 is true'\n")
    keep = tmp_path / "models"
    keep.mkdir()
    run = run_external(ToolConfig("nusmv", exe), emit_smv(problems(GUARDED)[0]), keep_dir=str(keep))
    assert run.model_path and os.path.exists(run.model_path)


# -- real tools, when installed ------------------------------------------------------------------

@pytest.mark.external
@pytest.mark.skipif(not tool_available("nusmv"), reason="NuSMV not installed")
def test_nusmv_agrees_with_engine(problems):
    p = problems(GUARDED)[0]
    model = emit_smv(p)
    v = parse_tool_output(run_external(ToolConfig("nusmv"), model), model)
    assert v.kind == check(p).kind == VIOLATED


@pytest.mark.external
@pytest.mark.skipif(not tool_available("cbmc"), reason="CBMC not installed")
def test_cbmc_agrees_with_engine(problems):
    p = problems(GUARDED)[0]
    model = emit_c(p)
    v = parse_tool_output(run_external(ToolConfig("cbmc"), model, bound=3), model)
    assert v.kind == VIOLATED and validate(p, v.trace).feasible
    assert concrete_net(p) is not None

"""Running external model checkers and mapping their output back to CFA verdicts."""
from __future__ import annotations

import os
import re
import shlex
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field

from ..engine import BOUND_REACHED, FAULT, SATISFIED, UNKNOWN, VIOLATED, Verdict
from ..interp import Interpreter
from ..trace import CycleRecord, Trace, Violation
from .model import EmittedModel

TOOL_BINARIES = {"nusmv": "NuSMV", "cbmc": "cbmc"}


class BackendConfigError(Exception):
    pass


@dataclass(frozen=True)
class ToolConfig:
    name: str  # nusmv or cbmc
    path: str | None = None
    timeout_s: float = 60.0
    extra_args: tuple = ()

    def default_args(self, bound: int) -> tuple:
        if self.extra_args:
            return tuple(self.extra_args)
        if self.name == "cbmc":
            return ("--partial-loops", "--unwind", str(bound + 1), "--trace", "--stop-on-fail")
        return ()


@dataclass
class ToolRun:
    command: list
    exit_code: int | None
    output: str
    wall_time_s: float
    timed_out: bool = False
    model_path: str | None = field(default=None)


def resolve_tool(cfg: ToolConfig) -> str:
    """Executable path: explicit setting, then $STVERIF_TOOL_DIR, then PATH."""
    if cfg.name not in TOOL_BINARIES:
        raise BackendConfigError(f"unknown backend '{cfg.name}'")
    if cfg.path:
        if not (os.path.isfile(cfg.path) and os.access(cfg.path, os.X_OK)):
            raise BackendConfigError(f"tool executable not found: {cfg.path}")
        return cfg.path
    binary = TOOL_BINARIES[cfg.name]
    root = os.environ.get("STVERIF_TOOL_DIR")
    if root:
        cand = os.path.join(root, binary)
        if os.path.isfile(cand) and os.access(cand, os.X_OK):
            return cand
    found = shutil.which(binary)
    if found is None:
        raise BackendConfigError(f"tool executable not found: {binary} (set backend.path or STVERIF_TOOL_DIR)")
    return found


def tool_available(name: str) -> bool:
    try:
        resolve_tool(ToolConfig(name))
        return True
    except BackendConfigError:
        return False


def run_external(cfg: ToolConfig, model: EmittedModel, bound: int = 10, keep_dir: str | None = None) -> ToolRun:
    exe = resolve_tool(cfg)
    with tempfile.TemporaryDirectory(prefix="stverif-") as tmp:
        path = os.path.join(keep_dir or tmp, "model" + model.extension)
        model.write(path)
        args = list(cfg.default_args(bound))
        cmd = [exe, *args, path] if cfg.name == "nusmv" else [exe, path, *args]
        t0 = time.perf_counter()
        try:
            proc = subprocess.run(cmd, stdin=subprocess.DEVNULL, stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
                                  timeout=cfg.timeout_s, text=True)
        except subprocess.TimeoutExpired as exc:
            out = exc.stdout.decode(errors="replace") if isinstance(exc.stdout, bytes) else (exc.stdout or "")
            return ToolRun(cmd, None, out, time.perf_counter() - t0, True, path if keep_dir else None)
        return ToolRun(cmd, proc.returncode, proc.stdout, time.perf_counter() - t0, False,
                       path if keep_dir else None)


def command_line(run: ToolRun) -> str:
    return " ".join(shlex.quote(str(c)) for c in run.command)


# -- parsing ----------------------------------------------------------------------------

_SMV_RESULT = re.compile(r"^-- invariant .* is (true|false)\s*$", re.M)
_SMV_WORD = re.compile(r"^(-?)0([su])d(\d+)_(\d+)$")


def smv_value(text: str):
    s = text.strip()
    if s == "TRUE":
        return True
    if s == "FALSE":
        return False
    m = _SMV_WORD.match(s)
    if m:
        neg, sign, bits, mag = m.group(1), m.group(2), int(m.group(3)), int(m.group(4))
        v = -mag if neg else mag
        if sign == "u" and v >= 1 << (bits - 1):
            v -= 1 << bits
        return v
    m = re.match(r"^signed\(0ud(\d+)_(\d+)\)$", s)
    if m:
        bits, v = int(m.group(1)), int(m.group(2))
        return v - (1 << bits) if v >= 1 << (bits - 1) else v
    return s


def _build_trace(model: EmittedModel, cycles: list, final: dict, last_loc: str | None, fault: bool) -> Trace:
    """Assemble a claimed trace from tool-reported cycle inputs and end states."""
    interp = Interpreter(model.net, ())
    names = interp.input_names
    persistent = [n for v in model.net.variables if v.persistent for n in v.element_names()]
    defaults = {n: x for v in model.net.variables for n, x in zip(v.element_names(),
                                                                  v.initial_value() if v.is_array else [v.initial_value()])}
    records = []
    for k, (inputs, state) in enumerate(cycles):
        st = final if k == len(cycles) - 1 else state
        records.append(CycleRecord(tuple((n, inputs.get(n, defaults[n])) for n in names),
                                   tuple((n, st.get(n, defaults[n])) for n in persistent)))
    check_exprs = dict(model.checks)
    if fault or last_loc not in check_exprs:
        violation = Violation(len(records), last_loc or "", "runtime fault", None, "fault")
    else:
        from ..expr import to_st
        violation = Violation(len(records), last_loc, to_st(check_exprs[last_loc]), False)
    return Trace(tuple(records), violation)


def _parse_smv(run: ToolRun, model: EmittedModel) -> Verdict:
    m = _SMV_RESULT.search(run.output)
    if m is None:
        return Verdict(UNKNOWN, message="unrecognized NuSMV output:\n" + run.output)
    if m.group(1) == "true":
        return Verdict(SATISFIED, message="NuSMV: invariant holds")
    valuation: dict[str, object] = {}
    states: list[dict] = []
    in_state = False
    for line in run.output[m.end():].splitlines():
        s = line.strip()
        if s.startswith("-> State:"):
            if in_state:
                states.append(dict(valuation))
            in_state = True
            continue
        if s.startswith("-> Input:"):
            if in_state:
                states.append(dict(valuation))
            in_state = False
            continue
        if in_state and "=" in s:
            key, _, value = s.partition("=")
            valuation[key.strip()] = smv_value(value)
    if in_state:
        states.append(dict(valuation))
    if not states:
        return Verdict(UNKNOWN, message="NuSMV reported a violation without a trace:\n" + run.output)
    locs = model.locations
    cs = locs[model.net.cycle_start]
    eoc = locs[model.net.end_of_cycle]
    cycles: list = []
    prev_loc = None
    for st in states:
        cfa = {model.map.to_cfa(k): v for k, v in st.items() if k in model.map.backward}
        loc = st.get("loc")
        if prev_loc == cs and loc != cs:
            cycles.append((cfa, cfa))
        elif loc == eoc and cycles:
            cycles[-1] = (cycles[-1][0], cfa)
        prev_loc = loc
    if not cycles:
        return Verdict(UNKNOWN, message="NuSMV trace has no complete cycle:\n" + run.output)
    final = {model.map.to_cfa(k): v for k, v in states[-1].items() if k in model.map.backward}
    last_loc = states[-1].get("loc")
    last_cfa = locs.to_cfa(last_loc) if last_loc in locs.backward else None
    trace = _build_trace(model, cycles, final, last_cfa, last_cfa not in dict(model.checks))
    return Verdict(FAULT if trace.violation.is_fault else VIOLATED, trace, message="NuSMV: invariant violated")


_CBMC_ASSIGN = re.compile(r"^\s+([A-Za-z_][A-Za-z0-9_]*)(\[\d+l*\])?=(\S+)")


def _c_value(text: str):
    if text in ("TRUE", "FALSE"):
        return text == "TRUE"
    try:
        return int(text.rstrip("lLuU"))
    except ValueError:
        return text


def _parse_cbmc(run: ToolRun, model: EmittedModel) -> Verdict:
    out = run.output
    if "VERIFICATION SUCCESSFUL" in out:
        return Verdict(BOUND_REACHED, message="CBMC: no violation within the unwinding bound")
    if "VERIFICATION FAILED" not in out:
        return Verdict(UNKNOWN, message="unrecognized CBMC output:\n" + out)
    arrays = {model.map[v.name]: v for v in model.net.variables if v.is_array}
    bools = {model.map[v.name] for v in model.net.variables if v.elem_type.is_bool}
    inputs = {model.map[v.name] for v in model.net.inputs()}
    valuation: dict[str, object] = {}
    cycles: list = []
    current_inputs: dict = {}
    for line in out.splitlines():
        if line.strip().startswith("Violated property:"):
            break
        m = _CBMC_ASSIGN.match(line)
        if not m:
            continue
        ident, idx, value = m.group(1), m.group(2), _c_value(m.group(3))
        if ident == "plc_cycle_count":
            if cycles:
                cycles[-1] = (cycles[-1][0], dict(valuation))
            current_inputs = {}
            cycles.append((current_inputs, dict(valuation)))
            continue
        if ident not in model.map.backward:
            continue
        name = model.map.to_cfa(ident)
        if ident in bools and isinstance(value, int):
            value = bool(value)
        if idx:
            v = arrays[ident]
            name = f"{name}[{v.type.lo + int(idx.strip('[]l'))}]"
        valuation[name] = value
        if ident in inputs and cycles:
            current_inputs[name] = value
    # the description follows the "file ... line ..." location line
    tail = out[out.find("Violated property:"):].splitlines()[1:]
    msg = next((ln.strip() for ln in tail if ln.strip() and not ln.strip().startswith("file ")), "")
    if not cycles:
        return Verdict(UNKNOWN, message="CBMC trace has no scan cycle:\n" + out)
    fault = "fault:" in msg
    last_loc = None
    if not fault:
        for lid, _ in model.checks:
            last_loc = lid
            break
    trace = _build_trace(model, cycles, dict(valuation), last_loc, fault)
    return Verdict(FAULT if fault else VIOLATED, trace, message=f"CBMC: {msg}" if msg else "CBMC: violated")


def parse_tool_output(run: ToolRun, model: EmittedModel) -> Verdict:
    if run.timed_out:
        return Verdict(UNKNOWN, message=f"tool timed out after {run.wall_time_s:.1f} s")
    if model.format == "smv":
        return _parse_smv(run, model)
    return _parse_cbmc(run, model)

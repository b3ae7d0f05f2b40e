"""Command-line front end: job files, the verification pipeline and report output."""
from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

from . import __version__
from .backends import (BackendConfigError, ToolConfig, UnsupportedFeature, command_line, emit_c, emit_smv,
                       parse_tool_output, run_external)
from .cex import CexError, emit_simulator_inputs, localize, validate
from .cfa import CfaError, build_cfa
from .engine import (BOUND_REACHED, FAULT, UNKNOWN, VIOLATED, EngineConfig, EngineError, check)
from .iterative import IterativeError, iterative_verify
from .reductions import reduce_problem
from .report import Report, counterexample_table, render_json, render_text
from .requirements import (JobOptions, RequirementError, VerificationProblem, assertions_to_problems,
                           instantiate_pattern)
from .stparser import DiagnosticError, load_sources, parse_expression

EXIT_OK, EXIT_VIOLATED, EXIT_INCONCLUSIVE, EXIT_ERROR = 0, 1, 2, 3
ERROR = "error"


class JobError(Exception):
    pass


@dataclass
class JobConfig:
    sources: list
    entry: str
    req_type: str
    name: str = "job"
    req_select: list | None = None
    req_pattern: str | None = None
    req_alpha: str | None = None
    req_beta: str | None = None
    fold: bool = True
    unreach: bool = True
    coi: bool = True
    valueset: bool = False
    backend: str = "engine"
    backend_path: str | None = None
    backend_timeout_s: float = 60.0
    backend_extra_args: tuple = ()
    bound: int = 10
    max_states: int = 10_000_000
    iterative: bool = False
    iterative_max_iters: int | None = None
    output: str = "verify-out"
    formats: tuple = ("txt", "json")
    plot: bool = True
    keep_models: bool = False
    base_dir: str = field(default=".", repr=False)

    def options(self) -> JobOptions:
        return JobOptions(self.bound, self.max_states, self.backend, self.fold, self.unreach, self.coi, self.valueset)

    def tool(self) -> ToolConfig:
        return ToolConfig(self.backend, self.backend_path, self.backend_timeout_s, tuple(self.backend_extra_args))


def _flag(key, value):
    v = value.lower()
    if v in ("on", "true", "yes", "1"):
        return True
    if v in ("off", "false", "no", "0"):
        return False
    raise JobError(f"malformed value for '{key}': expected on or off, got '{value}'")


def _positive_int(key, value):
    try:
        n = int(value)
    except ValueError:
        raise JobError(f"malformed value for '{key}': expected an integer, got '{value}'") from None
    if n < 1:
        raise JobError(f"malformed value for '{key}': must be at least 1")
    return n


def _number(key, value):
    try:
        x = float(value)
    except ValueError:
        raise JobError(f"malformed value for '{key}': expected a number, got '{value}'") from None
    if x <= 0:
        raise JobError(f"malformed value for '{key}': must be positive")
    return x


def _choice(options):
    def parse(key, value):
        if value not in options:
            raise JobError(f"malformed value for '{key}': expected one of {', '.join(options)}, got '{value}'")
        return value
    return parse


def _names(key, value):
    items = [x.strip() for x in value.split(",") if x.strip()]
    if not items:
        raise JobError(f"malformed value for '{key}': empty list")
    return items


_KEYS = {
    "name": ("name", str),
    "source": ("sources", _names),
    "entry": ("entry", str),
    "req.type": ("req_type", _choice(("assertion", "pattern"))),
    "req.select": ("req_select", _names),
    "req.pattern": ("req_pattern", _choice(("P1", "P2", "P3"))),
    "req.alpha": ("req_alpha", str),
    "req.beta": ("req_beta", str),
    "reduce.fold": ("fold", _flag),
    "reduce.unreach": ("unreach", _flag),
    "reduce.coi": ("coi", _flag),
    "reduce.valueset": ("valueset", _flag),
    "backend": ("backend", _choice(("engine", "nusmv", "cbmc"))),
    "backend.path": ("backend_path", str),
    "backend.timeout_s": ("backend_timeout_s", _number),
    "backend.extra_args": ("backend_extra_args", lambda k, v: tuple(shlex.split(v))),
    "bound": ("bound", _positive_int),
    "engine.max_states": ("max_states", _positive_int),
    "iterative": ("iterative", _flag),
    "iterative.max_iters": ("iterative_max_iters", _positive_int),
    "output": ("output", str),
    "report.formats": ("formats", lambda k, v: tuple(_choice(("txt", "json"))(k, x) for x in _names(k, v))),
    "report.plot": ("plot", _flag),
}
MANDATORY = ("source", "entry", "req.type")


def parse_job(text: str, base_dir: str = ".", name: str = "job") -> JobConfig:
    values: dict = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise JobError(f"line {n}: expected key = value")
        key, _, value = (s.strip() for s in line.partition("="))
        if key not in _KEYS:
            raise JobError(f"unknown key '{key}' (line {n})")
        if key in values:
            raise JobError(f"duplicate key '{key}' (line {n})")
        values[key] = value
    missing = [k for k in MANDATORY if k not in values]
    if missing:
        raise JobError(f"missing mandatory key '{missing[0]}'")
    kwargs = {"name": name, "base_dir": base_dir}
    for key, value in values.items():
        attr, conv = _KEYS[key]
        kwargs[attr] = conv(key, value) if conv is not str else value
    cfg = JobConfig(**kwargs)
    if cfg.req_type == "pattern":
        if cfg.req_pattern is None:
            raise JobError("req.type = pattern needs req.pattern")
        if cfg.req_select is not None:
            raise JobError("req.select applies to assertion jobs only")
    elif any(x is not None for x in (cfg.req_pattern, cfg.req_alpha, cfg.req_beta)):
        raise JobError("req.pattern, req.alpha and req.beta apply to pattern jobs only")
    cfg.sources = [s if os.path.isabs(s) else os.path.join(base_dir, s) for s in cfg.sources]
    for s in cfg.sources:
        if not os.path.isfile(s):
            raise JobError(f"source file not found: {s}")
    if not os.path.isabs(cfg.output):
        cfg.output = os.path.join(base_dir, cfg.output)
    return cfg


def load_job(path) -> JobConfig:
    if not os.path.isfile(path):
        raise JobError(f"job file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    stem = os.path.basename(path)
    stem = stem[: stem.rfind(".")] if "." in stem else stem
    return parse_job(text, os.path.dirname(os.path.abspath(path)), stem)


# -- pipeline -----------------------------------------------------------------------------


def _problems(cfg: JobConfig) -> list[VerificationProblem]:
    ast, directives, _ = load_sources(cfg.sources)
    net = build_cfa(ast, cfg.entry, directives)
    if cfg.req_type == "assertion":
        return assertions_to_problems(net, cfg.options(), cfg.req_select)
    bindings = {}
    for ph, text in (("alpha", cfg.req_alpha), ("beta", cfg.req_beta)):
        if text is not None:
            bindings[ph] = parse_expression(text, ast, cfg.entry, path=f"req.{ph}")
    return [instantiate_pattern(cfg.req_pattern, bindings, net, cfg.options())]


def _report_name(cfg: JobConfig, p: VerificationProblem, many: bool) -> str:
    label = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in p.property.label)
    return f"{cfg.name}.{label}" if many else cfg.name


def _reduce(cfg: JobConfig, p: VerificationProblem):
    return reduce_problem(p, cfg.fold, cfg.unreach, cfg.coi, cfg.valueset)


def _verify(cfg: JobConfig, p: VerificationProblem, name: str, backend: dict, iterations: list):
    """Run the configured backend; returns (problem actually checked, verdict)."""
    ecfg = EngineConfig(cfg.bound, cfg.max_states)
    if cfg.iterative:
        if cfg.backend != "engine":
            raise JobError("iterative verification is only available with backend = engine")
        verdict, state = iterative_verify(p, ecfg, cfg.iterative_max_iters, reducer=lambda ap: _reduce(cfg, ap)[0])
        iterations.extend(state.as_dict()["iterations"])
        return p, verdict, []
    rp, reports = _reduce(cfg, p)
    if cfg.backend == "engine":
        return rp, check(rp, ecfg), reports
    model = emit_smv(rp) if cfg.backend == "nusmv" else emit_c(rp)
    keep = cfg.output if cfg.keep_models else None
    run = run_external(cfg.tool(), model, cfg.bound)
    if keep:
        os.makedirs(keep, exist_ok=True)
        path = os.path.join(keep, f"{name}.model{model.extension}")
        model.write(path)
        backend["model"] = path
    backend["command"] = command_line(run)
    backend["exit_code"] = run.exit_code
    verdict = parse_tool_output(run, model)
    if verdict.kind == UNKNOWN and run.exit_code not in (0, 10, None) and not run.timed_out:
        raise BackendConfigError(f"{cfg.backend} exited with status {run.exit_code}: {verdict.message[:500]}")
    return rp, verdict, reports


def _normalize(data):
    return json.loads(json.dumps(data))


def run_problem(cfg: JobConfig, p: VerificationProblem, name: str) -> Report:
    t0 = time.perf_counter()
    backend = {"name": cfg.backend, "version": __version__ if cfg.backend == "engine" else "external"}
    iterations: list = []
    report = Report(name, UNKNOWN, job={"property": p.property.describe(), "provenance": p.provenance,
                                        "entry": cfg.entry, "sources": [os.path.basename(s) for s in cfg.sources],
                                        "bound": cfg.bound, "iterative": cfg.iterative})
    checked, verdict, reductions = _verify(cfg, p, name, backend, iterations)
    report.reductions = _normalize([r.as_dict() for r in reductions])
    report.iterations = _normalize(iterations)
    report.verdict = verdict.kind
    report.message = verdict.message
    report.states_explored = verdict.stats.states_explored
    report.cycles = verdict.stats.cycles_completed
    report.statistics = _normalize(verdict.stats.as_dict())
    trace = verdict.trace
    if verdict.kind in (VIOLATED, FAULT) and trace is not None:
        result = validate(checked, trace)
        report.validation = result.describe()
        if result.feasible:
            trace = result.replayed
            try:
                report.localization = [
                    {"file": os.path.basename(e.span.path), "line": e.span.line, "statement": e.statement,
                     "variable": e.variable, "score": round(e.score, 6), "distance": e.distance}
                    for e in localize(checked, trace)
                ]
            except CexError as exc:
                report.message = f"localization skipped: {exc}"
        else:
            report.verdict = UNKNOWN
            report.message = "the backend counterexample does not replay on the concrete program"
        report.cycles = len(trace)
        report.counterexample = _normalize(counterexample_table(trace))
        os.makedirs(cfg.output, exist_ok=True)
        csv_path = os.path.join(cfg.output, f"{name}.inputs.csv")
        with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(emit_simulator_inputs(trace))
        report.artifacts["simulator_inputs"] = os.path.basename(csv_path)
        if cfg.plot:
            from .plotting import plot_trace
            png = os.path.join(cfg.output, f"{name}.trace.png")
            plot_trace(trace, png, title=f"{name}: {report.verdict}")
            report.artifacts["trace_plot"] = os.path.basename(png)
    report.backend = backend
    report.duration_ms = int(round((time.perf_counter() - t0) * 1000))
    return report


def _error_report(name: str, exc: Exception) -> Report:
    return Report(name, ERROR, message=f"{type(exc).__name__}: {exc}")


_CONFIG_ERRORS = (JobError, DiagnosticError, CfaError, RequirementError, BackendConfigError, UnsupportedFeature,
                  IterativeError, EngineError, CexError, OSError)


def run_job(cfg: JobConfig) -> list[Report]:
    """Verify every problem of the job; failures become error reports rather than exceptions."""
    try:
        problems = _problems(cfg)
    except _CONFIG_ERRORS as exc:
        reports = [_error_report(cfg.name, exc)]
    else:
        reports = []
        for p in problems:
            name = _report_name(cfg, p, len(problems) > 1)
            try:
                reports.append(run_problem(cfg, p, name))
            except _CONFIG_ERRORS as exc:
                reports.append(_error_report(name, exc))
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    for r in reports:
        r.timestamp = stamp
    return reports


def write_reports(cfg: JobConfig, reports: list[Report]) -> list[str]:
    os.makedirs(cfg.output, exist_ok=True)
    paths = []
    for r in reports:
        for fmt in cfg.formats:
            path = os.path.join(cfg.output, f"{r.name}.report.{fmt}")
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(render_text(r) if fmt == "txt" else render_json(r))
            paths.append(path)
    return paths


def exit_code(reports: list[Report]) -> int:
    kinds = {r.verdict for r in reports}
    if ERROR in kinds or not reports:
        return EXIT_ERROR
    if kinds & {VIOLATED, FAULT}:
        return EXIT_VIOLATED
    if kinds & {UNKNOWN, BOUND_REACHED}:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="verify", description="Formal verification of Structured Text programs.")
    ap.add_argument("jobfile")
    ap.add_argument("--output", help="directory for reports and counterexample files")
    ap.add_argument("--backend", choices=("engine", "nusmv", "cbmc"))
    ap.add_argument("--bound", type=int, help="maximum number of scan cycles explored")
    ap.add_argument("--keep-models", action="store_true", help="keep emitted backend models next to the reports")
    ap.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_job(args.jobfile)
        if args.bound is not None and args.bound < 1:
            raise JobError("--bound must be at least 1")
    except JobError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    overrides = {"keep_models": args.keep_models or cfg.keep_models}
    if args.output:
        overrides["output"] = os.path.abspath(args.output)
    if args.backend:
        overrides["backend"] = args.backend
    if args.bound is not None:
        overrides["bound"] = args.bound
    cfg = replace(cfg, **overrides)
    reports = run_job(cfg)
    try:
        write_reports(cfg, reports)
    except OSError as exc:
        print(f"error: cannot write reports: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if not args.quiet:
        for r in reports:
            extra = f" ({r.message})" if r.verdict in (ERROR, UNKNOWN) and r.message else ""
            print(f"{r.name}: {r.verdict.upper()}{extra}")
    return exit_code(reports)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

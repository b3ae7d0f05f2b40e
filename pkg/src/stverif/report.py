"""Verification reports: a plain-text document for people and a JSON document for tools."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .trace import Trace, format_value

SCHEMA_VERSION = 1


@dataclass
class Report:
    name: str
    verdict: str
    cycles: int = 0
    states_explored: int = 0
    reductions: list = field(default_factory=list)
    counterexample: dict | None = None
    localization: list = field(default_factory=list)
    backend: dict = field(default_factory=dict)
    duration_ms: int = 0
    job: dict = field(default_factory=dict)
    statistics: dict = field(default_factory=dict)
    validation: str | None = None
    message: str = ""
    artifacts: dict = field(default_factory=dict)
    iterations: list = field(default_factory=list)
    timestamp: str = ""

    def to_dict(self) -> dict:
        return {"schema": SCHEMA_VERSION, **asdict(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "Report":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


def counterexample_table(t: Trace) -> dict:
    """JSON-ready per-cycle view of a trace."""
    v = t.violation
    return {
        "cycles": [
            {"cycle": k, "inputs": dict(c.inputs), "state": dict(c.state)}
            for k, c in enumerate(t.cycles, start=1)
        ],
        "violation": None if v is None else {
            "cycle": v.cycle, "location": v.location, "expression": v.expr, "fault": v.fault,
        },
    }


def render_json(r: Report) -> str:
    return json.dumps(r.to_dict(), indent=2, sort_keys=True) + "\n"


def parse_json(text: str) -> Report:
    data = json.loads(text)
    if data.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema {data.get('schema')!r}")
    return Report.from_dict(data)


def _table(header: list[str], rows: list[list[str]]) -> list[str]:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    fmt = lambda row: "| " + " | ".join(str(x).ljust(w) for x, w in zip(row, widths)) + " |"  # noqa: E731
    sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
    return [fmt(header), sep, *[fmt(r) for r in rows]]


def render_text(r: Report) -> str:
    lines = [f"# Verification report: {r.name}", "", f"RESULT: {r.verdict.upper()}"]
    if r.message:
        lines.append(f"Note: {r.message}")
    lines.append("")
    for key in ("property", "provenance", "entry", "sources"):
        if key in r.job:
            value = r.job[key]
            lines.append(f"- {key}: {', '.join(value) if isinstance(value, list) else value}")
    lines += ["", "## Statistics", ""]
    stats = [["verdict", r.verdict], ["cycles", r.cycles], ["states explored", r.states_explored],
             ["duration (ms)", r.duration_ms]]
    stats += [[k.replace("_", " "), r.statistics[k]] for k in sorted(r.statistics)
              if k not in ("states_explored", "cycles_completed")]
    lines += _table(["item", "value"], [[a, b] for a, b in stats])
    if r.backend:
        lines += ["", "## Backend", ""]
        lines += [f"- {k}: {r.backend[k]}" for k in sorted(r.backend)]
    if r.reductions:
        lines += ["", "## Reductions", ""]
        rows = []
        for x in r.reductions:
            b, a = x.get("before", {}), x.get("after", {})
            note = "refused: " + x["reason"] if x.get("refused") else ""
            rows.append([x["pass_name"], f"{b.get('locations', '')} -> {a.get('locations', '')}",
                         f"{b.get('transitions', '')} -> {a.get('transitions', '')}",
                         f"{b.get('variables', '')} -> {a.get('variables', '')}", note])
        lines += _table(["pass", "locations", "transitions", "variables", "note"], rows)
    if r.iterations:
        lines += ["", "## Iterations", ""]
        rows = [[it["index"], ", ".join(it["abstracted"]) or "-", it["verdict"], it["validation"] or "-"]
                for it in r.iterations]
        lines += _table(["#", "abstracted", "verdict", "validation"], rows)
    cex = r.counterexample
    if cex is not None:
        lines += ["", "## Counterexample", ""]
        v = cex["violation"]
        if v is not None:
            what = f"runtime fault ({v['fault']})" if v["fault"] else f"{v['expression']} is FALSE"
            lines.append(f"Violated in cycle {v['cycle']} at {v['location']}: {what}")
            lines.append("")
        inputs = list(cex["cycles"][0]["inputs"]) if cex["cycles"] else []
        state = list(cex["cycles"][0]["state"]) if cex["cycles"] else []
        header = ["cycle"] + [f"in:{n}" for n in inputs] + state
        rows = [[c["cycle"]] + [format_value(c["inputs"][n]) for n in inputs]
                + [format_value(c["state"][n]) for n in state] for c in cex["cycles"]]
        lines += _table(header, rows)
        if r.validation:
            lines += ["", f"Validation: {r.validation}"]
    if r.localization:
        lines += ["", "## Fault localization", ""]
        rows = [[f"{e['score']:.3f}", f"{e['file']}:{e['line']}", e["statement"], e["variable"]]
                for e in r.localization]
        lines += _table(["score", "where", "statement", "variable"], rows)
    if r.artifacts:
        lines += ["", "## Files", ""]
        lines += [f"- {k}: {r.artifacts[k]}" for k in sorted(r.artifacts)]
    lines += ["", f"Generated: {r.timestamp}"]
    return "\n".join(lines) + "\n"

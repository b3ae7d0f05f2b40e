"""Per-cycle counterexample traces."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class CycleRecord:
    inputs: tuple  # ((flat input name, value), ...) in declaration order
    state: tuple  # ((flat persistent name, value), ...) at end of cycle, or at the event in the last cycle
    choices: tuple = ()  # further nondeterministic values consumed during the cycle, in order

    def input_dict(self) -> dict:
        return dict(self.inputs)

    def state_dict(self) -> dict:
        return dict(self.state)


@dataclass(frozen=True)
class Violation:
    cycle: int  # 1-based
    location: str
    expr: str  # ST rendering of the violated invariant, or the fault description
    value: bool | None = False
    fault: str | None = None  # fault kind, e.g. division-by-zero
    detail: str = field(default="", compare=False)

    @property
    def is_fault(self) -> bool:
        return self.fault is not None


@dataclass(frozen=True)
class Trace:
    cycles: tuple
    violation: Violation | None = None

    def __post_init__(self):
        if not self.cycles:
            raise ValueError("a trace has at least one cycle")

    def __len__(self) -> int:
        return len(self.cycles)

    def inputs(self) -> list[dict]:
        return [c.input_dict() for c in self.cycles]

    def choices(self) -> list[tuple]:
        return [c.choices for c in self.cycles]

    def input_names(self) -> list[str]:
        return [n for n, _ in self.cycles[0].inputs]


def format_value(v) -> str:
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    return str(v)

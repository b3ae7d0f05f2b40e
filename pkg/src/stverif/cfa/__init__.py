"""Control-flow-automata model, builder and inliner."""
from .builder import CfaError, build_cfa
from .inline import callee_prefix, inline_callees
from .model import (
    ASSERTION, CYCLE_START, END_OF_CYCLE, ENTRY, EXIT, INITIAL, PLAIN, Assignment, Automaton, CallSite,
    CfaNetwork, Location, Transition, Variable, dump,
)

__all__ = [
    "ASSERTION", "CYCLE_START", "END_OF_CYCLE", "ENTRY", "EXIT", "INITIAL", "PLAIN", "Assignment",
    "Automaton", "CallSite", "CfaError", "CfaNetwork", "Location", "Transition", "Variable",
    "build_cfa", "callee_prefix", "dump", "inline_callees",
]

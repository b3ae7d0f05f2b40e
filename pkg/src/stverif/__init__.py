"""Formal verification of PLC programs written in Structured Text."""
__version__ = "0.1.0"

from .cex import localize, replay, validate  # noqa: E402
from .cfa import build_cfa, inline_callees  # noqa: E402
from .engine import EngineConfig, Verdict, brute_force_oracle, check  # noqa: E402
from .iterative import iterative_verify  # noqa: E402
from .reductions import reduce_problem  # noqa: E402
from .requirements import JobOptions, Property, VerificationProblem, assertions_to_problems, instantiate_pattern  # noqa: E402,E501
from .stparser import load_sources  # noqa: E402

__all__ = [
    "EngineConfig", "JobOptions", "Property", "Verdict", "VerificationProblem", "assertions_to_problems",
    "brute_force_oracle", "build_cfa", "check", "inline_callees", "instantiate_pattern", "iterative_verify",
    "load_sources", "localize", "reduce_problem", "replay", "validate",
]

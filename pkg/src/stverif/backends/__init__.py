"""External model checker backends."""
from .cbmc import emit_c
from .model import EmittedModel, NameMap, UnsupportedFeature
from .runner import (BackendConfigError, ToolConfig, ToolRun, command_line, parse_tool_output, resolve_tool,
                     run_external, tool_available)
from .smv import emit_smv

__all__ = ["emit_c", "emit_smv", "EmittedModel", "NameMap", "UnsupportedFeature", "BackendConfigError",
           "ToolConfig", "ToolRun", "command_line", "parse_tool_output", "resolve_tool", "run_external",
           "tool_available"]

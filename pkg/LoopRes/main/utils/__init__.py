from .config import RunConfig, format_config, parse_config
from .decorator import require_blocks
from .exit_code import ExitCode
from .flux_cache import FluxCache

__all__ = ["RunConfig", "format_config", "parse_config", "require_blocks", "ExitCode", "FluxCache"]

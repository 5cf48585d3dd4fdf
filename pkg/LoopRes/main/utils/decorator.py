from functools import wraps

from .config import RunConfig
from .errors import ConfigError


def require_blocks(*blocks: str):
    """
    A decorator that ensures the run configuration carries the required blocks before executing the command.

    Args:
        *blocks (str): Names of the configuration blocks the command reads
                       (e.g. "system", "sweep").

    Returns:
        function: The decorated coroutine that checks the configuration before execution.
                  The block names are exposed as the `required_blocks` attribute.

    Raises:
        ConfigError: If a required block is missing, with a message listing the missing blocks.
    """

    def decorator(func):
        @wraps(func)
        async def wrapper(config: RunConfig, *args, **kwargs):
            missing = [name for name in blocks if getattr(config, name, None) is None]
            if not missing:
                return await func(config, *args, **kwargs)

            else:
                raise ConfigError(
                    f"Command '{config.command}' needs the following blocks: {'; '.join(missing)}"
                )

        wrapper.required_blocks = tuple(blocks)
        return wrapper

    return decorator

from typing import Optional


class LoopResError(Exception):
    """Базовая ошибка пакета LoopRes."""


class InvalidParameterError(LoopResError, ValueError):
    pass


class NumericalSingularityError(LoopResError, ArithmeticError):
    pass


class ConvergenceError(LoopResError, RuntimeError):
    def __init__(self, message: str, residual: float) -> None:
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class SweepPointError(LoopResError, RuntimeError):
    def __init__(self, delta: float, cause: Exception) -> None:
        super().__init__(f"Solver failed at delta={delta!r}: {cause}")
        self.delta = delta
        self.cause = cause


class GeometryError(LoopResError, ValueError):
    pass


class InstabilityError(LoopResError, RuntimeError):
    def __init__(self, step: int, max_field: float, limit: float) -> None:
        super().__init__(
            f"Field blow-up at step {step}: max |Hz| = {max_field:.3e} exceeds {limit:.3e}"
        )
        self.step = step
        self.max_field = max_field


class ConfigError(LoopResError, ValueError):
    def __init__(self, message: str, line: Optional[int] = None) -> None:
        if line is not None:
            message = f"line {line}: {message}"

        super().__init__(message)
        self.line = line


class GridMismatchError(LoopResError, ValueError):
    pass

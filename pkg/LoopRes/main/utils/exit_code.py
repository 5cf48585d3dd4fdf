from enum import IntEnum

from .errors import (ConfigError, ConvergenceError, InstabilityError,
                     NumericalSingularityError, SweepPointError)


class ExitCode(IntEnum):
    # Успех
    OK = 0

    # Ошибки запуска
    CONFIG_ERROR = 2  # Некорректная конфигурация или входные данные
    NUMERICAL_ERROR = 3  # Сингулярность, неустойчивость, отказ решателя
    FDTD_UNCONVERGED = 4  # FDTD не вышел на стационар до предела циклов

    @classmethod
    def for_error(cls, err: BaseException) -> "ExitCode":
        if isinstance(err, (NumericalSingularityError, ConvergenceError, InstabilityError, SweepPointError)):
            return cls.NUMERICAL_ERROR

        if isinstance(err, (ConfigError, ValueError, OSError)):
            return cls.CONFIG_ERROR

        return cls.NUMERICAL_ERROR

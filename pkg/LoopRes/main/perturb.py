import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from .loop_system import A1, LoopSystem, build_dynamics_matrix, drive_vector, solve_stack
from .spectra import solve_detunings
from .utils.csv_writer import write_table
from .utils.errors import InvalidParameterError

logger = logging.getLogger("LRES:Perturb")

ROUNDTRIP_PAIR = (2, 3)

EXPANSION_HEADER = (
    "delta", "re_c0", "im_c0", "re_c1", "im_c1", "re_c2", "im_c2", "T_expanded", "T_full",
)


def transmission_amplitude(sys: LoopSystem, deltas: Sequence[float] | np.ndarray) -> np.ndarray:
    """Комплексная амплитуда прохождения a_out/a_in на сетке отстроек."""
    amplitudes = solve_detunings(sys, np.asarray(deltas, dtype=float))
    return -1.0 + math.sqrt(2 * sys.kappa) * amplitudes[:, A1] / sys.a_in


def roundtrip_pattern(phase: float) -> np.ndarray:
    """Матрица M₁: вклад связи ξ23 единичного модуля с фазой phase в M."""
    pattern = np.zeros((6, 6), dtype=complex)
    forward = -1j * np.exp(1j * phase)
    backward = -1j * np.exp(-1j * phase)

    # a2 <- b3, a3 <- b2
    pattern[2, 5] = forward
    pattern[4, 3] = forward
    # b2 <- a3, b3 <- a2
    pattern[3, 4] = backward
    pattern[5, 2] = backward
    return pattern


def _without_roundtrip(sys: LoopSystem) -> LoopSystem:
    return sys.with_coupling(*ROUNDTRIP_PAIR, 0.0)


def _with_roundtrip(sys: LoopSystem, x: float, phase: float) -> LoopSystem:
    return sys.with_coupling(*ROUNDTRIP_PAIR, x * np.exp(1j * phase))


@dataclass(frozen=True)
class ExpansionReport:
    system: LoopSystem
    delta: np.ndarray
    phase: float
    c0: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    x: float
    T_expanded: np.ndarray
    T_full: np.ndarray

    @property
    def discrepancy(self) -> float:
        return float(np.max(np.abs(self.T_expanded - self.T_full)))

    def amplitude(self, x: float) -> np.ndarray:
        """Ряд c0 + c1·x + c2·x²."""
        return self.c0 + self.c1 * x + self.c2 * x**2

    def rows(self) -> Iterator[Tuple[float, ...]]:
        for i, delta in enumerate(self.delta):
            yield (
                float(delta),
                float(self.c0[i].real), float(self.c0[i].imag),
                float(self.c1[i].real), float(self.c1[i].imag),
                float(self.c2[i].real), float(self.c2[i].imag),
                float(self.T_expanded[i]),
                float(self.T_full[i]),
            )


def series_coefficients(
    sys: LoopSystem,
    deltas: Sequence[float] | np.ndarray,
    phase: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Коэффициенты c0, c1, c2 амплитуды прохождения по x = |ξ23|.

    Ряд резольвенты для M(x) = M₀ + x·M₁:
    C0 = -M₀⁻¹·d, C1 = -M₀⁻¹·M₁·C0, C2 = -M₀⁻¹·M₁·C1. Каждая вставка M₁ -
    один переход света между резонаторами 2 и 3.
    """
    if phase is None:
        phase = float(np.angle(sys.coupling(*ROUNDTRIP_PAIR)))

    deltas = np.asarray(deltas, dtype=float)
    base = _without_roundtrip(sys).with_detuning(0.0)

    eye = np.eye(6)
    stack = build_dynamics_matrix(base)[None] - 1j * deltas[:, None, None] * eye[None]
    pattern = roundtrip_pattern(phase)

    zeroth = solve_stack(stack, -drive_vector(base))
    first = solve_stack(stack, -(zeroth @ pattern.T))
    second = solve_stack(stack, -(first @ pattern.T))

    scale = math.sqrt(2 * sys.kappa) / sys.a_in
    return (
        -1.0 + scale * zeroth[:, A1],
        scale * first[:, A1],
        scale * second[:, A1],
    )


def expand_roundtrip(
    sys: LoopSystem,
    deltas: Sequence[float] | np.ndarray,
    x: Optional[float] = None,
) -> ExpansionReport:
    """Разложение Тейлора амплитуды прохождения до второго порядка по |ξ23| около ξ23 = 0.

    Args:
        sys (LoopSystem): Система; arg ξ23 фиксирует фазу разложения.
        deltas (Sequence[float] | np.ndarray): Сетка отстроек.
        x (float, optional): Модуль |ξ23| (в единицах γ) для восстановления T.
            По умолчанию берётся из sys.

    Returns:
        ExpansionReport: Коэффициенты, восстановленное и точное T.
    """
    if x is None:
        x = abs(sys.coupling(*ROUNDTRIP_PAIR))

    if x < 0:
        raise InvalidParameterError(f"Expansion variable must be non-negative, got {x}")

    deltas = np.asarray(deltas, dtype=float)
    phase = float(np.angle(sys.coupling(*ROUNDTRIP_PAIR)))
    c0, c1, c2 = series_coefficients(sys, deltas, phase)

    expanded = np.abs(c0 + c1 * x + c2 * x**2) ** 2
    full = np.abs(transmission_amplitude(_with_roundtrip(sys, x, phase), deltas)) ** 2

    report = ExpansionReport(
        system=sys,
        delta=deltas,
        phase=phase,
        c0=c0,
        c1=c1,
        c2=c2,
        x=float(x),
        T_expanded=expanded,
        T_full=full,
    )
    logger.debug(f"Roundtrip expansion at x={x}: max discrepancy {report.discrepancy:.3e}")
    return report


def validate_expansion(report: ExpansionReport, x: float) -> float:
    """sup по сетке |T(ряд) - T(точное решение)| при |ξ23| = x."""
    if x < 0:
        raise InvalidParameterError(f"Expansion variable must be non-negative, got {x}")

    expanded = np.abs(report.amplitude(x)) ** 2
    full = np.abs(
        transmission_amplitude(_with_roundtrip(report.system, x, report.phase), report.delta)
    ) ** 2
    return float(np.max(np.abs(expanded - full)))


def finite_difference_coefficients(
    sys: LoopSystem,
    deltas: Sequence[float] | np.ndarray,
    step: float = 1e-4,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Независимая оценка c0, c1, c2 центральными разностями с экстраполяцией Ричардсона."""
    deltas = np.asarray(deltas, dtype=float)
    phase = float(np.angle(sys.coupling(*ROUNDTRIP_PAIR)))

    def amplitude(x: float) -> np.ndarray:
        return transmission_amplitude(_with_roundtrip(sys, x, phase), deltas)

    centre = amplitude(0.0)
    samples = {k: (amplitude(k * step), amplitude(-k * step)) for k in (1, 2)}

    def first(k: int) -> np.ndarray:
        plus, minus = samples[k]
        return (plus - minus) / (2 * k * step)

    def second(k: int) -> np.ndarray:
        plus, minus = samples[k]
        return (plus - 2 * centre + minus) / (k * step) ** 2

    c1 = (4 * first(1) - first(2)) / 3
    c2 = (4 * second(1) - second(2)) / 3 / 2
    return centre, c1, c2


async def write_expansion(report: ExpansionReport, path: Path | str) -> Path:
    return await write_table(path, EXPANSION_HEADER, report.rows())

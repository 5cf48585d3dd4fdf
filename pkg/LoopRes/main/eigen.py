import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Literal, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .loop_system import LoopSystem, build_dynamics_matrix
from .utils.csv_writer import write_table
from .utils.errors import ConvergenceError, InvalidParameterError

logger = logging.getLogger("LRES:Eigen")

DEFAULT_PHASE_SAMPLES = 256
DEFAULT_EPS_ODD = 1e-8
DEFAULT_EPS_CONST = 1e-8
DEGENERACY_TOLERANCE = 1e-9
CLOSURE_TOLERANCE = 1e-6

Periodicity = Literal["constant", "pi-periodic", "2pi-periodic"]

# Порядок "худшего" случая при сводной классификации
_SEVERITY = {"constant": 0, "pi-periodic": 1, "2pi-periodic": 2}


@dataclass(frozen=True)
class EigenReport:
    eigenvalues: np.ndarray

    @property
    def energies(self) -> np.ndarray:
        """Энергии одетых состояний ζ = Im λ."""
        return self.eigenvalues.imag

    @property
    def decay_rates(self) -> np.ndarray:
        return -self.eigenvalues.real

    def rows(self) -> Iterator[Tuple[float, float, float]]:
        for value in self.eigenvalues:
            yield float(value.real), float(value.imag), float(-value.real)


@dataclass(frozen=True)
class PeriodicityReport:
    which: Tuple[int, int]
    phases: np.ndarray
    eigenvalues: np.ndarray
    power: np.ndarray
    branch_classes: Tuple[Periodicity, ...]
    classification: Periodicity
    closure_defect: float
    tracked: bool

    @property
    def energies(self) -> np.ndarray:
        """Отслеженные кривые ζ_k(φ), форма (n, 6)."""
        return self.eigenvalues.imag

    @property
    def total_power(self) -> np.ndarray:
        """|ζ̃(l)|², просуммированная по всем ветвям."""
        return self.power.sum(axis=0)

    def odd_fraction(self) -> np.ndarray:
        """Доля мощности в нечётных гармониках для каждой ветви."""
        nonzero = self.power[:, 1:].sum(axis=1)
        odd = self.power[:, 1::2].sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(nonzero > 0, odd / nonzero, 0.0)

    def curve_rows(self) -> Iterator[Tuple[float, ...]]:
        for phi, zeta in zip(self.phases, self.energies):
            yield (float(phi), *(float(z) for z in zeta))

    def power_rows(self) -> Iterator[Tuple[int, float]]:
        for l, value in enumerate(self.total_power):
            yield l, float(value)


def canonical_order(eigenvalues: np.ndarray) -> np.ndarray:
    """Индексы сортировки: по убыванию Im λ, при равенстве по убыванию Re λ."""
    return np.lexsort((-eigenvalues.real, -eigenvalues.imag))


def _eigenvalues(matrix: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.eigvals(matrix)

    except np.linalg.LinAlgError as err:
        raise ConvergenceError(f"Eigensolver did not converge: {err}", float("nan")) from err


def eigen_report(sys: LoopSystem) -> EigenReport:
    """Собственные значения матрицы динамики в каноническом порядке."""
    values = _eigenvalues(build_dynamics_matrix(sys))
    return EigenReport(eigenvalues=values[canonical_order(values)])


def _is_degenerate(values: np.ndarray) -> bool:
    gaps = np.abs(values[:, None] - values[None, :])
    gaps[np.diag_indices(len(values))] = np.inf
    return bool(gaps.min() < DEGENERACY_TOLERANCE)


def _match(previous: np.ndarray, current: np.ndarray) -> np.ndarray:
    cost = np.abs(previous[:, None] - current[None, :])
    _, columns = linear_sum_assignment(cost)
    return current[columns]


def track_eigenvalues(
    sys: LoopSystem,
    which: Tuple[int, int],
    n: int = DEFAULT_PHASE_SAMPLES,
) -> Tuple[np.ndarray, np.ndarray, float, bool]:
    """Непрерывно отслеживает шесть собственных значений при φ_which ∈ [0, 2π).

    Сопоставление соседних точек - задача о назначениях по расстоянию до
    линейного прогноза в комплексной плоскости.

    Returns:
        Tuple[np.ndarray, np.ndarray, float, bool]: Фазы (n,), значения (n, 6),
            невязка замыкания кривых при φ → 2π и признак успешного отслеживания.
            При вырождении (или незамкнутых кривых) ветви упорядочиваются
            по энергии, признак равен False.
    """
    if abs(sys.coupling(*which)) == 0:
        raise InvalidParameterError(
            f"Phase of xi{which[0]}{which[1]} is undefined: coupling modulus is zero"
        )

    phases = 2 * np.pi * np.arange(n) / n
    raw = np.stack(
        [_eigenvalues(build_dynamics_matrix(sys.with_phase(*which, phi))) for phi in phases]
    )
    closing = _eigenvalues(build_dynamics_matrix(sys.with_phase(*which, 2 * np.pi)))

    def sorted_branches() -> np.ndarray:
        return np.stack([row[canonical_order(row)] for row in raw])

    if any(_is_degenerate(row) for row in raw):
        logger.warning(
            f"Degenerate eigenvalues while sweeping phi{which[0]}{which[1]}, "
            "falling back to energy-sorted branches"
        )
        branches = sorted_branches()
        return phases, branches, 0.0, False

    tracked = np.empty_like(raw)
    tracked[0] = raw[0][canonical_order(raw[0])]
    for k in range(1, n):
        predicted = tracked[k - 1] if k == 1 else 2 * tracked[k - 1] - tracked[k - 2]
        tracked[k] = _match(predicted, raw[k])

    end = _match(2 * tracked[-1] - tracked[-2], closing)
    closure = float(np.abs(end - tracked[0]).max())

    if closure > CLOSURE_TOLERANCE:
        logger.warning(
            f"Tracked branches do not close over 2pi in phi{which[0]}{which[1]} "
            f"(defect {closure:.3e}), falling back to energy-sorted branches"
        )
        return phases, sorted_branches(), closure, False

    return phases, tracked, closure, True


def classify_power(
    power: np.ndarray,
    eps_odd: float = DEFAULT_EPS_ODD,
    eps_const: float = DEFAULT_EPS_CONST,
) -> Periodicity:
    """Классифицирует спектр мощности |ζ̃(l)|² одной ветви."""
    n = len(power)
    nonzero = float(power[1:].sum())
    odd = float(power[1::2].sum())

    # Опорная мощность не меньше n (γ = 1): у ветви с нулевым средним |ζ̃(0)|² ≈ 0,
    # и без этого пола порог обнулялся бы
    if nonzero < eps_const * max(float(power[0]), float(n)):
        return "constant"

    if odd < eps_odd * nonzero:
        return "pi-periodic"

    return "2pi-periodic"


def periodicity(
    sys: LoopSystem,
    which: Tuple[int, int],
    n: int = DEFAULT_PHASE_SAMPLES,
    eps_odd: float = DEFAULT_EPS_ODD,
    eps_const: float = DEFAULT_EPS_CONST,
) -> PeriodicityReport:
    """Периодичность собственных энергий по фазе φ_which через ДПФ.

    Анализируются все шесть ветвей, итоговая классификация - худший случай
    (любая нечётная гармоника даёт 2π-периодичность).

    Raises:
        InvalidParameterError: n не степень двойки >= 64 или |ξ_which| = 0.
    """
    if n < 64 or n & (n - 1):
        raise InvalidParameterError(f"n must be a power of two >= 64, got {n}")

    phases, branches, closure, tracked = track_eigenvalues(sys, which, n)

    spectrum = np.fft.fft(branches.imag, axis=0, norm="ortho")
    power = (np.abs(spectrum) ** 2).T

    classes = tuple(classify_power(row, eps_odd, eps_const) for row in power)
    worst = max(classes, key=_SEVERITY.__getitem__)

    logger.debug(f"phi{which[0]}{which[1]} sweep over {n} samples: {worst}")
    return PeriodicityReport(
        which=tuple(which),
        phases=phases,
        eigenvalues=branches,
        power=power,
        branch_classes=classes,
        classification=worst,
        closure_defect=closure,
        tracked=tracked,
    )


EIGEN_HEADER = ("re_lambda", "im_lambda", "decay_rate")
CURVE_HEADER = ("phi", *(f"zeta_{k}" for k in range(1, 7)))
POWER_HEADER = ("l", "power")


async def write_eigen(report: EigenReport, path: Path | str) -> Path:
    return await write_table(path, EIGEN_HEADER, report.rows())


async def write_periodicity(report: PeriodicityReport, directory: Path | str) -> List[Path]:
    directory = Path(directory)
    return [
        await write_table(directory / "eigen_curves.csv", CURVE_HEADER, report.curve_rows()),
        await write_table(directory / "eigen_power.csv", POWER_HEADER, report.power_rows()),
    ]

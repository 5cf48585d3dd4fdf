import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .utils.errors import (ConvergenceError, InvalidParameterError,
                           NumericalSingularityError)

logger = logging.getLogger("LRES:LoopSystem")

N_RESONATORS = 3
N_MODES = 6

# Порядок мод: (a1, b1, a2, b2, a3, b3)
A1, B1 = 0, 1

STATIONARITY_TOLERANCE = 1e-10


def critical_kappa(xi11: complex, gamma1: float) -> float:
    """Связь волокно-резонатор 1 при критической связи.

    Args:
        xi11 (complex): Параметр рассеяния в резонаторе 1 (в единицах γ).
        gamma1 (float): Собственные потери резонатора 1.

    Returns:
        float: κ = sqrt(|ξ11|² + (γ1/2)²).

    Raises:
        InvalidParameterError: Если gamma1 <= 0.
    """
    if not gamma1 > 0:
        raise InvalidParameterError(f"gamma1 must be positive, got {gamma1!r}")

    return math.sqrt(abs(xi11) ** 2 + (gamma1 / 2) ** 2)


def _wrap_phase(phi: float) -> float:
    """Приводит фазу к интервалу (-π, π]."""
    phi = math.remainder(phi, 2 * math.pi)
    if phi <= -math.pi:
        phi += 2 * math.pi

    return phi


def _as_triplet(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(N_RESONATORS, float(arr))

    if arr.shape != (N_RESONATORS,):
        raise InvalidParameterError(
            f"{name} must be a scalar or have {N_RESONATORS} entries, got shape {arr.shape}"
        )

    return arr


def _check_index(i: int) -> int:
    if i not in (1, 2, 3):
        raise InvalidParameterError(f"Resonator index must be 1, 2 or 3, got {i!r}")

    return i - 1


class LoopSystem:
    __slots__ = ["_delta", "_xi", "_gamma", "_kappa", "_a_in", "_critical"]

    def __init__(
        self,
        delta: float | Sequence[float] = 0.0,
        xi: Optional[np.ndarray] = None,
        gamma: float | Sequence[float] = 1.0,
        kappa: Optional[float] = None,
        a_in: complex = 1.0 + 0.0j,
    ) -> None:
        """Параметры системы трёх резонаторов в петле, связанной с волокном.

        Все частоты в единицах γ.

        Args:
            delta (float | Sequence[float]): Отстройки Δ_l = ω_l - ω_in.
            xi (np.ndarray, optional): Симметричная комплексная матрица ξ 3×3;
                диагональ - параметры рассеяния h_n.
            gamma (float | Sequence[float]): Собственные потери γ_n.
            kappa (float, optional): Связь с волокном. Если не задана -
                правило критической связи по |ξ11|.
            a_in (complex): Амплитуда накачки.

        Raises:
            InvalidParameterError: Несимметричная ξ, отрицательные потери и т.п.
        """
        delta_arr = _as_triplet(delta, "delta")
        gamma_arr = _as_triplet(gamma, "gamma")

        if xi is None:
            xi_arr = np.zeros((N_RESONATORS, N_RESONATORS), dtype=complex)

        else:
            xi_arr = np.array(xi, dtype=complex)

        if xi_arr.shape != (N_RESONATORS, N_RESONATORS):
            raise InvalidParameterError(f"xi must be 3x3, got shape {xi_arr.shape}")

        if not np.array_equal(xi_arr, xi_arr.T):
            raise InvalidParameterError("xi must be exactly symmetric (xi[n][m] == xi[m][n])")

        if not np.all(np.isfinite(xi_arr)) or not np.all(np.isfinite(delta_arr)):
            raise InvalidParameterError("delta and xi must be finite")

        if np.any(gamma_arr < 0):
            raise InvalidParameterError(f"gamma must be non-negative, got {gamma_arr.tolist()}")

        self._critical = kappa is None
        if kappa is None:
            kappa = critical_kappa(xi_arr[0, 0], float(gamma_arr[0]))

        if kappa < 0 or not math.isfinite(kappa):
            raise InvalidParameterError(f"kappa must be non-negative, got {kappa!r}")

        for arr in (delta_arr, gamma_arr, xi_arr):
            arr.flags.writeable = False

        self._delta = delta_arr
        self._xi = xi_arr
        self._gamma = gamma_arr
        self._kappa = float(kappa)
        self._a_in = complex(a_in)

    @classmethod
    def from_couplings(
        cls,
        couplings: Dict[Tuple[int, int], complex],
        delta: float | Sequence[float] = 0.0,
        gamma: float | Sequence[float] = 1.0,
        kappa: Optional[float] = None,
        a_in: complex = 1.0 + 0.0j,
    ) -> "LoopSystem":
        """Строит систему из словаря {(i, j): ξ_ij} с индексами 1..3."""
        xi = np.zeros((N_RESONATORS, N_RESONATORS), dtype=complex)
        for (i, j), value in couplings.items():
            n, m = _check_index(i), _check_index(j)
            xi[n, m] = value
            xi[m, n] = value

        return cls(delta=delta, xi=xi, gamma=gamma, kappa=kappa, a_in=a_in)

    @classmethod
    def from_polar(
        cls,
        moduli: Dict[Tuple[int, int], float],
        phases: Optional[Dict[Tuple[int, int], float]] = None,
        delta: float | Sequence[float] = 0.0,
    ) -> "LoopSystem":
        """Строит систему из модулей |ξ_ij| и фаз φ_ij в единицах π.

        γ = 1, a_in = 1, κ по правилу критической связи.
        """
        phases = phases or {}
        couplings = {
            key: modulus * np.exp(1j * math.pi * phases.get(key, 0.0))
            for key, modulus in moduli.items()
        }
        return cls.from_couplings(couplings, delta=delta)

    def __eq__(self, value: object) -> bool:
        if not isinstance(value, LoopSystem):
            return False

        return (
            np.array_equal(self._delta, value._delta)
            and np.array_equal(self._xi, value._xi)
            and np.array_equal(self._gamma, value._gamma)
            and self._kappa == value._kappa
            and self._a_in == value._a_in
        )

    def __hash__(self) -> int:
        return hash(
            (
                self._delta.tobytes(),
                self._xi.tobytes(),
                self._gamma.tobytes(),
                self._kappa,
                self._a_in,
            )
        )

    def __repr__(self) -> str:
        return (
            f"LoopSystem(delta={self._delta.tolist()}, xi={self._xi.tolist()}, "
            f"gamma={self._gamma.tolist()}, kappa={self._kappa!r}, a_in={self._a_in!r})"
        )

    @property
    def delta(self) -> np.ndarray:
        return self._delta

    @property
    def xi(self) -> np.ndarray:
        return self._xi

    @property
    def gamma(self) -> np.ndarray:
        return self._gamma

    @property
    def kappa(self) -> float:
        return self._kappa

    @property
    def a_in(self) -> complex:
        return self._a_in

    @property
    def is_critical(self) -> bool:
        """True, если κ выводится из правила критической связи."""
        return self._critical

    @property
    def h(self) -> np.ndarray:
        return np.diag(self._xi).copy()

    def coupling(self, i: int, j: int) -> complex:
        return complex(self._xi[_check_index(i), _check_index(j)])

    def phase(self, i: int, j: int) -> float:
        """Фаза φ_ij = arg ξ_ij в интервале (-π, π]."""
        return _wrap_phase(float(np.angle(self.coupling(i, j))))

    def total_decay(self) -> np.ndarray:
        """Полные скорости затухания мод (a1, b1, a2, b2, a3, b3)."""
        decay = np.repeat(self._gamma, 2).astype(float)
        decay[A1] += 2 * self._kappa
        decay[B1] += 2 * self._kappa
        return decay

    def _replace(self, **kwargs) -> "LoopSystem":
        params = {
            "delta": self._delta,
            "xi": self._xi,
            "gamma": self._gamma,
            "kappa": None if self._critical else self._kappa,
            "a_in": self._a_in,
        }
        params.update(kwargs)
        return LoopSystem(**params)

    def with_coupling(self, i: int, j: int, value: complex) -> "LoopSystem":
        """Копия с заменой ξ_ij = ξ_ji = value.

        При правиле критической связи κ пересчитывается по |ξ11|.
        """
        n, m = _check_index(i), _check_index(j)
        xi = self._xi.copy()
        xi[n, m] = value
        xi[m, n] = value
        return self._replace(xi=xi)

    def with_phase(self, i: int, j: int, phi: float) -> "LoopSystem":
        modulus = abs(self.coupling(i, j))
        if modulus == 0:
            raise InvalidParameterError(
                f"Phase of xi{i}{j} is undefined: coupling modulus is zero"
            )

        return self.with_coupling(i, j, modulus * np.exp(1j * phi))

    def with_detuning(self, delta: float | Sequence[float]) -> "LoopSystem":
        return self._replace(delta=delta)

    def with_drive(self, a_in: complex) -> "LoopSystem":
        return self._replace(a_in=a_in)

    def with_kappa(self, kappa: Optional[float]) -> "LoopSystem":
        return self._replace(kappa=kappa)


@dataclass(frozen=True)
class SteadyState:
    amplitudes: np.ndarray
    a_out: complex
    b_out: complex
    T: float
    R: float
    occupancy_a1: float
    occupancy_b1: float
    phi_a: float

    @property
    def phase_a1(self) -> float:
        """Знаковая фаза arg(a1) в (-π, π]."""
        return _wrap_phase(float(np.angle(self.amplitudes[A1])))

    @property
    def loss(self) -> float:
        """Доля мощности, потерянная внутри резонаторов: 1 - T - R."""
        return 1.0 - self.T - self.R

    def intracavity_occupancy(self, kappa: float, a_in: complex) -> np.ndarray:
        """Масштабированные заселённости всех шести мод 2κ|c|²/|a_in|²."""
        return 2 * kappa * np.abs(self.amplitudes) ** 2 / abs(a_in) ** 2


def build_dynamics_matrix(sys: LoopSystem) -> np.ndarray:
    """Матрица M уравнений движения dC/dt = M·C + drive, C = (a1, b1, a2, b2, a3, b3)."""
    decay = sys.total_decay()
    detuning = np.repeat(sys.delta, 2)

    matrix = np.zeros((N_MODES, N_MODES), dtype=complex)
    matrix[np.diag_indices(N_MODES)] = -(1j * detuning + decay / 2)

    # a_m <- b_n: -i ξ_mn;  b_m <- a_n: -i ξ*_nm
    matrix[0::2, 1::2] = -1j * sys.xi
    matrix[1::2, 0::2] = -1j * sys.xi.conj().T
    return matrix


def drive_vector(sys: LoopSystem) -> np.ndarray:
    drive = np.zeros(N_MODES, dtype=complex)
    drive[A1] = math.sqrt(2 * sys.kappa) * sys.a_in
    return drive


def solve_stack(matrices: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Решает стопку систем matrices[k] · x[k] = rhs[k] (LU с частичным выбором).

    Args:
        matrices (np.ndarray): Массив формы (n, 6, 6) или (6, 6).
        rhs (np.ndarray): Правая часть формы (6,) (общая) или (n, 6).

    Returns:
        np.ndarray: Решения формы (n, 6) (или (6,) для одиночной матрицы).

    Raises:
        NumericalSingularityError: Если одна из матриц вырождена.
    """
    matrices = np.asarray(matrices, dtype=complex)
    rhs = np.asarray(rhs, dtype=complex)

    single = matrices.ndim == 2
    if single:
        matrices = matrices[None]

    if rhs.ndim == 1:
        rhs = np.broadcast_to(rhs, matrices.shape[:-1])

    try:
        solution = np.linalg.solve(matrices, rhs[..., None])[..., 0]

    except np.linalg.LinAlgError as err:
        raise NumericalSingularityError(f"Singular dynamics matrix: {err}") from err

    return solution[0] if single else solution


def stationarity_residual(sys: LoopSystem, amplitudes: np.ndarray) -> float:
    return float(np.linalg.norm(build_dynamics_matrix(sys) @ amplitudes + drive_vector(sys)))


def _observables(sys: LoopSystem, amplitudes: np.ndarray) -> SteadyState:
    root = math.sqrt(2 * sys.kappa)
    a_in = sys.a_in
    a1, b1 = amplitudes[A1], amplitudes[B1]

    a_out = -a_in + root * a1
    b_out = root * b1
    power = abs(a_in) ** 2

    return SteadyState(
        amplitudes=amplitudes,
        a_out=complex(a_out),
        b_out=complex(b_out),
        T=float(abs(a_out) ** 2 / power),
        R=float(abs(b_out) ** 2 / power),
        occupancy_a1=float(2 * sys.kappa * abs(a1) ** 2 / power),
        occupancy_b1=float(2 * sys.kappa * abs(b1) ** 2 / power),
        phi_a=abs(_wrap_phase(float(np.angle(a1)))),
    )


def observables_stack(kappa: float, a_in: complex, amplitudes: np.ndarray) -> Dict[str, np.ndarray]:
    """Векторизованные T, R, заселённости и φ_a для стопки амплитуд формы (n, 6)."""
    root = math.sqrt(2 * kappa)
    power = abs(a_in) ** 2
    a1 = amplitudes[:, A1]
    b1 = amplitudes[:, B1]

    a_out = -a_in + root * a1
    b_out = root * b1
    phi = np.angle(a1)

    return {
        "a_out": a_out,
        "b_out": b_out,
        "T": np.abs(a_out) ** 2 / power,
        "R": np.abs(b_out) ** 2 / power,
        "occupancy_a1": 2 * kappa * np.abs(a1) ** 2 / power,
        "occupancy_b1": 2 * kappa * np.abs(b1) ** 2 / power,
        "phi_a": np.abs(phi),
    }


def solve_steady_state(sys: LoopSystem) -> SteadyState:
    """Стационарное состояние C = -M⁻¹·drive и наблюдаемые T, R.

    Raises:
        NumericalSingularityError: Если M вырождена (только при нулевых потерях)
            или невязка стационарности превышает допуск.
    """
    matrix = build_dynamics_matrix(sys)
    drive = drive_vector(sys)
    amplitudes = solve_stack(matrix, -drive)

    residual = float(np.linalg.norm(matrix @ amplitudes + drive))
    if residual > STATIONARITY_TOLERANCE * float(np.linalg.norm(drive)):
        raise NumericalSingularityError(
            f"Steady state failed stationarity check: residual {residual:.3e}"
        )

    return _observables(sys, amplitudes)


def _rk4_affine_map(matrix: np.ndarray, drive: np.ndarray, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """Один шаг классического RK4 для линейной системы как аффинное отображение C -> A·C + b."""
    z = dt * matrix
    eye = np.eye(matrix.shape[0], dtype=complex)
    z2 = z @ z
    z3 = z2 @ z

    step = eye + z + z2 / 2 + z3 / 6 + z3 @ z / 24
    offset = dt * (eye + z / 2 + z2 / 6 + z3 / 24) @ drive
    return step, offset


def integrate_to_steady(
    sys: LoopSystem,
    t_end: float = 200.0,
    dt: Optional[float] = None,
    block_doublings: int = 8,
) -> SteadyState:
    """Интегрирует dC/dt = M·C + drive из C = 0 до |dC/dt| <= 1e-10.

    Независимый оракул для линейного решения. Шаги RK4 применяются блоками
    по 2**block_doublings шагов, скомпонованными в одно аффинное отображение.

    Args:
        sys (LoopSystem): Параметры системы.
        t_end (float): Предельное время интегрирования.
        dt (float, optional): Шаг. По умолчанию 1e-3 / max(1, max|M_ij|).
        block_doublings (int): log2 числа шагов между проверками сходимости.

    Raises:
        InvalidParameterError: Если dt нарушает условие dt·max|λ(M)| < 1.
        ConvergenceError: Если до t_end невязка не опустилась до 1e-10.
    """
    matrix = build_dynamics_matrix(sys)
    drive = drive_vector(sys)

    if dt is None:
        dt = 1e-3 / max(1.0, float(np.abs(matrix).max()))

    radius = float(np.abs(np.linalg.eigvals(matrix)).max())
    if not dt > 0 or dt * radius >= 1:
        raise InvalidParameterError(
            f"dt={dt!r} violates the stability bound dt*max|eig(M)| < 1 (max|eig| = {radius:.3e})"
        )

    step, offset = _rk4_affine_map(matrix, drive, dt)

    block_step, block_offset = step, offset
    for _ in range(block_doublings):
        block_offset = block_step @ block_offset + block_offset
        block_step = block_step @ block_step

    steps_per_block = 2**block_doublings
    n_blocks = max(1, math.ceil(t_end / (dt * steps_per_block)))

    amplitudes = np.zeros(matrix.shape[0], dtype=complex)
    residual = float(np.linalg.norm(drive))
    for _ in range(n_blocks):
        if residual <= STATIONARITY_TOLERANCE:
            break

        amplitudes = block_step @ amplitudes + block_offset
        residual = float(np.linalg.norm(matrix @ amplitudes + drive))

    if residual > STATIONARITY_TOLERANCE:
        raise ConvergenceError(
            f"Time integration did not settle within t_end={t_end}", residual
        )

    logger.debug(f"Integrated to steady state with dt={dt:.3e}, residual {residual:.3e}")
    return _observables(sys, amplitudes)

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import find_peaks, peak_widths

from .loop_system import (LoopSystem, build_dynamics_matrix, drive_vector,
                          observables_stack, solve_stack)
from .utils.csv_writer import write_table
from .utils.errors import (InvalidParameterError, NumericalSingularityError,
                           SweepPointError)

logger = logging.getLogger("LRES:Spectra")

DEFAULT_DELTA_MIN = -100.0
DEFAULT_DELTA_MAX = 100.0
DEFAULT_POINTS = 2001
DEFAULT_PHASE_SAMPLES = 256

SPECTRUM_HEADER = ("delta", "T", "R", "occ_a1", "occ_b1", "phi_a")

# Готовые наборы параметров (модули в единицах γ, фазы в единицах π)
PRESET_SYSTEMS: Dict[str, Tuple[Dict[Tuple[int, int], float], Dict[Tuple[int, int], float]]] = {
    "symmetric": ({(1, 1): 30, (2, 2): 20, (3, 3): 20, (1, 2): 30, (1, 3): 30}, {}),
    "chiral": ({(1, 1): 30, (2, 2): 20, (3, 3): 20, (1, 2): 30, (1, 3): 30}, {(1, 2): 0.2}),
    "chiral_pair": (
        {(1, 1): 30, (2, 2): 20, (3, 3): 20, (1, 2): 30, (1, 3): 30},
        {(1, 2): -0.6, (1, 3): 0.4},
    ),
    "closed_loop": ({(1, 1): 30, (2, 2): 20, (3, 3): 20, (1, 2): 30, (1, 3): 30, (2, 3): 15}, {}),
    "open_feed": ({(1, 1): 50, (2, 2): 20, (3, 3): 20, (1, 2): 10, (1, 3): 30}, {}),
    "weak_loop": ({(1, 1): 50, (2, 2): 20, (3, 3): 20, (1, 2): 10, (1, 3): 30, (2, 3): 5}, {}),
    "weak_loop_plus": (
        {(1, 1): 50, (2, 2): 20, (3, 3): 20, (1, 2): 10, (1, 3): 30, (2, 3): 5},
        {(2, 2): 1.6, (1, 3): 0.4},
    ),
    "weak_loop_minus": (
        {(1, 1): 50, (2, 2): 20, (3, 3): 20, (1, 2): 10, (1, 3): 30, (2, 3): 5},
        {(2, 2): 1.6, (1, 3): -0.4},
    ),
}


def preset_system(name: str) -> LoopSystem:
    """Система из готового набора параметров (symmetric, closed_loop, weak_loop, ...)."""
    if name not in PRESET_SYSTEMS:
        raise InvalidParameterError(
            f"Unknown parameter preset '{name}'. Known: {', '.join(sorted(PRESET_SYSTEMS))}"
        )

    moduli, phases = PRESET_SYSTEMS[name]
    return LoopSystem.from_polar(moduli, phases)


@dataclass(frozen=True)
class SpectrumPoint:
    delta: float
    T: float
    R: float
    occupancy_a1: float
    occupancy_b1: float
    phi_a: float


@dataclass(frozen=True)
class Spectrum:
    delta: np.ndarray
    T: np.ndarray
    R: np.ndarray
    occupancy_a1: np.ndarray
    occupancy_b1: np.ndarray
    phi_a: np.ndarray
    system: LoopSystem
    averaged_over: Optional[Tuple[int, int]] = None

    def __post_init__(self) -> None:
        if self.delta.ndim != 1 or len(self.delta) < 2:
            raise InvalidParameterError("Spectrum needs at least two detuning points")

        steps = np.diff(self.delta)
        if np.any(steps <= 0):
            raise InvalidParameterError("Detuning grid must be strictly increasing")

        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
            raise InvalidParameterError("Detuning grid must be uniform")

        for arr in (self.delta, self.T, self.R, self.occupancy_a1, self.occupancy_b1, self.phi_a):
            arr.flags.writeable = False

    @property
    def delta_min(self) -> float:
        return float(self.delta[0])

    @property
    def delta_max(self) -> float:
        return float(self.delta[-1])

    @property
    def step(self) -> float:
        return (self.delta_max - self.delta_min) / (len(self.delta) - 1)

    def __len__(self) -> int:
        return len(self.delta)

    def __iter__(self) -> Iterator[SpectrumPoint]:
        return iter(self.points)

    @property
    def points(self) -> List[SpectrumPoint]:
        return [
            SpectrumPoint(*(float(v) for v in row))
            for row in zip(
                self.delta, self.T, self.R, self.occupancy_a1, self.occupancy_b1, self.phi_a
            )
        ]

    def same_grid(self, other: "Spectrum") -> bool:
        return self.delta.shape == other.delta.shape and np.allclose(
            self.delta, other.delta, rtol=0, atol=1e-9 * max(1.0, abs(self.step))
        )


@dataclass(frozen=True)
class ResonanceFeature:
    kind: Literal["dip", "peak"]
    location: float
    value: float
    width: float
    channel: Literal["T", "R"] = "T"
    index: int = field(default=-1, compare=False)


def detuning_grid(
    delta_min: float = DEFAULT_DELTA_MIN,
    delta_max: float = DEFAULT_DELTA_MAX,
    n: int = DEFAULT_POINTS,
) -> np.ndarray:
    if n < 2:
        raise InvalidParameterError(f"A detuning grid needs n >= 2 points, got {n}")

    if not delta_min < delta_max:
        raise InvalidParameterError(f"Need delta_min < delta_max, got {delta_min} >= {delta_max}")

    return np.linspace(delta_min, delta_max, n)


def _detuning_stack(sys: LoopSystem, deltas: np.ndarray) -> np.ndarray:
    """Стопка матриц M(Δ) при Δ1 = Δ2 = Δ3 = Δ."""
    base = build_dynamics_matrix(sys.with_detuning(0.0))
    eye = np.eye(base.shape[0])
    return base[None, :, :] - 1j * deltas[:, None, None] * eye[None, :, :]


def solve_detunings(sys: LoopSystem, deltas: np.ndarray) -> np.ndarray:
    """Амплитуды мод для каждой отстройки сетки, форма (n, 6).

    Raises:
        SweepPointError: Ошибка решателя с указанием отстройки.
    """
    deltas = np.asarray(deltas, dtype=float)
    drive = drive_vector(sys)

    try:
        return solve_stack(_detuning_stack(sys, deltas), -drive)

    except NumericalSingularityError:
        # Находим конкретную точку для диагностики
        for delta in deltas:
            try:
                solve_stack(_detuning_stack(sys, np.array([delta]))[0], -drive)

            except NumericalSingularityError as err:
                raise SweepPointError(float(delta), err) from err

        raise


def _spectrum_from(
    sys: LoopSystem,
    deltas: np.ndarray,
    amplitudes: np.ndarray,
) -> Spectrum:
    obs = observables_stack(sys.kappa, sys.a_in, amplitudes)
    return Spectrum(
        delta=np.array(deltas, dtype=float),
        T=obs["T"],
        R=obs["R"],
        occupancy_a1=obs["occupancy_a1"],
        occupancy_b1=obs["occupancy_b1"],
        phi_a=obs["phi_a"],
        system=sys,
    )


def sweep_detuning(
    sys: LoopSystem,
    delta_min: float = DEFAULT_DELTA_MIN,
    delta_max: float = DEFAULT_DELTA_MAX,
    n: int = DEFAULT_POINTS,
) -> Spectrum:
    """Спектр T, R и диагностик резонатора 1 на равномерной сетке Δ."""
    deltas = detuning_grid(delta_min, delta_max, n)
    spectrum = _spectrum_from(sys, deltas, solve_detunings(sys, deltas))
    logger.debug(f"Swept {n} detunings on [{delta_min}, {delta_max}]")
    return spectrum


def _check_phase_args(sys: LoopSystem, which: Tuple[int, int], n: int, minimum: int) -> None:
    if n < minimum:
        raise InvalidParameterError(f"Need at least {minimum} phase samples, got {n}")

    if abs(sys.coupling(*which)) == 0:
        raise InvalidParameterError(
            f"Phase of xi{which[0]}{which[1]} is undefined: coupling modulus is zero"
        )


def phase_grid(n: int) -> np.ndarray:
    """n равномерных фаз на [0, 2π)."""
    return 2 * np.pi * np.arange(n) / n


def sweep_phase(
    sys: LoopSystem,
    which: Tuple[int, int],
    delta: float,
    n: int = DEFAULT_PHASE_SAMPLES,
) -> List[Tuple[float, float, float]]:
    """T и R как функции фазы φ_ij при фиксированной отстройке.

    Returns:
        List[Tuple[float, float, float]]: Тройки (φ, T, R), φ на [0, 2π).
    """
    _check_phase_args(sys, which, n, 2)

    phases = phase_grid(n)
    systems = [sys.with_phase(*which, phi).with_detuning(delta) for phi in phases]
    matrices = np.stack([build_dynamics_matrix(s) for s in systems])
    amplitudes = solve_stack(matrices, -drive_vector(sys))
    obs = observables_stack(sys.kappa, sys.a_in, amplitudes)

    return [
        (float(phi), float(t), float(r))
        for phi, t, r in zip(phases, obs["T"], obs["R"])
    ]


def phase_average(
    sys: LoopSystem,
    which: Tuple[int, int],
    deltas: Sequence[float] | np.ndarray,
    n_phase: int = DEFAULT_PHASE_SAMPLES,
) -> Spectrum:
    """Спектр, усреднённый по фазе φ_ij на [0, 2π) (правило прямоугольников).

    Усредняются интенсивности T, R и заселённости; φ_a после усреднения
    не определена и заполняется NaN.
    """
    _check_phase_args(sys, which, n_phase, 8)
    deltas = np.asarray(deltas, dtype=float)

    sums = {key: np.zeros(len(deltas)) for key in ("T", "R", "occupancy_a1", "occupancy_b1")}
    for phi in phase_grid(n_phase):
        shifted = sys.with_phase(*which, phi)
        obs = observables_stack(shifted.kappa, shifted.a_in, solve_detunings(shifted, deltas))
        for key, acc in sums.items():
            acc += obs[key]

    logger.debug(f"Averaged over phi{which[0]}{which[1]} with {n_phase} samples")
    return Spectrum(
        delta=np.array(deltas),
        T=sums["T"] / n_phase,
        R=sums["R"] / n_phase,
        occupancy_a1=sums["occupancy_a1"] / n_phase,
        occupancy_b1=sums["occupancy_b1"] / n_phase,
        phi_a=np.full(len(deltas), np.nan),
        system=sys,
        averaged_over=tuple(which),
    )


def _refine(deltas: np.ndarray, signal: np.ndarray, i: int, step: float) -> Tuple[float, float]:
    """Уточнение экстремума по трём точкам (парабола)."""
    if i <= 0 or i >= len(signal) - 1:
        return float(deltas[i]), float(signal[i])

    y0, y1, y2 = signal[i - 1], signal[i], signal[i + 1]
    denom = y0 - 2 * y1 + y2
    if denom == 0:
        return float(deltas[i]), float(y1)

    offset = float(np.clip(0.5 * (y0 - y2) / denom, -0.5, 0.5))
    return float(deltas[i] + offset * step), float(y1 - 0.25 * (y0 - y2) * offset)


def grid_features(
    deltas: np.ndarray,
    values: np.ndarray,
    channel: Literal["T", "R"],
    prominence: float,
    step: float,
) -> List[ResonanceFeature]:
    """Провалы и пики одного канала на равномерной сетке (по Δ или по λ)."""
    features: List[ResonanceFeature] = []
    for kind, signal in (("peak", values), ("dip", -values)):
        indices, _ = find_peaks(signal, prominence=prominence)
        if len(indices) == 0:
            continue

        widths = peak_widths(signal, indices, rel_height=0.5)[0] * step
        for i, width in zip(indices, widths):
            location, extremum = _refine(deltas, signal, int(i), step)
            features.append(
                ResonanceFeature(
                    kind=kind,
                    location=location,
                    value=extremum if kind == "peak" else -extremum,
                    width=float(width) if width > 0 else step,
                    channel=channel,
                    index=int(i),
                )
            )

    return features


def find_resonances(
    spec: Spectrum,
    prominence: float,
    channels: Sequence[Literal["T", "R"]] = ("T", "R"),
) -> List[ResonanceFeature]:
    """Локальные экстремумы T (и R) с выраженностью не меньше prominence.

    Положение уточняется параболой по трём точкам, ширина - по пересечениям
    уровня половины выраженности.
    """
    if len(spec) < 5:
        raise InvalidParameterError(f"Need at least 5 spectrum points, got {len(spec)}")

    if not prominence > 0:
        raise InvalidParameterError(f"prominence must be positive, got {prominence!r}")

    features: List[ResonanceFeature] = []
    for channel in channels:
        values = spec.T if channel == "T" else spec.R
        features.extend(grid_features(spec.delta, values, channel, prominence, spec.step))

    return sorted(features, key=lambda f: (f.channel, f.location))


def symmetry_defect(spec: Spectrum) -> Tuple[float, float]:
    """max |T(Δ) - T(-Δ)| и max |R(Δ) - R(-Δ)| на симметричной сетке."""
    if not np.allclose(spec.delta, -spec.delta[::-1], rtol=0, atol=1e-9 * max(1.0, spec.step)):
        raise InvalidParameterError("Detuning grid is not symmetric around zero")

    return (
        float(np.max(np.abs(spec.T - spec.T[::-1]))),
        float(np.max(np.abs(spec.R - spec.R[::-1]))),
    )


def spectrum_rows(spec: Spectrum) -> Iterator[Tuple[float, ...]]:
    for point in spec.points:
        yield (
            point.delta,
            point.T,
            point.R,
            point.occupancy_a1,
            point.occupancy_b1,
            point.phi_a,
        )


async def write_spectrum(spec: Spectrum, path: Path | str) -> Path:
    return await write_table(path, SPECTRUM_HEADER, spectrum_rows(spec))

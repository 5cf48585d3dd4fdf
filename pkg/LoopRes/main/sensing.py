import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .loop_system import LoopSystem
from .spectra import ResonanceFeature, Spectrum, find_resonances
from .utils.csv_writer import write_table
from .utils.errors import GridMismatchError, InvalidParameterError

logger = logging.getLogger("LRES:Sensing")

SHIFT_HEADER = ("feature_kind", "location_baseline", "location_perturbed", "shift", "width")


@dataclass(frozen=True)
class ParticleScenario:
    """Наночастица у резонатора `target` под азимутальным углом `theta`.

    Интеграл перекрытия с полем моды свёрнут в калибровочный модуль s0:
    |ξ_nn| при единичном контрасте δε.
    """

    target: int
    theta: float
    m: int
    delta_eps: float
    s0: float

    def __post_init__(self) -> None:
        if self.target not in (1, 2, 3):
            raise InvalidParameterError(f"Target resonator must be 1, 2 or 3, got {self.target!r}")

        if self.m < 1:
            raise InvalidParameterError(f"Azimuthal mode number must be >= 1, got {self.m}")

        if self.s0 < 0:
            raise InvalidParameterError(f"Calibration magnitude s0 must be >= 0, got {self.s0}")

    def at(self, theta: float) -> "ParticleScenario":
        return ParticleScenario(self.target, theta, self.m, self.delta_eps, self.s0)

    @property
    def period(self) -> float:
        """Период по углу, на котором положения частицы неразличимы: π/m."""
        return math.pi / self.m


@dataclass(frozen=True)
class SlabScenario:
    pair: Tuple[int, int]
    xi_background: complex
    xi_slab: complex
    eps_reference: float
    eps_background: float
    eps_slab: float

    def __post_init__(self) -> None:
        n, m = self.pair
        if n == m or n not in (1, 2, 3) or m not in (1, 2, 3):
            raise InvalidParameterError(f"Slab must sit between two distinct resonators, got {self.pair}")

        if self.eps_reference == self.eps_background:
            raise InvalidParameterError(
                "Reference slab permittivity must differ from the background permittivity"
            )

    def with_eps(self, eps_slab: float) -> "SlabScenario":
        return SlabScenario(
            self.pair,
            self.xi_background,
            self.xi_slab,
            self.eps_reference,
            self.eps_background,
            eps_slab,
        )


def particle_scattering(p: ParticleScenario) -> complex:
    """ξ_nn = s0 · δε · exp(2imθ)."""
    return complex(p.s0 * p.delta_eps * np.exp(2j * p.m * p.theta))


def particle_system(sys: LoopSystem, p: ParticleScenario, compose: bool = False) -> LoopSystem:
    """Система с рассеянием частицы в резонаторе p.target.

    Args:
        compose (bool): Добавить к уже имеющемуся ξ_nn, а не заменить его.
    """
    value = particle_scattering(p)
    if compose:
        value += sys.coupling(p.target, p.target)

    return sys.with_coupling(p.target, p.target, value)


def particle_phase_map(p: ParticleScenario, thetas: Sequence[float] | np.ndarray) -> np.ndarray:
    """Развёрнутая фаза arg ξ_nn как функция положения частицы."""
    values = np.array([particle_scattering(p.at(float(theta))) for theta in thetas])
    return np.unwrap(np.angle(values))


def slab_correction(s: SlabScenario) -> complex:
    """δξ = (ε_slab - ε⁰_slab) / (ε⁰_slab - ε_s) · ξ(slab)."""
    return complex((s.eps_slab - s.eps_reference) / (s.eps_reference - s.eps_background) * s.xi_slab)


def slab_coupling(s: SlabScenario) -> complex:
    """Полная связь пары: ξ(0) + ξ(slab) + δξ(slab)."""
    return complex(s.xi_background + s.xi_slab + slab_correction(s))


def slab_system(sys: LoopSystem, s: SlabScenario) -> LoopSystem:
    return sys.with_coupling(*s.pair, slab_coupling(s))


@dataclass(frozen=True)
class FeatureShift:
    kind: str
    channel: str
    baseline: float
    perturbed: float
    width: float

    @property
    def shift(self) -> float:
        return self.perturbed - self.baseline


@dataclass(frozen=True)
class ShiftReport:
    step: float
    matched: List[FeatureShift] = field(default_factory=list)
    disappeared: List[ResonanceFeature] = field(default_factory=list)
    appeared: List[ResonanceFeature] = field(default_factory=list)

    @property
    def shifts(self) -> np.ndarray:
        return np.array([item.shift for item in self.matched])

    def moved(self, threshold: Optional[float] = None) -> List[FeatureShift]:
        """Совпавшие особенности, сдвинувшиеся больше порога (по умолчанию шаг сетки)."""
        limit = self.step if threshold is None else threshold
        return [item for item in self.matched if abs(item.shift) > limit]

    def still(self, threshold: Optional[float] = None) -> List[FeatureShift]:
        limit = self.step if threshold is None else threshold
        return [item for item in self.matched if abs(item.shift) <= limit]

    def rows(self) -> Iterator[Tuple]:
        for item in self.matched:
            yield f"{item.channel}-{item.kind}", item.baseline, item.perturbed, item.shift, item.width

        for feature in self.disappeared:
            yield f"{feature.channel}-{feature.kind}", feature.location, math.nan, math.nan, feature.width

        for feature in self.appeared:
            yield f"{feature.channel}-{feature.kind}", math.nan, feature.location, math.nan, feature.width


def _group(features: List[ResonanceFeature]) -> Dict[Tuple[str, str], List[ResonanceFeature]]:
    groups: Dict[Tuple[str, str], List[ResonanceFeature]] = {}
    for feature in features:
        groups.setdefault((feature.channel, feature.kind), []).append(feature)

    return groups


def match_features(
    before: List[ResonanceFeature],
    after: List[ResonanceFeature],
    step: float,
    max_shift: Optional[float] = None,
) -> ShiftReport:
    """Сопоставляет два набора особенностей и измеряет их сдвиги.

    Особенности сопоставляются внутри групп одного вида и канала (T/R, провал/пик)
    по минимальной суммарной разности положений. Пары дальше max_shift
    считаются несопоставленными.
    """
    old_groups = _group(before)
    new_groups = _group(after)

    report = ShiftReport(step=step)
    for key in sorted(set(old_groups) | set(new_groups)):
        old = old_groups.get(key, [])
        new = new_groups.get(key, [])

        used_old, used_new = set(), set()
        if old and new:
            cost = np.abs(
                np.array([f.location for f in old])[:, None] - np.array([f.location for f in new])[None, :]
            )
            for i, j in zip(*linear_sum_assignment(cost)):
                if max_shift is not None and cost[i, j] > max_shift:
                    continue

                report.matched.append(
                    FeatureShift(
                        kind=key[1],
                        channel=key[0],
                        baseline=old[i].location,
                        perturbed=new[j].location,
                        width=old[i].width,
                    )
                )
                used_old.add(i)
                used_new.add(j)

        report.disappeared.extend(f for i, f in enumerate(old) if i not in used_old)
        report.appeared.extend(f for j, f in enumerate(new) if j not in used_new)

    logger.debug(
        f"Shift readout: {len(report.matched)} matched, "
        f"{len(report.disappeared)} disappeared, {len(report.appeared)} appeared"
    )
    return report


def shift_readout(
    baseline: Spectrum,
    perturbed: Spectrum,
    prominence: float,
    max_shift: Optional[float] = None,
) -> ShiftReport:
    """Сдвиги резонансных особенностей между двумя спектрами по Δ.

    Raises:
        GridMismatchError: Спектры посчитаны на разных сетках Δ.
    """
    if not baseline.same_grid(perturbed):
        raise GridMismatchError("Spectra must share the same detuning grid")

    return match_features(
        find_resonances(baseline, prominence), find_resonances(perturbed, prominence), baseline.step, max_shift
    )


async def write_shifts(report: ShiftReport, path: Path | str) -> Path:
    return await write_table(path, SHIFT_HEADER, report.rows())

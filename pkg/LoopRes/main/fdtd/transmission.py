import asyncio
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Awaitable, Callable, Dict, Iterator, List, Literal, Optional, Sequence, Tuple

import numpy as np

from ..sensing import ShiftReport, match_features
from ..spectra import ResonanceFeature, grid_features
from ..utils.csv_writer import write_table
from ..utils.errors import GeometryError, GridMismatchError, InvalidParameterError
from ..utils.flux_cache import FluxCache
from .solver import FdtdRun, FdtdScene, FluxRecord, run_to_steady_flux

logger = logging.getLogger("LRES:Fdtd")

FLUX_HEADER = ("lambda_nm", "flux_raw", "flux_normalized", "converged")

_reference_cache: Dict[FdtdScene, FluxRecord] = {}
_reference_lock = threading.Lock()


@dataclass(frozen=True)
class FluxResult:
    wavelength: float
    flux_raw: float
    flux_normalized: float
    converged: bool
    reference_flux: float = math.nan
    change: float = math.nan
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def row(self) -> Tuple:
        return self.wavelength, self.flux_raw, self.flux_normalized, int(self.converged)


def scene_fingerprint(scene: FdtdScene) -> str:
    """Отпечаток сцены без учёта длины волны (ключ постоянного кэша)."""
    description = asdict(scene)
    description["source"].pop("wavelength")
    return FluxCache.fingerprint(description)


def clear_reference_cache() -> None:
    with _reference_lock:
        _reference_cache.clear()


def reference_flux(scene: FdtdScene) -> FluxRecord:
    """Поток опорной сцены (без колец, частицы, пластинки), кэшируется на процесс."""
    reference = scene.reference()
    with _reference_lock:
        cached = _reference_cache.get(reference)

    if cached is not None:
        return cached

    record = run_to_steady_flux(FdtdRun(reference))
    with _reference_lock:
        _reference_cache[reference] = record

    logger.debug(f"Reference flux at {scene.source.wavelength} nm: {record.flux:.6e}")
    return record


def remember_reference(scene: FdtdScene, record: FluxRecord) -> None:
    with _reference_lock:
        _reference_cache[scene.reference()] = record


def transmission_with_run(scene: FdtdScene) -> Tuple[FluxResult, FdtdRun]:
    """Прогон до установившегося потока и нормировка на опорную сцену.

    Возвращает и само состояние схемы (для снимков поля).

    Raises:
        GeometryError: Опорный поток не положителен (зонд не за источником).
        InstabilityError: Разлёт полей.
    """
    run = FdtdRun(scene)
    record = run_to_steady_flux(run)

    if scene.geometry.is_reference:
        remember_reference(scene, record)
        reference = record

    else:
        reference = reference_flux(scene)

    if not reference.flux > 0:
        raise GeometryError(
            f"Reference flux {reference.flux:.3e} is not positive; is the probe downstream of the source?"
        )

    converged = record.converged and reference.converged
    if not converged:
        logger.warning(f"Unconverged transmission at {scene.source.wavelength} nm")

    result = FluxResult(
        wavelength=scene.source.wavelength,
        flux_raw=record.flux,
        flux_normalized=record.flux / reference.flux,
        converged=converged,
        reference_flux=reference.flux,
        change=record.change,
    )
    return result, run


def run_transmission(scene: FdtdScene) -> FluxResult:
    return transmission_with_run(scene)[0]


def _sweep_point(scene: FdtdScene) -> FluxResult:
    try:
        return run_transmission(scene)

    except Exception as err:
        logger.error(f"Transmission run failed at {scene.source.wavelength} nm: {err}")
        return FluxResult(
            wavelength=scene.source.wavelength,
            flux_raw=math.nan,
            flux_normalized=math.nan,
            converged=False,
            error=f"{type(err).__name__}: {err}",
        )


async def _cached_point(scene: FdtdScene, compute: Callable[[FdtdScene], Awaitable[FluxResult]]) -> FluxResult:
    fingerprint = scene_fingerprint(scene.reference())
    wavelength = scene.source.wavelength

    if FluxCache.is_running() and not scene.geometry.is_reference:
        stored = await FluxCache.get(fingerprint, wavelength)
        if stored is not None:
            remember_reference(scene, FluxRecord(**stored))

    result = await compute(scene)

    if FluxCache.is_running() and result.ok:
        with _reference_lock:
            record = _reference_cache.get(scene.reference())

        if record is not None:
            await FluxCache.put(fingerprint, wavelength, asdict(record))

    return result


async def sweep_wavelength(
    scene: FdtdScene,
    wavelengths: Sequence[float],
    threads: Optional[int] = None,
    serial: bool = False,
) -> List[FluxResult]:
    """Спектр прохождения: независимый прогон на каждую длину волны.

    Прогоны идут в пуле потоков, результаты возвращаются в порядке
    wavelengths. При serial=True все прогоны идут по очереди в вызывающем
    потоке. Ошибка на одной длине волны не прерывает развёртку: она
    попадает в FluxResult.error.
    """
    if not wavelengths:
        raise InvalidParameterError("Wavelength list is empty")

    if any(not w > 0 for w in wavelengths):
        raise InvalidParameterError(f"Wavelengths must be positive, got {list(wavelengths)}")

    scenes = [scene.with_wavelength(w) for w in wavelengths]

    if serial:
        async def in_caller(point: FdtdScene) -> FluxResult:
            return _sweep_point(point)

        results = [await _cached_point(point, in_caller) for point in scenes]

    else:
        loop = asyncio.get_running_loop()
        with ThreadPoolExecutor(max_workers=threads) as executor:
            async def in_pool(point: FdtdScene) -> FluxResult:
                return await loop.run_in_executor(executor, _sweep_point, point)

            results = await asyncio.gather(*(_cached_point(point, in_pool) for point in scenes))

    failed = sum(not r.ok for r in results)
    logger.info(f"Swept {len(results)} wavelengths, {failed} failed")
    return list(results)


def flux_rows(results: Sequence[FluxResult]) -> Iterator[Tuple]:
    for result in results:
        yield result.row()


async def write_flux(results: Sequence[FluxResult], path: Path | str) -> Path:
    return await write_table(path, FLUX_HEADER, flux_rows(results))


def _flux_grid(results: Sequence[FluxResult]) -> Tuple[np.ndarray, float]:
    if len(results) < 5:
        raise InvalidParameterError(f"Need at least 5 sweep points, got {len(results)}")

    failed = [r.wavelength for r in results if not (r.ok and math.isfinite(r.flux_normalized))]
    if failed:
        raise InvalidParameterError(f"Sweep has failed points at {failed} nm")

    wavelengths = np.array([r.wavelength for r in results])
    steps = np.diff(wavelengths)
    if not (steps[0] > 0 and np.allclose(steps, steps[0], rtol=1e-6, atol=0)):
        raise InvalidParameterError("Wavelengths must be increasing and evenly spaced")

    return wavelengths, float(steps[0])


def flux_features(
    results: Sequence[FluxResult],
    prominence: float,
    kinds: Sequence[Literal["dip", "peak"]] = ("dip", "peak"),
) -> List[ResonanceFeature]:
    """Провалы и пики нормированного прохождения по развёртке λ (положения в нм)."""
    if not prominence > 0:
        raise InvalidParameterError(f"prominence must be positive, got {prominence!r}")

    wavelengths, step = _flux_grid(results)
    values = np.array([r.flux_normalized for r in results])

    features = grid_features(wavelengths, values, "T", prominence, step)
    return sorted((f for f in features if f.kind in kinds), key=lambda f: f.location)


def flux_shift_readout(
    baseline: Sequence[FluxResult],
    perturbed: Sequence[FluxResult],
    prominence: float,
    max_shift: Optional[float] = None,
) -> ShiftReport:
    """Сдвиги линий прохождения между двумя развёртками по λ.

    Raises:
        GridMismatchError: Развёртки сделаны на разных длинах волн.
    """
    if [r.wavelength for r in baseline] != [r.wavelength for r in perturbed]:
        raise GridMismatchError("Sweeps must share the same wavelengths")

    _, step = _flux_grid(baseline)
    report = match_features(
        flux_features(baseline, prominence), flux_features(perturbed, prominence), step, max_shift
    )
    logger.info(f"{len(report.moved())} of {len(report.matched)} transmission lines moved by more than {step:g} nm")
    return report

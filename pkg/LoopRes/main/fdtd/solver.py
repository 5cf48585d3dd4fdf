import logging
import math
from dataclasses import dataclass, field, replace
from typing import Literal, Optional

import numpy as np

from ..utils.errors import GeometryError, InstabilityError, InvalidParameterError
from .geometry import GeometrySpec, rasterize

logger = logging.getLogger("LRES:Fdtd")

Component = Literal["hz", "ex", "ey"]

BLOWUP_FACTOR = 1e6
BLOWUP_CHECK_EVERY = 64


@dataclass(frozen=True)
class PmlSpec:
    """Расщеплённый поглощающий слой Беренджера: σ(d) = σ_max (d/L)^order."""

    cells: int = 10
    order: int = 3
    reflection: float = 1e-6

    def __post_init__(self) -> None:
        if self.cells < 0:
            raise InvalidParameterError(f"PML thickness must be >= 0 cells, got {self.cells}")

        if not 0 < self.reflection < 1:
            raise InvalidParameterError(f"PML target reflection must be in (0, 1), got {self.reflection}")

    def sigma_max(self, cell: float) -> float:
        if self.cells == 0:
            return 0.0

        return -(self.order + 1) * math.log(self.reflection) / (2 * self.cells * cell)

    def profile(self, depth: np.ndarray, cell: float) -> np.ndarray:
        if self.cells == 0:
            return np.zeros_like(depth)

        thickness = self.cells * cell
        return self.sigma_max(cell) * np.clip(depth / thickness, 0.0, 1.0) ** self.order


@dataclass(frozen=True)
class PointSource:
    """Точечный источник в Hz: amplitude·sin(2πt/λ)·ramp(t); координаты в нм от угла области."""

    x: float
    y: float
    wavelength: float
    amplitude: float = 1.0
    ramp_cycles: float = 10.0

    def __post_init__(self) -> None:
        if not self.wavelength > 0:
            raise InvalidParameterError(f"Wavelength must be positive, got {self.wavelength}")

    def value(self, t: float) -> float:
        ramp_time = self.ramp_cycles * self.wavelength
        ramp = 1.0
        if t < ramp_time:
            ramp = 0.5 * (1 - math.cos(math.pi * t / ramp_time))

        return self.amplitude * math.sin(2 * math.pi * t / self.wavelength) * ramp


@dataclass(frozen=True)
class FluxLine:
    """Отрезок x = const, y ∈ [y_min, y_max]; поток Пойнтинга считается в сторону +x."""

    x: float
    y_min: float
    y_max: float

    def __post_init__(self) -> None:
        if not self.y_max > self.y_min:
            raise InvalidParameterError(f"Flux line is empty: [{self.y_min}, {self.y_max}]")


@dataclass(frozen=True)
class FdtdScene:
    geometry: GeometrySpec
    source: PointSource
    probe: FluxLine
    cell: float = 30.0
    pml: PmlSpec = field(default_factory=PmlSpec)
    max_cycles: float = 2000.0
    window_cycles: float = 20.0
    tolerance: float = 0.005
    courant: float = 0.99

    def __post_init__(self) -> None:
        if not 0 < self.courant <= 1:
            raise InvalidParameterError(f"Courant factor must be in (0, 1], got {self.courant}")

        width, height = self.geometry.width, self.geometry.height
        if not (0 <= self.source.x <= width and 0 <= self.source.y <= height):
            raise GeometryError("Source must lie inside the non-PML interior")

        if not (0 < self.probe.x < width and self.probe.y_min >= 0 and self.probe.y_max <= height):
            raise GeometryError("Flux probe must lie inside the non-PML interior")

        if not (self.max_cycles > 0 and self.window_cycles > 0):
            raise InvalidParameterError("Runtime caps must be positive")

    @classmethod
    def for_geometry(
        cls,
        geometry: GeometrySpec,
        wavelength: float,
        cell: float = 30.0,
        source_offset: float = 2000.0,
        probe_offset: float = 500.0,
        probe_half_height: float = 750.0,
        **kwargs,
    ) -> "FdtdScene":
        """Сцена с источником в волноводе и потоковым зондом правее колец.

        Источник стоит на оси волновода в source_offset нм от левого PML,
        зонд - в probe_offset нм правее крайнего кольца (или от правого края
        области, если колец нет).
        """
        if geometry.waveguide is None:
            raise GeometryError("Transmission scenes need a waveguide")

        guide_y = geometry.waveguide.y
        if geometry.rings:
            probe_x = max(ring.center[0] + ring.outer for ring in geometry.rings) + probe_offset

        else:
            probe_x = geometry.width - probe_offset

        return cls(
            geometry=geometry,
            source=PointSource(source_offset, guide_y, wavelength),
            probe=FluxLine(
                probe_x,
                max(0.0, guide_y - probe_half_height),
                min(geometry.height, guide_y + probe_half_height),
            ),
            cell=cell,
            **kwargs,
        )

    @property
    def dt(self) -> float:
        return self.courant * self.cell / math.sqrt(2)

    @property
    def steps_per_cycle(self) -> float:
        return self.source.wavelength / self.dt

    def reference(self) -> "FdtdScene":
        """Та же сцена без резонаторов, частицы и пластинки."""
        return replace(self, geometry=self.geometry.reference())

    def with_wavelength(self, wavelength: float) -> "FdtdScene":
        return replace(self, source=replace(self.source, wavelength=wavelength))


def _staggered_eps(eps: np.ndarray, axis: int) -> np.ndarray:
    """ε в узлах E: среднее двух соседних ячеек, на границах - значение крайней ячейки."""
    eps = np.moveaxis(eps, axis, 0)
    staggered = np.concatenate([eps[:1], 0.5 * (eps[1:] + eps[:-1]), eps[-1:]])
    return np.moveaxis(staggered, 0, axis)


class FdtdRun:
    def __init__(self, scene: FdtdScene) -> None:
        """Состояние 2D схемы Йи для компонент (Ex, Ey, Hz).

        Hz живёт в центрах ячеек и расщеплён на Hzx + Hzy, Ex - на
        горизонтальных гранях (nx, ny + 1), Ey - на вертикальных (nx + 1, ny).
        Внешняя граница - идеальный проводник за слоем PML. c = 1, η = 1.

        Args:
            scene (FdtdScene): Описание сцены.
        """
        self.scene = scene
        self.dt = scene.dt
        self.steps = 0

        pad = scene.pml.cells
        eps = np.pad(rasterize(scene.geometry, scene.cell), pad, mode="edge")
        if np.any(eps < 1):
            raise GeometryError("Permittivity must be >= 1 everywhere")

        self.eps = eps
        self.nx, self.ny = eps.shape

        self.hzx = np.zeros((self.nx, self.ny))
        self.hzy = np.zeros((self.nx, self.ny))
        self.ex = np.zeros((self.nx, self.ny + 1))
        self.ey = np.zeros((self.nx + 1, self.ny))
        self._ex_prev = self.ex.copy()
        self._ey_prev = self.ey.copy()

        self.eps_ex = _staggered_eps(eps, axis=1)
        self.eps_ey = _staggered_eps(eps, axis=0)

        cell = scene.cell
        centers_x = (np.arange(self.nx) + 0.5) * cell
        centers_y = (np.arange(self.ny) + 0.5) * cell
        nodes_x = np.arange(self.nx + 1) * cell
        nodes_y = np.arange(self.ny + 1) * cell

        self._ahx, self._bhx = self._coefficients(centers_x, self.nx * cell)
        self._ahy, self._bhy = self._coefficients(centers_y, self.ny * cell)
        aex, bex = self._coefficients(nodes_x, self.nx * cell)
        aey, bey = self._coefficients(nodes_y, self.ny * cell)

        # Ex гасится вдоль y, Ey - вдоль x
        self._aex = aey[None, :]
        self._bex = bey[None, :] / self.eps_ex
        self._aey = aex[:, None]
        self._bey = bex[:, None] / self.eps_ey

        offset = pad * cell
        self.source_cell = (
            min(self.nx - 1, int((scene.source.x + offset) // cell)),
            min(self.ny - 1, int((scene.source.y + offset) // cell)),
        )
        self.probe_column = min(self.nx - 1, max(1, int(round((scene.probe.x + offset) / cell))))
        self.probe_rows = slice(
            int((scene.probe.y_min + offset) // cell),
            min(self.ny, int((scene.probe.y_max + offset) // cell) + 1),
        )
        self.source_enabled = True

    def _coefficients(self, positions: np.ndarray, extent: float):
        pml = self.scene.pml
        thickness = pml.cells * self.scene.cell
        depth = np.maximum(0.0, np.maximum(thickness - positions, positions - (extent - thickness)))
        sigma = pml.profile(depth, self.scene.cell)
        half = sigma * self.dt / 2
        return (1 - half) / (1 + half), (self.dt / self.scene.cell) / (1 + half)

    @property
    def time(self) -> float:
        return self.steps * self.dt

    @property
    def hz(self) -> np.ndarray:
        return self.hzx + self.hzy

    def seed_hz(self, values: np.ndarray) -> None:
        """Начальное поле Hz (для проверок без источника)."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.nx, self.ny):
            raise InvalidParameterError(f"Seed must have shape {(self.nx, self.ny)}, got {values.shape}")

        self.hzx = values / 2
        self.hzy = values / 2

    def step(self) -> None:
        """Один шаг чехарды: Hz на n + 1/2, затем Ex, Ey на n + 1."""
        self.hzx = self._ahx[:, None] * self.hzx - self._bhx[:, None] * (self.ey[1:, :] - self.ey[:-1, :])
        self.hzy = self._ahy[None, :] * self.hzy + self._bhy[None, :] * (self.ex[:, 1:] - self.ex[:, :-1])

        if self.source_enabled:
            value = self.scene.source.value((self.steps + 0.5) * self.dt)
            i, j = self.source_cell
            self.hzx[i, j] += value / 2
            self.hzy[i, j] += value / 2

        hz = self.hzx + self.hzy
        self._ex_prev = self.ex.copy()
        self._ey_prev = self.ey.copy()

        self.ex[:, 1:-1] = self._aex[:, 1:-1] * self.ex[:, 1:-1] + self._bex[:, 1:-1] * (hz[:, 1:] - hz[:, :-1])
        self.ey[1:-1, :] = self._aey[1:-1, :] * self.ey[1:-1, :] - self._bey[1:-1, :] * (hz[1:, :] - hz[:-1, :])

        self.steps += 1

    def check_stability(self) -> None:
        """Raises:
            InstabilityError: |Hz| превысило 10⁶ амплитуд источника.
        """
        limit = BLOWUP_FACTOR * max(abs(self.scene.source.amplitude), 1e-300)
        peak = float(np.abs(self.hz).max())
        if not peak <= limit:
            raise InstabilityError(self.steps, peak, limit)

    def run(self, n_steps: int) -> None:
        for k in range(n_steps):
            self.step()
            if (k + 1) % BLOWUP_CHECK_EVERY == 0:
                self.check_stability()

        self.check_stability()

    def energy(self) -> float:
        """Дискретная энергия ½Σε E(n)·E(n+1) + ½Σ Hz(n+½)², сохраняется точно без PML и источника."""
        electric = np.sum(self.eps_ex * self._ex_prev * self.ex) + np.sum(self.eps_ey * self._ey_prev * self.ey)
        magnetic = np.sum(self.hz**2)
        return float(0.5 * (electric + magnetic) * self.scene.cell**2)

    def flux(self) -> float:
        """Мгновенный поток Sx = Ey·Hz через зонд (Hz усреднено на узел Ey)."""
        i = self.probe_column
        rows = self.probe_rows
        hz = self.hz
        hz_node = 0.5 * (hz[i - 1, rows] + hz[i, rows])
        return float(np.sum(self.ey[i, rows] * hz_node) * self.scene.cell)

    def field(self, component: Component) -> np.ndarray:
        if component == "hz":
            return self.hz

        if component == "ex":
            return self.ex.copy()

        if component == "ey":
            return self.ey.copy()

        raise InvalidParameterError(f"Unknown field component '{component}'")


@dataclass(frozen=True)
class FluxRecord:
    flux: float
    converged: bool
    change: float
    windows: int
    steps: int


def run_to_steady_flux(run: FdtdRun) -> FluxRecord:
    """Гонит схему окнами по window_cycles периодов до стабилизации среднего потока.

    Сходимость: относительное изменение среднего потока между соседними
    окнами меньше scene.tolerance. Иначе - остановка на max_cycles с
    флагом converged=False.
    """
    scene = run.scene
    window = max(1, int(round(scene.window_cycles * scene.steps_per_cycle)))
    cap = max(window, int(math.ceil(scene.max_cycles * scene.steps_per_cycle)))

    previous: Optional[float] = None
    change = math.inf
    windows = 0
    average = 0.0

    while run.steps + window <= cap:
        total = 0.0
        for k in range(window):
            run.step()
            total += run.flux()
            if (k + 1) % BLOWUP_CHECK_EVERY == 0:
                run.check_stability()

        run.check_stability()
        average = total / window
        windows += 1

        if previous is not None:
            change = abs(average - previous) / max(abs(previous), 1e-300)
            if change < scene.tolerance:
                logger.debug(f"Flux settled after {windows} windows ({run.steps} steps)")
                return FluxRecord(average, True, change, windows, run.steps)

        previous = average

    logger.warning(
        f"Flux did not settle within {scene.max_cycles} cycles at lambda={scene.source.wavelength} nm "
        f"(last change {change:.3%})"
    )
    return FluxRecord(average, False, change, windows, run.steps)

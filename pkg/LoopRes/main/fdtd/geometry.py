import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from ..utils.errors import GeometryError

# Размеры в нм
RING_OUTER = 3500.0
RING_INNER = 3350.0
CORE_EPS = 4.0
WAVEGUIDE_WIDTH = 150.0
WAVEGUIDE_GAP = 120.0
RING_GAP = 200.0
PARTICLE_RADIUS = 90.0
PARTICLE_GAP = 90.0
SLAB_WIDTH = 60.0
SLAB_LENGTH = 1500.0
MARGIN = 1000.0


@dataclass(frozen=True)
class Ring:
    center: Tuple[float, float]
    outer: float = RING_OUTER
    inner: float = RING_INNER
    eps: float = CORE_EPS

    def __post_init__(self) -> None:
        if not self.outer > self.inner > 0:
            raise GeometryError(f"Ring annulus is degenerate: outer={self.outer}, inner={self.inner}")

    def bounds(self) -> Tuple[float, float, float, float]:
        x, y = self.center
        return x - self.outer, y - self.outer, x + self.outer, y + self.outer

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        r2 = (x - self.center[0]) ** 2 + (y - self.center[1]) ** 2
        return (r2 >= self.inner**2) & (r2 <= self.outer**2)


@dataclass(frozen=True)
class Waveguide:
    """Прямой волновод вдоль оси x на высоте y."""

    y: float
    width: float = WAVEGUIDE_WIDTH
    eps: float = CORE_EPS

    def __post_init__(self) -> None:
        if not self.width > 0:
            raise GeometryError(f"Waveguide width must be positive, got {self.width}")

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.abs(y - self.y) <= self.width / 2


@dataclass(frozen=True)
class Particle:
    center: Tuple[float, float]
    radius: float = PARTICLE_RADIUS
    eps: float = CORE_EPS

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise GeometryError(f"Particle radius must be positive, got {self.radius}")

    def bounds(self) -> Tuple[float, float, float, float]:
        x, y = self.center
        return x - self.radius, y - self.radius, x + self.radius, y + self.radius

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return (x - self.center[0]) ** 2 + (y - self.center[1]) ** 2 <= self.radius**2


@dataclass(frozen=True)
class Slab:
    """Прямоугольник width × length, длинная сторона направлена под углом angle к оси x."""

    center: Tuple[float, float]
    angle: float
    width: float = SLAB_WIDTH
    length: float = SLAB_LENGTH
    eps: float = CORE_EPS

    def __post_init__(self) -> None:
        if not (self.width > 0 and self.length > 0):
            raise GeometryError(f"Slab dimensions must be positive, got {self.width}x{self.length}")

    def bounds(self) -> Tuple[float, float, float, float]:
        c, s = abs(math.cos(self.angle)), abs(math.sin(self.angle))
        half_x = (self.length * c + self.width * s) / 2
        half_y = (self.length * s + self.width * c) / 2
        x, y = self.center
        return x - half_x, y - half_y, x + half_x, y + half_y

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        dx, dy = x - self.center[0], y - self.center[1]
        c, s = math.cos(self.angle), math.sin(self.angle)
        along = dx * c + dy * s
        across = -dx * s + dy * c
        return (np.abs(along) <= self.length / 2) & (np.abs(across) <= self.width / 2)


@dataclass(frozen=True)
class GeometrySpec:
    """Сцена: прямоугольная рабочая область [0, width] × [0, height] (нм) без PML."""

    width: float
    height: float
    rings: Tuple[Ring, ...] = ()
    waveguide: Optional[Waveguide] = None
    particle: Optional[Particle] = None
    slab: Optional[Slab] = None
    background_eps: float = 1.0

    def __post_init__(self) -> None:
        if not (self.width > 0 and self.height > 0):
            raise GeometryError(f"Domain dimensions must be positive, got {self.width}x{self.height}")

        if self.background_eps < 1:
            raise GeometryError(f"Background permittivity must be >= 1, got {self.background_eps}")

        for shape in self.shapes():
            if shape.eps < 1:
                raise GeometryError(f"Permittivity must be >= 1, got {shape.eps} for {shape}")

            if isinstance(shape, Waveguide):
                inside = shape.width / 2 <= shape.y <= self.height - shape.width / 2

            else:
                x0, y0, x1, y1 = shape.bounds()
                inside = x0 >= 0 and y0 >= 0 and x1 <= self.width and y1 <= self.height

            if not inside:
                raise GeometryError(f"{type(shape).__name__} lies outside the interior domain")

    def shapes(self) -> Tuple:
        """Фигуры в порядке растеризации (поздние перекрывают ранние)."""
        head = (self.waveguide,) if self.waveguide else ()
        tail = tuple(s for s in (self.slab, self.particle) if s is not None)
        return head + self.rings + tail

    def reference(self) -> "GeometrySpec":
        """Та же область без резонаторов, частицы и пластинки."""
        return replace(self, rings=(), particle=None, slab=None)

    @property
    def is_reference(self) -> bool:
        return not self.rings and self.particle is None and self.slab is None


def rasterize(spec: GeometrySpec, cell: float) -> np.ndarray:
    """Карта диэлектрической проницаемости по центрам ячеек, форма (nx, ny).

    Raises:
        GeometryError: Шаг не укладывается в область целое число раз.
    """
    if not cell > 0:
        raise GeometryError(f"Cell size must be positive, got {cell}")

    nx, ny = spec.width / cell, spec.height / cell
    if abs(nx - round(nx)) > 1e-9 * nx or abs(ny - round(ny)) > 1e-9 * ny:
        raise GeometryError(
            f"Cell size {cell} does not divide the domain {spec.width}x{spec.height}"
        )

    nx, ny = int(round(nx)), int(round(ny))
    xc = (np.arange(nx) + 0.5) * cell
    yc = (np.arange(ny) + 0.5) * cell
    x, y = np.meshgrid(xc, yc, indexing="ij")

    eps = np.full((nx, ny), spec.background_eps, dtype=float)
    for shape in spec.shapes():
        eps[shape.contains(x, y)] = shape.eps

    return eps


def _round_up(value: float, cell: float) -> float:
    return math.ceil(value / cell - 1e-9) * cell


def loop_geometry(
    cell: float = 30.0,
    particle_theta: Optional[float] = None,
    particle_eps: float = CORE_EPS,
    slab_eps: Optional[float] = None,
    slab_pair: Tuple[int, int] = (2, 3),
    ring_eps: float = CORE_EPS,
    margin: float = MARGIN,
) -> GeometrySpec:
    """Три кольца в петле над волноводом.

    Кольцо 1 связано с волноводом (зазор 120 нм), кольца 2 и 3 стоят над
    ним так, что центры образуют равносторонний треугольник с зазорами 200 нм.
    Частица (если задан угол particle_theta, радианы от +x) - у кольца 2,
    пластинка (если задана slab_eps) - посередине между кольцами пары
    slab_pair, длинной стороной поперёк линии центров.
    """
    pitch = 2 * RING_OUTER + RING_GAP
    rise = pitch * math.sin(math.pi / 3)
    half = pitch / 2

    bottom = _round_up(margin, cell)
    guide_y = bottom + WAVEGUIDE_WIDTH / 2
    left = margin + half + RING_OUTER
    y1 = guide_y + WAVEGUIDE_WIDTH / 2 + WAVEGUIDE_GAP + RING_OUTER

    centers = {
        1: (left, y1),
        2: (left - half, y1 + rise),
        3: (left + half, y1 + rise),
    }
    rings = tuple(Ring(centers[k], eps=ring_eps) for k in (1, 2, 3))

    width = _round_up(left + half + RING_OUTER + margin, cell)
    height = _round_up(y1 + rise + RING_OUTER + margin, cell)

    particle = None
    if particle_theta is not None:
        distance = RING_OUTER + PARTICLE_GAP + PARTICLE_RADIUS
        cx, cy = centers[2]
        particle = Particle(
            (cx + distance * math.cos(particle_theta), cy + distance * math.sin(particle_theta)),
            eps=particle_eps,
        )

    slab = None
    if slab_eps is not None:
        n, m = slab_pair
        if n == m or {n, m} - {1, 2, 3}:
            raise GeometryError(f"Slab pair must name two distinct rings, got {slab_pair}")

        (xa, ya), (xb, yb) = centers[n], centers[m]
        axis = math.atan2(yb - ya, xb - xa) + math.pi / 2
        slab = Slab(((xa + xb) / 2, (ya + yb) / 2), axis, eps=slab_eps)

    return GeometrySpec(
        width=width,
        height=height,
        rings=rings,
        waveguide=Waveguide(guide_y),
        particle=particle,
        slab=slab,
    )

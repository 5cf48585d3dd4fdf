from .geometry import GeometrySpec, Particle, Ring, Slab, Waveguide, loop_geometry, rasterize
from .solver import FdtdRun, FdtdScene, FluxLine, PmlSpec, PointSource
from .transmission import (FluxResult, flux_features, flux_shift_readout, run_transmission,
                           sweep_wavelength)

__all__ = [
    "GeometrySpec",
    "Particle",
    "Ring",
    "Slab",
    "Waveguide",
    "loop_geometry",
    "rasterize",
    "FdtdRun",
    "FdtdScene",
    "FluxLine",
    "PmlSpec",
    "PointSource",
    "FluxResult",
    "flux_features",
    "flux_shift_readout",
    "run_transmission",
    "sweep_wavelength",
]

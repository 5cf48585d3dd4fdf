from .main.eigen import EigenReport, PeriodicityReport, eigen_report, periodicity
from .main.loop_system import (LoopSystem, SteadyState, build_dynamics_matrix,
                               critical_kappa, integrate_to_steady, solve_steady_state)
from .main.perturb import ExpansionReport, expand_roundtrip, validate_expansion
from .main.sensing import (ParticleScenario, SlabScenario, particle_scattering,
                           shift_readout, slab_coupling)
from .main.spectra import (ResonanceFeature, Spectrum, find_resonances, phase_average,
                           preset_system, sweep_detuning, sweep_phase)
from .main.utils.config import RunConfig, parse_config
from .main.utils.exit_code import ExitCode
from .main.utils.flux_cache import FluxCache
from .version import __version__

__all__ = [
    "LoopSystem",
    "SteadyState",
    "build_dynamics_matrix",
    "critical_kappa",
    "integrate_to_steady",
    "solve_steady_state",
    "Spectrum",
    "ResonanceFeature",
    "sweep_detuning",
    "sweep_phase",
    "phase_average",
    "find_resonances",
    "preset_system",
    "EigenReport",
    "PeriodicityReport",
    "eigen_report",
    "periodicity",
    "ExpansionReport",
    "expand_roundtrip",
    "validate_expansion",
    "ParticleScenario",
    "SlabScenario",
    "particle_scattering",
    "slab_coupling",
    "shift_readout",
    "RunConfig",
    "parse_config",
    "ExitCode",
    "FluxCache",
]

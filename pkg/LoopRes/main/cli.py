import argparse
import asyncio
import inspect
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Awaitable, Callable, Dict, List, Optional, Sequence

import aiofiles

from ..version import __version__
from .eigen import eigen_report, periodicity, write_eigen, write_periodicity
from .fdtd.geometry import loop_geometry
from .fdtd.solver import FdtdScene, PmlSpec
from .fdtd.transmission import flux_shift_readout, sweep_wavelength, transmission_with_run, write_flux
from .perturb import expand_roundtrip, write_expansion
from .sensing import (ParticleScenario, SlabScenario, particle_system, shift_readout,
                      slab_system, write_shifts)
from .spectra import (find_resonances, phase_average, sweep_detuning, sweep_phase,
                      write_spectrum)
from .utils.config import COMMANDS, FdtdBlock, RunConfig, parse_config
from .utils.csv_writer import write_snapshot, write_table
from .utils.decorator import require_blocks
from .utils.errors import ConfigError
from .utils.exit_code import ExitCode
from .utils.flux_cache import FluxCache

logger = logging.getLogger("LRES:Cli")

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


@dataclass(frozen=True)
class RunContext:
    output: Path
    threads: Optional[int] = None
    serial: bool = False
    cache: Optional[Path] = None


def _complex(polar) -> complex:
    modulus, phase = polar
    return complex(modulus * math.cos(math.pi * phase), modulus * math.sin(math.pi * phase))


def _fdtd_scene(block: FdtdBlock, wavelength: float) -> FdtdScene:
    geometry = loop_geometry(
        cell=block.cell,
        particle_theta=None if block.particle_theta is None else math.radians(block.particle_theta),
        particle_eps=block.particle_eps,
        slab_eps=block.slab_eps,
        slab_pair=block.slab_pair,
        ring_eps=block.ring_eps,
        margin=block.margin,
    )
    if block.geometry == "waveguide":
        geometry = geometry.reference()

    return FdtdScene.for_geometry(
        geometry,
        wavelength,
        cell=block.cell,
        pml=PmlSpec(block.pml_cells, block.pml_order, block.pml_reflection),
        max_cycles=block.max_cycles,
        window_cycles=block.window_cycles,
        tolerance=block.tolerance,
    )


class Commands:
    @staticmethod
    @require_blocks("system", "sweep")
    async def cmd_spectrum(config: RunConfig, ctx: RunContext) -> ExitCode:
        sweep = config.sweep
        spec = sweep_detuning(config.system.to_system(), sweep.delta_min, sweep.delta_max, sweep.points)
        await write_spectrum(spec, ctx.output / "spectrum.csv")

        features = find_resonances(spec, sweep.prominence)
        await write_table(
            ctx.output / "resonances.csv",
            ("kind", "channel", "location", "value", "width"),
            ((f.kind, f.channel, f.location, f.value, f.width) for f in features),
        )
        logger.info(f"Spectrum with {len(spec)} points, {len(features)} resonance features")
        return ExitCode.OK

    @staticmethod
    @require_blocks("system", "phase")
    async def cmd_phase_sweep(config: RunConfig, ctx: RunContext) -> ExitCode:
        phase = config.phase
        rows = sweep_phase(config.system.to_system(), phase.which, phase.delta, phase.samples)
        await write_table(ctx.output / "phase_sweep.csv", ("phi", "T", "R"), rows)
        return ExitCode.OK

    @staticmethod
    @require_blocks("system", "sweep", "phase")
    async def cmd_average(config: RunConfig, ctx: RunContext) -> ExitCode:
        system = config.system.to_system()
        grid = config.sweep.grid()
        pairs = [config.phase.which]
        if config.phase.compare is not None:
            pairs.append(config.phase.compare)

        averages = []
        for pair in pairs:
            spec = phase_average(system, pair, grid, config.phase.samples)
            await write_spectrum(spec, ctx.output / f"average_phi{pair[0]}{pair[1]}.csv")
            averages.append(spec)

        if len(averages) == 2:
            gap = float(abs(averages[0].T - averages[1].T).max())
            logger.info(f"Max |T| difference between the two phase averages: {gap:.3e}")

        return ExitCode.OK

    @staticmethod
    @require_blocks("system")
    async def cmd_eigen(config: RunConfig, ctx: RunContext) -> ExitCode:
        await write_eigen(eigen_report(config.system.to_system()), ctx.output / "eigen.csv")
        return ExitCode.OK

    @staticmethod
    @require_blocks("system", "phase")
    async def cmd_periodicity(config: RunConfig, ctx: RunContext) -> ExitCode:
        report = periodicity(config.system.to_system(), config.phase.which, config.phase.samples)
        await write_periodicity(report, ctx.output)

        summary = {"which": list(report.which), "classification": report.classification}
        print(json.dumps(summary, ensure_ascii=False))
        logger.info(f"Eigenenergies are {report.classification} in phi{report.which[0]}{report.which[1]}")
        return ExitCode.OK

    @staticmethod
    @require_blocks("system", "sweep", "taylor")
    async def cmd_taylor(config: RunConfig, ctx: RunContext) -> ExitCode:
        report = expand_roundtrip(config.system.to_system(), config.sweep.grid(), config.taylor.x)
        await write_expansion(report, ctx.output / "taylor.csv")
        logger.info(f"Second-order expansion at x={report.x}: max |dT| = {report.discrepancy:.3e}")
        return ExitCode.OK

    @staticmethod
    @require_blocks("system", "sweep", "particle")
    async def cmd_sense_particle(config: RunConfig, ctx: RunContext) -> ExitCode:
        block = config.particle
        system = config.system.to_system()
        scenario = ParticleScenario(block.target, math.radians(block.theta), block.m, block.delta_eps, block.s0)
        shifted = scenario.at(math.radians(block.theta_shifted))

        sweep = config.sweep
        baseline = sweep_detuning(
            particle_system(system, scenario, block.compose), sweep.delta_min, sweep.delta_max, sweep.points
        )
        perturbed = sweep_detuning(
            particle_system(system, shifted, block.compose), sweep.delta_min, sweep.delta_max, sweep.points
        )
        return await _write_readout(ctx, baseline, perturbed, sweep.prominence, block.max_shift)

    @staticmethod
    @require_blocks("system", "sweep", "slab")
    async def cmd_sense_slab(config: RunConfig, ctx: RunContext) -> ExitCode:
        block = config.slab
        system = config.system.to_system()
        background = (
            system.coupling(*block.pair) if block.xi_background is None else _complex(block.xi_background)
        )
        scenario = SlabScenario(
            block.pair,
            background,
            _complex(block.xi_slab),
            block.eps_reference,
            block.eps_background,
            block.eps_reference,
        )

        sweep = config.sweep
        baseline = sweep_detuning(slab_system(system, scenario), sweep.delta_min, sweep.delta_max, sweep.points)
        perturbed = sweep_detuning(
            slab_system(system, scenario.with_eps(block.eps_slab)), sweep.delta_min, sweep.delta_max, sweep.points
        )
        return await _write_readout(ctx, baseline, perturbed, sweep.prominence, block.max_shift)

    @staticmethod
    @require_blocks("fdtd")
    async def cmd_fdtd_run(config: RunConfig, ctx: RunContext) -> ExitCode:
        wavelengths = config.fdtd.wavelength_list()
        if not wavelengths:
            raise ConfigError("[fdtd] needs 'wavelength' for fdtd-run")

        scene = _fdtd_scene(config.fdtd, wavelengths[0])
        loop = asyncio.get_running_loop()
        result, run = await loop.run_in_executor(None, transmission_with_run, scene)

        await write_flux([result], ctx.output / "flux.csv")
        if config.fdtd.snapshot:
            await write_snapshot(ctx.output / "hz_snapshot", run.field("hz"), scene.cell, "hz", run.steps)

        return ExitCode.OK if result.converged else ExitCode.FDTD_UNCONVERGED

    @staticmethod
    @require_blocks("fdtd")
    async def cmd_fdtd_sweep(config: RunConfig, ctx: RunContext) -> ExitCode:
        block = config.fdtd
        wavelengths = block.wavelength_list()
        if not wavelengths:
            raise ConfigError("[fdtd] needs 'wavelengths' or a lambda_min/lambda_max/lambda_points band")

        compared = block.compared()

        if ctx.cache is not None:
            FluxCache.set_db_path(ctx.cache)
            await FluxCache.start()

        try:
            results = await sweep_wavelength(
                _fdtd_scene(block, wavelengths[0]), wavelengths, threads=ctx.threads, serial=ctx.serial
            )
            perturbed = None
            if compared is not None:
                perturbed = await sweep_wavelength(
                    _fdtd_scene(compared, wavelengths[0]), wavelengths, threads=ctx.threads, serial=ctx.serial
                )

        finally:
            await FluxCache.stop()

        await write_flux(results, ctx.output / "flux.csv")
        swept = list(results)

        if perturbed is not None:
            await write_flux(perturbed, ctx.output / "flux_perturbed.csv")
            swept.extend(perturbed)

        if any(not r.ok for r in swept):
            return ExitCode.NUMERICAL_ERROR

        if perturbed is not None:
            report = flux_shift_readout(results, perturbed, block.prominence, block.max_shift)
            await write_shifts(report, ctx.output / "shifts.csv")

        if any(not r.converged for r in swept):
            return ExitCode.FDTD_UNCONVERGED

        return ExitCode.OK


async def _write_readout(ctx: RunContext, baseline, perturbed, prominence: float, max_shift) -> ExitCode:
    report = shift_readout(baseline, perturbed, prominence, max_shift)
    await write_spectrum(baseline, ctx.output / "spectrum_baseline.csv")
    await write_spectrum(perturbed, ctx.output / "spectrum_perturbed.csv")
    await write_shifts(report, ctx.output / "shifts.csv")

    logger.info(
        f"{len(report.moved())} of {len(report.matched)} matched features moved by more than one grid step"
    )
    return ExitCode.OK


Handler = Callable[[RunConfig, RunContext], Awaitable[ExitCode]]

_handlers: Dict[str, Handler] = {}


def register_commands_from_class(external_class: type) -> None:
    """Регистрация обработчиков с префиксом 'cmd_': cmd_phase_sweep -> 'phase-sweep'."""
    for name, func in inspect.getmembers(external_class, predicate=inspect.isfunction):
        if name.startswith("cmd_"):
            command = name[4:].replace("_", "-")
            _handlers[command] = func
            logger.debug(f"Registered command '{command}' from {external_class.__name__}")


def get_handler(command: str) -> Handler:
    if not _handlers:
        register_commands_from_class(Commands)

    handler = _handlers.get(command)
    if handler is None:
        raise ConfigError(f"unknown command '{command}'")

    return handler


async def run(
    config: RunConfig,
    output: Optional[Path | str] = None,
    threads: Optional[int] = None,
    serial: bool = False,
    cache: Optional[Path | str] = None,
) -> ExitCode:
    """Выполняет команду конфигурации и пишет CSV в каталог вывода."""
    ctx = RunContext(
        output=Path(output if output is not None else config.output),
        threads=threads,
        serial=serial,
        cache=None if cache is None else Path(cache),
    )
    ctx.output.mkdir(parents=True, exist_ok=True)

    logger.debug(f"Running '{config.command}' into {ctx.output}")
    code = await get_handler(config.command)(config, ctx)
    logger.info(f"Command '{config.command}' finished with {code.name}")
    return code


def error_line(code: ExitCode, err: BaseException) -> str:
    """Машиночитаемая строка ошибки для stderr."""
    payload = {"code": int(code), "error": type(err).__name__, "message": str(err)}
    line = getattr(err, "line", None)
    if line is not None:
        payload["line"] = line

    return json.dumps(payload, ensure_ascii=False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loopres", description="Three-resonator loop spectra and FDTD runs")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("config", type=Path)
    parser.add_argument("--output", type=Path, default=None, help="output directory (overrides the config)")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for FDTD sweeps")
    parser.add_argument("--serial", action="store_true", help="bit-exact single-worker mode")
    parser.add_argument("--quiet", action="store_true", help="log warnings and errors only")
    parser.add_argument("--cache", type=Path, default=None, help="directory of the persistent reference-flux cache")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


async def _main(args: argparse.Namespace) -> ExitCode:
    async with aiofiles.open(args.config, "r", encoding="utf-8") as file:
        text = await file.read()

    config = parse_config(text, command=args.command)
    return await run(config, args.output, args.threads, args.serial, args.cache)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format=LOG_FORMAT)
    logging.getLogger("aiosqlite").setLevel(logging.WARNING)

    try:
        return int(asyncio.run(_main(args)))

    except Exception as err:
        code = ExitCode.for_error(err)
        logger.error(f"{args.command} failed: {err}")
        print(error_line(code, err), file=sys.stderr)
        return int(code)


def commands() -> List[str]:
    if not _handlers:
        register_commands_from_class(Commands)

    return sorted(_handlers)

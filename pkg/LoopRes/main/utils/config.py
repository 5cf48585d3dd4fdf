import math
import re
from typing import Any, Dict, List, Literal, Optional, Tuple, Union, get_args, get_origin

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from .csv_writer import format_value
from .errors import ConfigError

Command = Literal[
    "spectrum",
    "phase-sweep",
    "average",
    "eigen",
    "periodicity",
    "taylor",
    "sense-particle",
    "sense-slab",
    "fdtd-run",
    "fdtd-sweep",
]

COMMANDS: Tuple[str, ...] = get_args(Command)

# Блоки, без которых команда не запускается
COMMAND_BLOCKS: Dict[str, Tuple[str, ...]] = {
    "spectrum": ("system", "sweep"),
    "phase-sweep": ("system", "phase"),
    "average": ("system", "sweep", "phase"),
    "eigen": ("system",),
    "periodicity": ("system", "phase"),
    "taylor": ("system", "sweep", "taylor"),
    "sense-particle": ("system", "sweep", "particle"),
    "sense-slab": ("system", "sweep", "slab"),
    "fdtd-run": ("fdtd",),
    "fdtd-sweep": ("fdtd",),
}

BLOCK_NAMES = ("system", "sweep", "phase", "taylor", "particle", "slab", "fdtd")

_SECTION = re.compile(r"^\[\s*([A-Za-z_]+)\s*\]$")
_KEY = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")
_COUPLING = re.compile(r"^xi([1-3])([1-3])$")


def _is_tuple_field(annotation: Any) -> bool:
    if get_origin(annotation) is tuple:
        return True

    if get_origin(annotation) is Union:
        return any(get_origin(arg) is tuple for arg in get_args(annotation))

    return False


class _Block(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    @model_validator(mode="before")
    @classmethod
    def _wrap_scalars(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data

        wrapped = dict(data)
        for name, value in data.items():
            info = cls.model_fields.get(name)
            if info is not None and isinstance(value, str) and _is_tuple_field(info.annotation):
                wrapped[name] = [value]

        return wrapped


def _triplet(value: Any) -> Any:
    if isinstance(value, (list, tuple)) and len(value) == 1:
        return [value[0]] * 3

    if isinstance(value, (int, float)):
        return [value] * 3

    return value


class SystemBlock(_Block):
    preset: Optional[str] = None
    couplings: Dict[str, Tuple[float, float]] = {}
    delta: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    gamma: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    kappa: Optional[float] = None
    a_in: Tuple[float, float] = (1.0, 0.0)

    @field_validator("delta", "gamma", mode="before")
    @classmethod
    def _broadcast(cls, value: Any) -> Any:
        return _triplet(value)

    @field_validator("kappa", mode="before")
    @classmethod
    def _critical(cls, value: Any) -> Any:
        if isinstance(value, str) and value.strip().lower() == "critical":
            return None

        return value

    @field_validator("a_in", mode="before")
    @classmethod
    def _drive(cls, value: Any) -> Any:
        if isinstance(value, (list, tuple)) and len(value) == 1:
            return [value[0], 0.0]

        return value

    @field_validator("couplings", mode="before")
    @classmethod
    def _pad_phases(cls, value: Any) -> Any:
        if not isinstance(value, dict):
            return value

        padded = {}
        for key, entry in value.items():
            if isinstance(entry, str):
                entry = [entry]

            entry = list(entry)
            if len(entry) == 1:
                entry.append(0.0)

            padded[key] = entry

        return padded

    @field_validator("preset")
    @classmethod
    def _known_preset(cls, value: Optional[str]) -> Optional[str]:
        from ..spectra import PRESET_SYSTEMS

        if value is not None and value not in PRESET_SYSTEMS:
            raise ValueError(f"unknown preset '{value}'")

        return value

    @field_validator("gamma")
    @classmethod
    def _positive_gamma(cls, value: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if value[0] <= 0 or any(g < 0 for g in value):
            raise ValueError("gamma1 must be positive and all gamma non-negative")

        return value

    def moduli_and_phases(self) -> Tuple[Dict[Tuple[int, int], float], Dict[Tuple[int, int], float]]:
        """Модули и фазы (в единицах π) с учётом пресета."""
        moduli: Dict[Tuple[int, int], float] = {}
        phases: Dict[Tuple[int, int], float] = {}

        if self.preset is not None:
            from ..spectra import PRESET_SYSTEMS

            base_moduli, base_phases = PRESET_SYSTEMS[self.preset]
            moduli.update(base_moduli)
            phases.update(base_phases)

        for key, (modulus, phase) in self.couplings.items():
            pair = (int(key[0]), int(key[1]))
            moduli[pair] = modulus
            phases[pair] = phase

        return moduli, phases

    def to_system(self):
        from ..loop_system import LoopSystem

        moduli, phases = self.moduli_and_phases()
        couplings = {
            pair: modulus * np.exp(1j * math.pi * phases.get(pair, 0.0))
            for pair, modulus in moduli.items()
        }
        modulus, phase = self.a_in
        return LoopSystem.from_couplings(
            couplings,
            delta=self.delta,
            gamma=self.gamma,
            kappa=self.kappa,
            a_in=modulus * np.exp(1j * math.pi * phase),
        )


class SweepBlock(_Block):
    delta_min: float = -100.0
    delta_max: float = 100.0
    points: int = 2001
    prominence: float = 0.01

    @model_validator(mode="after")
    def _check_grid(self) -> "SweepBlock":
        if not self.delta_min < self.delta_max:
            raise ValueError("delta_min must be below delta_max")

        if self.points < 5:
            raise ValueError("points must be >= 5")

        if not self.prominence > 0:
            raise ValueError("prominence must be positive")

        return self

    def grid(self) -> np.ndarray:
        return np.linspace(self.delta_min, self.delta_max, self.points)


def _pair(value: Tuple[int, int]) -> Tuple[int, int]:
    if any(i not in (1, 2, 3) for i in value):
        raise ValueError(f"resonator indices must be 1, 2 or 3, got {value}")

    return value


class PhaseBlock(_Block):
    which: Tuple[int, int]
    samples: int = 256
    delta: float = 0.0
    compare: Optional[Tuple[int, int]] = None

    @field_validator("which", "compare")
    @classmethod
    def _indices(cls, value: Optional[Tuple[int, int]]) -> Optional[Tuple[int, int]]:
        return value if value is None else _pair(value)

    @field_validator("samples")
    @classmethod
    def _samples(cls, value: int) -> int:
        if value < 2:
            raise ValueError("samples must be >= 2")

        return value


class TaylorBlock(_Block):
    x: float = 3.0

    @field_validator("x")
    @classmethod
    def _non_negative(cls, value: float) -> float:
        if value < 0:
            raise ValueError("x must be non-negative")

        return value


class ParticleBlock(_Block):
    target: int = 2
    m: int = 52
    delta_eps: float = 1.0
    s0: float = 20.0
    theta: float = 90.0
    theta_shifted: float = 95.0
    compose: bool = False
    max_shift: Optional[float] = None

    @field_validator("target")
    @classmethod
    def _target(cls, value: int) -> int:
        if value not in (1, 2, 3):
            raise ValueError("target must be 1, 2 or 3")

        return value


class SlabBlock(_Block):
    pair: Tuple[int, int] = (2, 3)
    xi_background: Optional[Tuple[float, float]] = None
    xi_slab: Tuple[float, float] = (3.0, 0.0)
    eps_reference: float = 4.0
    eps_background: float = 1.0
    eps_slab: float = 4.1
    max_shift: Optional[float] = None

    @field_validator("pair")
    @classmethod
    def _indices(cls, value: Tuple[int, int]) -> Tuple[int, int]:
        return _pair(value)

    @field_validator("xi_background", "xi_slab", mode="before")
    @classmethod
    def _polar(cls, value: Any) -> Any:
        if isinstance(value, (list, tuple)) and len(value) == 1:
            return [value[0], 0.0]

        return value


class FdtdBlock(_Block):
    geometry: Literal["loop", "waveguide"] = "loop"
    cell: float = 30.0
    wavelength: Optional[float] = None
    wavelengths: Optional[Tuple[float, ...]] = None
    lambda_min: Optional[float] = None
    lambda_max: Optional[float] = None
    lambda_points: Optional[int] = None
    particle_theta: Optional[float] = None
    particle_eps: float = 4.0
    slab_eps: Optional[float] = None
    slab_pair: Tuple[int, int] = (2, 3)
    ring_eps: float = 4.0
    margin: float = 1000.0
    pml_cells: int = 10
    pml_order: int = 3
    pml_reflection: float = 1e-6
    max_cycles: float = 2000.0
    window_cycles: float = 20.0
    tolerance: float = 0.005
    snapshot: bool = False
    compare_particle_theta: Optional[float] = None
    compare_slab_eps: Optional[float] = None
    prominence: float = 0.02
    max_shift: Optional[float] = None

    @model_validator(mode="after")
    def _check_band(self) -> "FdtdBlock":
        band = (self.lambda_min, self.lambda_max, self.lambda_points)
        if any(v is not None for v in band) and not all(v is not None for v in band):
            raise ValueError("lambda_min, lambda_max and lambda_points go together")

        if not self.cell > 0:
            raise ValueError("cell must be positive")

        if not self.prominence > 0:
            raise ValueError("prominence must be positive")

        if self.compared() is not None and self.geometry != "loop":
            raise ValueError("compare_* needs geometry = loop")

        return self

    def compared(self) -> Optional["FdtdBlock"]:
        """Блок для сравнительной развёртки (частица или пластинка изменены), если она задана."""
        update = {}
        if self.compare_particle_theta is not None:
            update["particle_theta"] = self.compare_particle_theta

        if self.compare_slab_eps is not None:
            update["slab_eps"] = self.compare_slab_eps

        if not update:
            return None

        return self.model_copy(update=update)

    def wavelength_list(self) -> List[float]:
        """Длины волн развёртки: явный список, либо равномерная полоса, либо одна длина волны."""
        if self.wavelengths:
            return list(self.wavelengths)

        if self.lambda_points is not None:
            return np.linspace(self.lambda_min, self.lambda_max, self.lambda_points).tolist()

        if self.wavelength is not None:
            return [self.wavelength]

        return []


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    command: Command
    output: str = "output"
    system: Optional[SystemBlock] = None
    sweep: Optional[SweepBlock] = None
    phase: Optional[PhaseBlock] = None
    taylor: Optional[TaylorBlock] = None
    particle: Optional[ParticleBlock] = None
    slab: Optional[SlabBlock] = None
    fdtd: Optional[FdtdBlock] = None

    def missing_blocks(self, command: Optional[str] = None) -> List[str]:
        return [name for name in COMMAND_BLOCKS[command or self.command] if getattr(self, name) is None]


_BLOCK_MODELS = {
    "system": SystemBlock,
    "sweep": SweepBlock,
    "phase": PhaseBlock,
    "taylor": TaylorBlock,
    "particle": ParticleBlock,
    "slab": SlabBlock,
    "fdtd": FdtdBlock,
}


def _value(raw: str) -> str | List[str]:
    tokens = [token.strip() for token in raw.split(",")]
    return tokens[0] if len(tokens) == 1 else tokens


class _Section:
    __slots__ = ["name", "line", "values", "lines"]

    def __init__(self, name: str, line: int) -> None:
        self.name = name
        self.line = line
        self.values: Dict[str, Any] = {}
        self.lines: Dict[str, int] = {}

    def add(self, key: str, raw: str, line: int) -> None:
        coupling = _COUPLING.match(key)
        if coupling and self.name == "system":
            i, j = sorted(coupling.groups())
            field_key = f"xi{i}{j}"
            if field_key in self.lines:
                raise ConfigError(f"duplicate coupling '{key}'", line)

            self.values.setdefault("couplings", {})[f"{i}{j}"] = _value(raw)
            self.lines[field_key] = line
            return

        if key in self.values:
            raise ConfigError(f"duplicate key '{key}'", line)

        self.values[key] = _value(raw)
        self.lines[key] = line

    def line_of(self, loc: Tuple) -> int:
        if not loc:
            return self.line

        if loc[0] == "couplings" and len(loc) > 1:
            return self.lines.get(f"xi{loc[1]}", self.line)

        return self.lines.get(str(loc[0]), self.line)


def _tokenize(text: str) -> Tuple[_Section, Dict[str, _Section]]:
    top = _Section("", 0)
    sections: Dict[str, _Section] = {}
    current = top

    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue

        header = _SECTION.match(line)
        if header:
            name = header.group(1).lower()
            if name not in _BLOCK_MODELS:
                raise ConfigError(f"unknown block [{name}]", number)

            if name in sections:
                raise ConfigError(f"duplicate block [{name}]", number)

            current = sections[name] = _Section(name, number)
            continue

        pair = _KEY.match(line)
        if not pair:
            raise ConfigError(f"expected 'key = value', got '{line}'", number)

        key, raw = pair.group(1).lower(), pair.group(2).strip()
        if not raw:
            raise ConfigError(f"empty value for '{key}'", number)

        current.add(key, raw, number)

    return top, sections


def _describe(err: ValidationError) -> Tuple[Tuple, str]:
    first = err.errors()[0]
    loc = tuple(first.get("loc", ()))
    field = ".".join(str(part) for part in loc)
    message = first.get("msg", str(err))
    if first.get("type") == "extra_forbidden":
        message = f"unknown key '{loc[0] if loc else ''}'"

    elif field:
        message = f"{field}: {message}"

    return loc, message


def parse_config(text: str, command: Optional[str] = None) -> RunConfig:
    """Разбирает текстовую конфигурацию запуска.

    Формат: строки `key = value`, секции `[system]`, `[sweep]`, ..., комментарии
    после `#`. Связи задаются как `xi12 = модуль, фаза/π`.

    Args:
        text (str): Текст конфигурации.
        command (str, optional): Команда из командной строки; заменяет `command`
            из файла.

    Raises:
        ConfigError: С номером строки, если он известен.
    """
    top, sections = _tokenize(text)

    for key in top.values:
        if key not in ("command", "output"):
            raise ConfigError(f"unknown key '{key}'", top.lines[key])

    if command is None:
        command = top.values.get("command")

    if command is None:
        raise ConfigError("missing command")

    if command not in COMMANDS:
        raise ConfigError(f"unknown command '{command}'", top.lines.get("command"))

    blocks: Dict[str, BaseModel] = {}
    for name, section in sections.items():
        try:
            blocks[name] = _BLOCK_MODELS[name].model_validate(section.values)

        except ValidationError as err:
            loc, message = _describe(err)
            raise ConfigError(f"[{name}] {message}", section.line_of(loc)) from err

    missing = [name for name in COMMAND_BLOCKS[command] if name not in blocks]
    if missing:
        raise ConfigError(f"missing block {', '.join(f'[{m}]' for m in missing)} for command '{command}'")

    params: Dict[str, Any] = {"command": command, **blocks}
    if "output" in top.values:
        params["output"] = top.values["output"]

    try:
        return RunConfig.model_validate(params)

    except ValidationError as err:
        _, message = _describe(err)
        raise ConfigError(message, top.lines.get("output")) from err


def _format_field(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"

    if isinstance(value, (tuple, list)):
        return ", ".join(_format_field(v) for v in value)

    return format_value(value)


def format_config(config: RunConfig) -> str:
    """Записывает RunConfig обратно в текст: parse_config(format_config(c)) == c."""
    lines = [f"command = {config.command}", f"output = {config.output}"]

    for name in BLOCK_NAMES:
        block = getattr(config, name)
        if block is None:
            continue

        lines.append("")
        lines.append(f"[{name}]")
        for field_name, value in block:
            if field_name == "couplings":
                for key in sorted(value):
                    lines.append(f"xi{key} = {_format_field(value[key])}")

                continue

            if field_name == "kappa" and value is None:
                lines.append("kappa = critical")
                continue

            if value is None:
                continue

            lines.append(f"{field_name} = {_format_field(value)}")

    return "\n".join(lines) + "\n"

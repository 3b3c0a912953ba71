# config.py - run configuration: flat key = value files validated with pydantic

from typing import Dict, Literal
import logging
import os

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from errors import ConfigError
from grid import GridSpec

logger = logging.getLogger(__name__)

load_dotenv()

VERSION = "1.0.0"
LOG_LEVEL = os.getenv("EHD_LOG_LEVEL", "INFO").upper()
OUTPUT_DIR = os.getenv("EHD_OUTPUT_DIR", "runs")
DATABASE_URL = os.getenv("EHD_DATABASE_URL")

PRESET_NAMES = ("neutral-rest", "two-blobs", "sheared-blobs", "noisy-neutral")


class SimConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    nx: int = 32
    ny: int = 32
    lx: float = 1.0
    ly: float = 1.0
    dt: float = 1e-3
    t_end: float = 1.0
    theta: float = 1.0
    mode: Literal['coupled', 'debye'] = 'coupled'
    preset: str = 'neutral-rest'
    preset_params: Dict[str, float] = {}
    poisson_tol: float = 1e-10
    transport_tol: float = 1e-10
    fluid_tol: float = 1e-10
    steady_tol: float = 1e-10
    output_every: int = 10
    seed: int = 0
    advection: Literal['centered', 'upwind'] = 'centered'
    half_potential: bool = False

    @field_validator('nx', 'ny')
    @classmethod
    def validate_counts(cls, v):
        if v < 3:
            raise ValueError('must be at least 3')
        return v

    @field_validator('lx', 'ly', 'dt', 'theta', 'poisson_tol', 'transport_tol', 'fluid_tol', 'steady_tol')
    @classmethod
    def validate_positive(cls, v):
        if not v > 0:
            raise ValueError('must be positive')
        return v

    @field_validator('t_end')
    @classmethod
    def validate_t_end(cls, v):
        if v < 0:
            raise ValueError('must be nonnegative')
        return v

    @field_validator('output_every')
    @classmethod
    def validate_output_every(cls, v):
        if v < 1:
            raise ValueError('must be at least 1')
        return v

    @field_validator('preset')
    @classmethod
    def validate_preset(cls, v):
        if v not in PRESET_NAMES:
            raise ValueError(f'unknown preset (known: {", ".join(PRESET_NAMES)})')
        return v

    @model_validator(mode='after')
    def validate_steps(self):
        if self.t_end / self.dt > 1e8:
            raise ValueError('t_end / dt exceeds 1e8 steps')
        return self

    @property
    def grid(self) -> GridSpec:
        return GridSpec(nx=self.nx, ny=self.ny, lx=self.lx, ly=self.ly)

    def param(self, name: str, default: float) -> float:
        return float(self.preset_params.get(name, default))

    def to_text(self) -> str:
        """Serialize back to the flat key = value format."""
        data = self.model_dump()
        params = data.pop('preset_params')
        lines = [f"{key} = {_format_value(value)}" for key, value in data.items()]
        lines += [f"preset.{key} = {_format_value(value)}" for key, value in sorted(params.items())]
        return "\n".join(lines) + "\n"


def _format_value(value) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text: str) -> SimConfig:
    """Parse `key = value` lines (with `#` comments) into a validated SimConfig."""
    values: Dict[str, str] = {}
    params: Dict[str, float] = {}
    lines: Dict[str, int] = {}

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"line {number}: expected 'key = value'", line=number)
        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ConfigError(f"line {number}: empty key", line=number)
        if key in lines:
            raise ConfigError(f"line {number}: duplicate key {key!r} (first on line {lines[key]})", key=key, line=number)
        lines[key] = number
        if key.startswith('preset.'):
            name = key[len('preset.'):]
            try:
                params[name] = float(value)
            except ValueError:
                raise ConfigError(f"line {number}: {key} must be a number, got {value!r}", key=key, line=number)
            continue
        if key not in SimConfig.model_fields or key == 'preset_params':
            raise ConfigError(f"line {number}: unknown key {key!r}", key=key, line=number)
        values[key] = value

    try:
        return SimConfig(**values, preset_params=params)
    except ValidationError as e:
        first = e.errors()[0]
        key = str(first['loc'][0]) if first.get('loc') else None
        line = lines.get(key) if key else None
        where = f"line {line}: " if line else ""
        raise ConfigError(f"{where}{key}: {first['msg']}", key=key, line=line)


def load_config(path: str) -> SimConfig:
    with open(path, 'r') as fh:
        text = fh.read()
    config = parse_config_text(text)
    logger.info(f"Loaded config from {path}: preset={config.preset}, grid={config.nx}x{config.ny}, dt={config.dt}")
    return config

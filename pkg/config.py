"""
Configuration module for nonlocal-dynamics.

Run configurations are TOML documents validated against a strict schema:
every table and key must be known, and errors name the dotted key path.
Process-wide settings (threads, logging) come from environment variables.
"""

import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Type, TypeVar, Union

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from src.dynamics.evolution import ProcessConfig
from src.dynamics.nonlinearity import CATALOGUE, LIMIT_CATALOGUE
from src.dynamics.spatial import KERNEL_KINDS, QUADRATURE_RULES
from utils.validators import (
    ValidationError,
    validate_choice,
    validate_count,
    validate_exponent,
    validate_finite,
    validate_increasing,
    validate_interval,
    validate_positive,
)

logger = logging.getLogger(__name__)

INITIAL_KINDS = ("constant", "ramp", "sine", "random")
SWEEP_FAMILIES = ("shift", "time_shift")
DEFAULT_DEPTHS = (5.0, 10.0, 20.0, 40.0, 80.0)

T = TypeVar("T")
Converter = Callable[[Any, str], Any]


# ---------------------------------------------------------------------------
# Value converters: (value, key path) -> validated value
# ---------------------------------------------------------------------------


def _float(value: Any, path: str) -> float:
    return validate_finite(value, path)


def _int(value: Any, path: str) -> int:
    return validate_count(value, path, minimum=0)


def _bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise ValidationError(f"{path} must be true or false, got {value!r}")
    return value


def _str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise ValidationError(f"{path} must be a string, got {value!r}")
    return value


def _floats(value: Any, path: str) -> Tuple[float, ...]:
    if not isinstance(value, list):
        raise ValidationError(f"{path} must be a list of numbers")
    return tuple(validate_finite(v, f"{path}[{i}]") for i, v in enumerate(value))


def _params(value: Any, path: str) -> Dict[str, float]:
    if not isinstance(value, dict):
        raise ValidationError(f"{path} must be a table of numbers")
    return {str(k): validate_finite(v, f"{path}.{k}") for k, v in value.items()}


def _exponent(value: Any, path: str) -> float:
    return validate_exponent(value, path)


def _key(convert: Converter, default: Any = None, **kwargs: Any) -> Any:
    if "default_factory" in kwargs:
        return field(metadata={"convert": convert}, **kwargs)
    return field(default=default, metadata={"convert": convert})


def _table(cls: Type[T]) -> Converter:
    return lambda value, path: _from_table(cls, value, path)


def _from_table(
    cls: Type[T], data: Any, path: str, converters: Optional[Dict[str, Converter]] = None
) -> T:
    """Build a schema dataclass from a TOML table, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ValidationError(f"{path} must be a table")
    known = converters or {
        f.name: f.metadata["convert"] for f in fields(cls) if "convert" in f.metadata
    }
    for key in data:
        if key not in known:
            raise ValidationError(f"unknown key '{path}.{key}'" if path else f"unknown key '{key}'")
    kwargs = {
        name: convert(data[name], f"{path}.{name}" if path else name)
        for name, convert in known.items()
        if name in data
    }
    return cls(**kwargs)


def _check_params(kind: str, params: Dict[str, float], allowed: Tuple[str, ...], path: str) -> None:
    for name in params:
        if name not in allowed:
            raise ValidationError(f"unknown key '{path}.params.{name}' for kind '{kind}'")


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    a: float = _key(_float, 0.0)
    b: float = _key(_float, 1.0)
    n: int = _key(_int, 101)
    rule: str = _key(_str, "trapezoid")

    def __post_init__(self) -> None:
        validate_interval(self.a, self.b, "grid.(a, b)")
        validate_count(self.n, "grid.n", minimum=2)
        validate_choice(self.rule, QUADRATURE_RULES, "grid.rule")


@dataclass(frozen=True)
class KernelSpec:
    kind: str = _key(_str, "uniform")
    value: Optional[float] = _key(_float)
    sigma: Optional[float] = _key(_float)
    radius: Optional[float] = _key(_float)
    path: Optional[str] = _key(_str)

    def __post_init__(self) -> None:
        validate_choice(self.kind, KERNEL_KINDS, "kernel.kind")
        required = {"gaussian": "sigma", "tent": "radius", "table": "path"}.get(self.kind)
        if required and getattr(self, required) is None:
            raise ValidationError(f"kernel.{required} is required for kind '{self.kind}'")


@dataclass(frozen=True)
class NonlinearitySpec:
    kind: str = _key(_str, "saturating")
    params: Dict[str, float] = _key(_params, default_factory=dict)
    k1: Optional[float] = _key(_float)
    k2: Optional[float] = _key(_float)
    monotone: Optional[bool] = _key(_bool)

    def __post_init__(self) -> None:
        validate_choice(self.kind, CATALOGUE, "nonlinearity.kind")
        _check_params(self.kind, self.params, CATALOGUE[self.kind][1], "nonlinearity")


@dataclass(frozen=True)
class LimitSpec:
    kind: str = _key(_str, "saturating")
    params: Dict[str, float] = _key(_params, default_factory=dict)
    a: Optional[float] = _key(_float)

    def __post_init__(self) -> None:
        validate_choice(self.kind, LIMIT_CATALOGUE, "limit.kind")
        _check_params(self.kind, self.params, LIMIT_CATALOGUE[self.kind][1], "limit")
        if self.a is not None:
            validate_positive(self.a, "limit.a")


@dataclass(frozen=True)
class InitialSpec:
    """Initial field: constant, ramp, sine or smooth random."""

    kind: str = _key(_str, "constant")
    value: float = _key(_float, 0.0)
    amplitude: float = _key(_float, 0.0)
    mode: int = _key(_int, 1)
    radius: float = _key(_float, 1.0)

    def __post_init__(self) -> None:
        validate_choice(self.kind, INITIAL_KINDS, "initial.kind")


@dataclass(frozen=True)
class SimulateSpec:
    tau: float = _key(_float, 0.0)
    t: float = _key(_float, 1.0)
    initial: InitialSpec = _key(_table(InitialSpec), default_factory=InitialSpec)
    record_every: int = _key(_int, 1)
    delta: float = _key(_float, 0.1)

    def __post_init__(self) -> None:
        if self.t < self.tau:
            raise ValidationError(f"simulate.t must be >= simulate.tau, got {self.t} < {self.tau}")
        validate_count(self.record_every, "simulate.record_every")
        validate_positive(self.delta, "simulate.delta", allow_zero=True)


@dataclass(frozen=True)
class AttractorSpec:
    t: float = _key(_float, 0.0)
    depths: Tuple[float, ...] = _key(_floats, DEFAULT_DEPTHS)
    tol: float = _key(_float, 1e-4)
    delta: float = _key(_float, 0.1)
    seed_constants: int = _key(_int, 7)
    seed_random: int = _key(_int, 8)
    seed_radius: Optional[float] = _key(_float)

    def __post_init__(self) -> None:
        validate_increasing(list(self.depths), "attractor.depths")
        if self.depths[0] <= 0:
            raise ValidationError("attractor.depths must be positive")
        validate_positive(self.tol, "attractor.tol")
        validate_positive(self.delta, "attractor.delta", allow_zero=True)
        if self.seed_constants + self.seed_random < 1:
            raise ValidationError("attractor seed ensemble must not be empty")
        if self.seed_radius is not None:
            validate_positive(self.seed_radius, "attractor.seed_radius")


@dataclass(frozen=True)
class CompareSpec:
    tau: float = _key(_float, 0.0)
    t: float = _key(_float, 10.0)
    lower: NonlinearitySpec = _key(_table(NonlinearitySpec), default_factory=NonlinearitySpec)
    upper: NonlinearitySpec = _key(_table(NonlinearitySpec), default_factory=NonlinearitySpec)
    v_tau: InitialSpec = _key(_table(InitialSpec), default_factory=lambda: InitialSpec(value=-1.0))
    u_tau: InitialSpec = _key(_table(InitialSpec), default_factory=InitialSpec)
    V_tau: InitialSpec = _key(_table(InitialSpec), default_factory=lambda: InitialSpec(value=1.0))

    def __post_init__(self) -> None:
        if self.t < self.tau:
            raise ValidationError(f"compare.t must be >= compare.tau, got {self.t} < {self.tau}")


@dataclass(frozen=True)
class LyapunovSpec:
    tau: float = _key(_float, 0.0)
    t: float = _key(_float, 30.0)
    initial: InitialSpec = _key(_table(InitialSpec), default_factory=lambda: InitialSpec(value=1.0))
    resolution: int = _key(_int, 4096)
    exterior_coupling: bool = _key(_bool, False)
    equilibrium_tol: float = _key(_float, 1e-10)
    verdict_tol: float = _key(_float, 1e-3)
    seed_levels: Tuple[float, ...] = _key(_floats, ())
    record_every: int = _key(_int, 1)

    def __post_init__(self) -> None:
        if self.t < self.tau:
            raise ValidationError(f"lyapunov.t must be >= lyapunov.tau, got {self.t} < {self.tau}")
        validate_count(self.resolution, "lyapunov.resolution", minimum=1000)
        validate_positive(self.equilibrium_tol, "lyapunov.equilibrium_tol")
        validate_positive(self.verdict_tol, "lyapunov.verdict_tol")
        validate_count(self.record_every, "lyapunov.record_every")


@dataclass(frozen=True)
class SweepSpec:
    betas: Tuple[float, ...] = _key(_floats, (0.2, 0.1, 0.05, 0.025))
    beta0: float = _key(_float, 0.0)
    family: str = _key(_str, "shift")
    tau: float = _key(_float, 0.0)
    t: float = _key(_float, 2.0)
    depths: Tuple[float, ...] = _key(_floats, DEFAULT_DEPTHS)
    tol: float = _key(_float, 1e-4)
    seed_constants: int = _key(_int, 7)
    seed_random: int = _key(_int, 0)
    seed_radius: float = _key(_float, 3.0)

    def __post_init__(self) -> None:
        if not self.betas:
            raise ValidationError("sweep.betas must be a non-empty list")
        validate_choice(self.family, SWEEP_FAMILIES, "sweep.family")
        if self.t <= self.tau:
            raise ValidationError(f"sweep.t must be > sweep.tau, got {self.t} <= {self.tau}")
        validate_increasing(list(self.depths), "sweep.depths")
        validate_positive(self.tol, "sweep.tol")
        validate_positive(self.seed_radius, "sweep.seed_radius")
        if self.seed_constants + self.seed_random < 1:
            raise ValidationError("sweep seed ensemble must not be empty")


_PROCESS_KEYS: Dict[str, Converter] = {
    "dt": _float,
    "method": _str,
    "richardson": _bool,
    "tol": _float,
}


def _process(value: Any, path: str) -> ProcessConfig:
    return _from_table(ProcessConfig, value, path, _PROCESS_KEYS)


@dataclass(frozen=True)
class RunConfig:
    """One validated run: problem setup plus the block of every subcommand."""

    grid: GridSpec = _key(_table(GridSpec), default_factory=GridSpec)
    kernel: KernelSpec = _key(_table(KernelSpec), default_factory=KernelSpec)
    nonlinearity: NonlinearitySpec = _key(_table(NonlinearitySpec), default_factory=NonlinearitySpec)
    limit: Optional[LimitSpec] = _key(_table(LimitSpec))
    process: ProcessConfig = _key(_process, default_factory=ProcessConfig)
    simulate: SimulateSpec = _key(_table(SimulateSpec), default_factory=SimulateSpec)
    attractor: AttractorSpec = _key(_table(AttractorSpec), default_factory=AttractorSpec)
    compare: CompareSpec = _key(_table(CompareSpec), default_factory=CompareSpec)
    lyapunov: LyapunovSpec = _key(_table(LyapunovSpec), default_factory=LyapunovSpec)
    sweep: SweepSpec = _key(_table(SweepSpec), default_factory=SweepSpec)
    rng_seed: int = _key(_int, 42)
    output_dir: str = _key(_str, "output")
    p: float = _key(_exponent, 2.0)
    # Directory that relative paths (kernel tables) resolve against; not serialized
    base_dir: Optional[Path] = field(default=None, compare=False)


# ---------------------------------------------------------------------------
# Parsing and serialization
# ---------------------------------------------------------------------------


def parse_config(text: str, base_dir: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Parse and validate a TOML run configuration.

    Args:
        text: TOML document.
        base_dir: Directory for resolving relative paths inside the document.

    Returns:
        RunConfig with defaults filled in.

    Raises:
        ValidationError: On TOML syntax errors (with line and column) or schema
            violations (with the dotted key path).
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ValidationError(f"invalid TOML: {e}") from e
    config = _from_table(RunConfig, data, "")
    if base_dir is not None:
        config = _replace(config, base_dir=Path(base_dir))
    logger.debug(f"Parsed configuration with {len(data)} top-level entries")
    return config


def load_config(path: Union[str, Path]) -> RunConfig:
    """
    Read a configuration file; relative paths inside it resolve against its directory.

    Raises:
        ValidationError: If the file is missing or invalid.
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"configuration file not found: {path}")
    logger.info(f"Loading configuration from {path}")
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


def _replace(config: RunConfig, **changes: Any) -> RunConfig:
    values = {f.name: getattr(config, f.name) for f in fields(config)}
    values.update(changes)
    return RunConfig(**values)


def _to_toml(value: Any) -> Any:
    if hasattr(value, "__dataclass_fields__"):
        table = {}
        for f in fields(value):
            if f.name == "base_dir":
                continue
            item = getattr(value, f.name)
            if item is not None:
                table[f.name] = _to_toml(item)
        return table
    if isinstance(value, (list, tuple)):
        return [_to_toml(item) for item in value]
    if isinstance(value, dict):
        return {k: _to_toml(v) for k, v in value.items()}
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return value


def serialize_config(config: RunConfig) -> str:
    """Render a RunConfig as TOML; parse_config(serialize_config(c)) == c."""
    return tomli_w.dumps(_to_toml(config))


# ---------------------------------------------------------------------------
# Process settings
# ---------------------------------------------------------------------------


class Settings:
    """Process-wide settings read from environment variables."""

    def __init__(self) -> None:
        """Initialize settings from the environment."""
        self._threads: int = 1
        self._log_level: str = "INFO"
        self._log_file: Optional[Path] = None
        self._load_settings()

    def _load_settings(self) -> None:
        """Load settings from NONLOCAL_* environment variables."""
        threads = os.environ.get("NONLOCAL_THREADS")
        if threads:
            try:
                self._threads = max(1, int(threads))
            except ValueError:
                logger.warning(f"Ignoring NONLOCAL_THREADS={threads!r}: not an integer")
        self._log_level = os.environ.get("NONLOCAL_LOG_LEVEL", "INFO").upper()
        log_file = os.environ.get("NONLOCAL_LOG_FILE")
        if log_file:
            self._log_file = Path(log_file)

    @property
    def threads(self) -> int:
        """Worker threads when --threads is not given."""
        return self._threads

    @property
    def log_level(self) -> str:
        """Logging level name."""
        return self._log_level

    @property
    def log_file(self) -> Optional[Path]:
        """Optional log file path."""
        return self._log_file


# Global settings instance
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get the global settings instance."""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def reset_settings() -> None:
    """Drop the cached settings so the environment is read again."""
    global _settings
    _settings = None

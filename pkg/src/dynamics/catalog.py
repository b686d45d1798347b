"""
Builders turning validated configuration blocks into numerical objects.
"""

import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np

from config import GridSpec, InitialSpec, KernelSpec, LimitSpec, NonlinearitySpec
from src.dynamics.nonlinearity import (
    CATALOGUE,
    LIMIT_CATALOGUE,
    AutonomousNonlinearity,
    TimeNonlinearity,
    shifted,
    time_shifted,
    with_claims,
)
from src.dynamics.spatial import (
    DiscreteKernel,
    Field,
    SpatialGrid,
    assemble_kernel,
    build_grid,
    gaussian_kernel,
    load_kernel_table,
    smooth_random_fields,
    tent_kernel,
    uniform_kernel,
)
from utils.validators import ValidationError

logger = logging.getLogger(__name__)


def grid_from_spec(spec: GridSpec) -> SpatialGrid:
    return build_grid(spec.a, spec.b, spec.n, spec.rule)


def kernel_from_spec(
    spec: KernelSpec, grid: SpatialGrid, base_dir: Optional[Path] = None
) -> DiscreteKernel:
    """
    Assemble the kernel named by a [kernel] block.

    Relative table paths resolve against base_dir (the config file's directory).
    """
    if spec.kind == "table":
        path = Path(spec.path)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        return load_kernel_table(path, grid)
    if spec.kind == "uniform":
        J = uniform_kernel(grid.measure, spec.value)
    elif spec.kind == "gaussian":
        J = gaussian_kernel(spec.sigma)
    else:
        J = tent_kernel(spec.radius)
    return assemble_kernel(grid, J)


def nonlinearity_from_spec(spec: NonlinearitySpec) -> TimeNonlinearity:
    """Build a catalogue nonlinearity and apply any claimed constants."""
    builder, _ = CATALOGUE[spec.kind]
    g = builder(**spec.params)
    g = with_claims(g, spec.k1, spec.k2, spec.monotone)
    logger.debug(f"Built nonlinearity {g.name} (k1={g.k1}, k2={g.k2})")
    return g


def limit_from_spec(
    spec: Optional[LimitSpec], g: TimeNonlinearity
) -> Optional[AutonomousNonlinearity]:
    """
    Resolve the autonomous limit g0: the [limit] block if present, else g's own limit.

    Raises:
        ValidationError: If limit.a disagrees with the saturation level of g0.
    """
    if spec is None:
        return g.limit
    builder, _ = LIMIT_CATALOGUE[spec.kind]
    g0 = builder(**spec.params)
    if spec.a is not None and not math.isclose(spec.a, g0.a, rel_tol=1e-12):
        raise ValidationError(
            f"limit.a = {spec.a} does not match the saturation level {g0.a} of {g0.name}"
        )
    return g0


def field_from_spec(spec: InitialSpec, grid: SpatialGrid, rng_seed: int) -> Field:
    """
    Initial field from an [initial] block.

    constant: value; ramp: value + amplitude (x - a)/|Omega|;
    sine: value + amplitude sin(mode pi (x - a)/|Omega|); random: one smooth
    random field of sup norm <= radius drawn from rng_seed.
    """
    phase = (grid.nodes - grid.a) / grid.measure
    if spec.kind == "constant":
        return grid.constant(spec.value)
    if spec.kind == "ramp":
        return grid.field(spec.value + spec.amplitude * phase)
    if spec.kind == "sine":
        return grid.field(spec.value + spec.amplitude * np.sin(spec.mode * math.pi * phase))
    rng = np.random.default_rng(rng_seed)
    return smooth_random_fields(grid, 1, spec.radius, rng)[0]


def sweep_family(family: str, g: TimeNonlinearity, beta: float) -> TimeNonlinearity:
    """
    Member g_beta of a perturbation family.

    shift: g0 + beta for the saturating g0 of g's limit.
    time_shift: g(t + beta, x).
    """
    if family == "time_shift":
        return time_shifted(g, beta)
    g0 = g.limit
    if g0 is None:
        raise ValidationError(f"sweep.family 'shift' needs a nonlinearity with a limit, got {g.name}")
    # Recover amplitude and slope of a * tanh(b x): g0(0) = 0, g0'(0) = a b
    amplitude = math.copysign(g0.a, float(g0(np.array([1.0]))[0]))
    slope = float(g0.slope(np.array([0.0]))[0]) / amplitude
    return shifted(amplitude, slope, beta)

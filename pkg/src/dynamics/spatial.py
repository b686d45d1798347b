"""
Spatial discretization for the nonlocal problem on an interval.

Provides quadrature grids, fields on grid nodes, the discretized integral
operator K (a quadrature matrix built from a symmetric kernel J), L^p norms
and the Hausdorff semi-distance between ensembles of fields.

All reductions use a fixed left-to-right summation order so that results are
bit-reproducible regardless of thread count.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from src.dynamics.exceptions import DimensionError, DomainError, KernelError
from utils.validators import (
    ValidationError,
    validate_choice,
    validate_count,
    validate_exponent,
    validate_finite,
    validate_positive,
)

logger = logging.getLogger(__name__)

QUADRATURE_RULES = ("trapezoid", "midpoint")
KERNEL_KINDS = ("uniform", "gaussian", "tent", "table")
SYMMETRY_TOL = 1e-12
MASS_TOL = 1e-10
WEIGHT_SUM_RTOL = 1e-12

Exponent = Union[float, int, str]
BivariateFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _frozen(values: Sequence[float]) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


def ordered_sum(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """
    Sum along an axis in strict left-to-right order.

    numpy's sum uses pairwise blocking; cumsum is sequential, so its last
    entry is the left-to-right sum.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[axis] == 0:
        return np.sum(values, axis=axis)
    return np.take(np.cumsum(values, axis=axis), -1, axis=axis)


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    """Quadrature discretization of the interval (a, b)."""

    a: float
    b: float
    n: int
    rule: str
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def measure(self) -> float:
        """Length of the interval."""
        return self.b - self.a

    @property
    def key(self) -> Tuple[float, float, int, str]:
        return (self.a, self.b, self.n, self.rule)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SpatialGrid) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def field(self, values: Sequence[float]) -> "Field":
        return Field(self, values)

    def constant(self, value: float) -> "Field":
        return Field(self, np.full(self.n, float(value)))

    def zeros(self) -> "Field":
        return self.constant(0.0)

    def sample(self, func: Callable[[np.ndarray], np.ndarray]) -> "Field":
        """Evaluate a vectorized function of x at the grid nodes."""
        return Field(self, np.broadcast_to(np.asarray(func(self.nodes), dtype=float), (self.n,)))


@dataclass(frozen=True, eq=False)
class Field:
    """State u on the grid nodes; zero outside the interval is implicit."""

    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = _frozen(self.values)
        if values.shape != (self.grid.n,):
            raise DimensionError(
                f"Field has shape {values.shape}, grid expects ({self.grid.n},)"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("Field values must be finite")
        object.__setattr__(self, "values", values)

    def with_values(self, values: Sequence[float]) -> "Field":
        return Field(self.grid, values)

    def __len__(self) -> int:
        return self.grid.n


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Finite, non-empty set of fields on one grid."""

    members: Tuple[Field, ...]
    label: str = ""

    def __post_init__(self) -> None:
        members = tuple(self.members)
        if not members:
            raise DomainError(f"Ensemble '{self.label}' is empty")
        grid = members[0].grid
        for index, member in enumerate(members):
            if member.grid != grid:
                raise DimensionError(
                    f"Ensemble '{self.label}' member {index} lives on a different grid"
                )
        object.__setattr__(self, "members", members)

    @property
    def grid(self) -> SpatialGrid:
        return self.members[0].grid

    def matrix(self) -> np.ndarray:
        """Members stacked row-wise, shape (len, n)."""
        return np.vstack([member.values for member in self.members])

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[Field]:
        return iter(self.members)

    @classmethod
    def from_matrix(cls, grid: SpatialGrid, rows: np.ndarray, label: str = "") -> "Ensemble":
        return cls(tuple(Field(grid, row) for row in np.atleast_2d(rows)), label)


@dataclass(frozen=True)
class KernelFunction:
    """Analytic kernel J(x, y) with an optional x-derivative."""

    name: str
    value: BivariateFunction
    dx: Optional[BivariateFunction] = None

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.value(x, y)


@dataclass(frozen=True, eq=False)
class DiscreteKernel:
    """Quadrature matrix realizing K: matrix[i, j] = J(x_i, x_j) * w_j."""

    grid: SpatialGrid
    name: str
    raw: np.ndarray
    matrix: np.ndarray
    row_mass: np.ndarray
    symmetric: bool
    raw_dx: Optional[np.ndarray] = None

    @property
    def max_row_mass(self) -> float:
        return float(np.max(self.row_mass))

    def raw_derivative(self) -> np.ndarray:
        """dJ/dx at node pairs; finite differences when no analytic form exists."""
        if self.raw_dx is not None:
            return self.raw_dx
        if self.grid.n < 3:
            return np.gradient(self.raw, self.grid.nodes, axis=0)
        return np.gradient(self.raw, self.grid.nodes, axis=0, edge_order=2)


def build_grid(a: float, b: float, n: int, rule: str = "trapezoid") -> SpatialGrid:
    """
    Build a quadrature grid on (a, b).

    Args:
        a: Left endpoint.
        b: Right endpoint, b > a.
        n: Node count, at least 2.
        rule: "trapezoid" (endpoints included) or "midpoint" (cell centers).

    Returns:
        SpatialGrid whose weights sum to b - a.

    Raises:
        ValidationError: On non-finite bounds, b <= a, n < 2 or unknown rule.
    """
    a = validate_finite(a, "grid.a")
    b = validate_finite(b, "grid.b")
    if not b > a:
        raise ValidationError(f"grid requires b > a, got a={a}, b={b}")
    n = validate_count(n, "grid.n", minimum=2)
    rule = validate_choice(rule, QUADRATURE_RULES, "grid.rule")

    if rule == "trapezoid":
        h = (b - a) / (n - 1)
        nodes = a + h * np.arange(n)
        nodes[-1] = b
        weights = np.full(n, h)
        weights[0] = weights[-1] = 0.5 * h
    else:
        h = (b - a) / n
        nodes = a + h * (np.arange(n) + 0.5)
        weights = np.full(n, h)

    total = float(ordered_sum(weights))
    if abs(total - (b - a)) > WEIGHT_SUM_RTOL * (b - a):
        raise ValidationError(f"quadrature weights sum to {total}, expected {b - a}")

    logger.debug(f"Built {rule} grid on ({a}, {b}) with {n} nodes")
    return SpatialGrid(a=a, b=b, n=n, rule=rule, nodes=_frozen(nodes), weights=_frozen(weights))


def uniform_kernel(measure: float, value: Optional[float] = None) -> KernelFunction:
    """Constant kernel; the default value 1/|Omega| gives unit row mass (mean operator)."""
    level = 1.0 / measure if value is None else validate_positive(value, "kernel.value", True)
    return KernelFunction(
        name="uniform",
        value=lambda x, y: np.full(np.broadcast(x, y).shape, level),
        dx=lambda x, y: np.zeros(np.broadcast(x, y).shape),
    )


def gaussian_kernel(sigma: float) -> KernelFunction:
    """c * exp(-(x - y)^2 / sigma^2), with c normalizing the mass over the real line."""
    sigma = validate_positive(sigma, "kernel.sigma")
    scale = 1.0 / (sigma * math.sqrt(math.pi))

    def value(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return scale * np.exp(-((x - y) ** 2) / sigma**2)

    def dx(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return -2.0 * (x - y) / sigma**2 * value(x, y)

    return KernelFunction(name=f"gaussian(sigma={sigma})", value=value, dx=dx)


def tent_kernel(radius: float) -> KernelFunction:
    """max(0, 1 - |x - y| / r) / r, unit mass over the real line."""
    radius = validate_positive(radius, "kernel.radius")

    def value(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.maximum(0.0, 1.0 - np.abs(x - y) / radius) / radius

    def dx(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        inside = np.abs(x - y) < radius
        return np.where(inside, -np.sign(x - y) / radius**2, 0.0)

    return KernelFunction(name=f"tent(radius={radius})", value=value, dx=dx)


def kernel_from_values(
    grid: SpatialGrid,
    raw: np.ndarray,
    name: str = "custom",
    raw_dx: Optional[np.ndarray] = None,
) -> DiscreteKernel:
    """
    Validate raw kernel values J(x_i, x_j) and weight them into a quadrature matrix.

    Raises:
        KernelError: On non-finite or negative values, asymmetry beyond 1e-12,
            or row mass above 1 + 1e-10. The message names the offending indices.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (grid.n, grid.n):
        raise KernelError(f"kernel '{name}' has shape {raw.shape}, expected ({grid.n}, {grid.n})")

    bad = np.argwhere(~np.isfinite(raw))
    if bad.size:
        i, j = (int(k) for k in bad[0])
        raise KernelError(f"kernel '{name}' is not finite at (i={i}, j={j})", (i, j))

    negative = np.argwhere(raw < 0)
    if negative.size:
        i, j = (int(k) for k in negative[0])
        raise KernelError(
            f"kernel '{name}' is negative at (i={i}, j={j}): J={raw[i, j]:.3e}", (i, j)
        )

    asymmetry = np.abs(raw - raw.T)
    if float(np.max(asymmetry)) > SYMMETRY_TOL:
        i, j = (int(k) for k in np.unravel_index(int(np.argmax(asymmetry)), raw.shape))
        raise KernelError(
            f"kernel '{name}' is not symmetric at (i={i}, j={j}): "
            f"|J_ij - J_ji| = {asymmetry[i, j]:.3e}",
            (i, j),
        )

    matrix = raw * grid.weights[np.newaxis, :]
    row_mass = ordered_sum(matrix, axis=1)
    heavy = np.flatnonzero(row_mass > 1.0 + MASS_TOL)
    if heavy.size:
        rows = ", ".join(str(int(i)) for i in heavy[:5])
        raise KernelError(
            f"kernel '{name}' row mass exceeds 1 at rows [{rows}] "
            f"(max {float(np.max(row_mass)):.12f})",
            tuple(int(i) for i in heavy),
        )

    logger.debug(
        f"Assembled kernel '{name}' on {grid.n} nodes; row mass in "
        f"[{float(np.min(row_mass)):.6f}, {float(np.max(row_mass)):.6f}]"
    )
    return DiscreteKernel(
        grid=grid,
        name=name,
        raw=_frozen(raw),
        matrix=_frozen(matrix),
        row_mass=_frozen(row_mass),
        symmetric=True,
        raw_dx=None if raw_dx is None else _frozen(raw_dx),
    )


def assemble_kernel(
    grid: SpatialGrid,
    J: Union[KernelFunction, BivariateFunction],
    name: Optional[str] = None,
) -> DiscreteKernel:
    """
    Assemble the quadrature matrix of K u(x) = integral of J(x, y) u(y) dy over the grid.

    Args:
        grid: Spatial grid.
        J: Symmetric, non-negative, vectorized kernel function.
        name: Label for logs and errors.

    Returns:
        DiscreteKernel with symmetry and row-mass certificates.

    Raises:
        KernelError: See kernel_from_values.
    """
    x, y = np.meshgrid(grid.nodes, grid.nodes, indexing="ij")
    raw = np.broadcast_to(np.asarray(J(x, y), dtype=float), x.shape).copy()
    raw_dx = None
    if isinstance(J, KernelFunction):
        name = name or J.name
        if J.dx is not None:
            raw_dx = np.broadcast_to(np.asarray(J.dx(x, y), dtype=float), x.shape).copy()
    return kernel_from_values(grid, raw, name or "custom", raw_dx)


def load_kernel_table(path: Union[str, Path], grid: SpatialGrid, name: Optional[str] = None) -> DiscreteKernel:
    """
    Load a custom kernel table from CSV.

    The header row holds the node coordinates; the n rows below hold J(x_i, x_j).

    Raises:
        ValidationError: If the file is missing or its header does not match the grid.
        KernelError: If the values fail kernel validation.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"kernel table not found: {path}")
    table = pd.read_csv(path)
    try:
        header = np.array([float(column) for column in table.columns])
    except ValueError as e:
        raise ValidationError(f"kernel table header must hold node coordinates: {e}") from e
    if header.shape != (grid.n,) or np.max(np.abs(header - grid.nodes)) > 1e-12:
        raise ValidationError(
            f"kernel table {path.name} header does not match the {grid.n} grid nodes"
        )
    logger.info(f"Loaded kernel table {path} ({grid.n}x{grid.n})")
    return kernel_from_values(grid, table.to_numpy(dtype=float), name or f"table({path.name})")


def _check_same_grid(kernel: DiscreteKernel, u: Field) -> None:
    if kernel.grid != u.grid:
        raise DimensionError(
            f"field grid {u.grid.key} does not match kernel grid {kernel.grid.key}"
        )


def apply_K_values(kernel: DiscreteKernel, values: np.ndarray) -> np.ndarray:
    """K applied to raw node values (no Field wrapping, used in inner loops)."""
    return ordered_sum(kernel.matrix * np.asarray(values)[np.newaxis, :], axis=1)


def apply_K(kernel: DiscreteKernel, u: Field) -> Field:
    """
    Apply the discretized integral operator.

    Raises:
        DimensionError: If u is not on the kernel's grid.
    """
    _check_same_grid(kernel, u)
    return Field(u.grid, apply_K_values(kernel, u.values))


def lp_norm(u: Field, p: Exponent = 2) -> float:
    """
    Quadrature L^p norm of a field; max norm for p = inf.

    Raises:
        ValidationError: If p < 1.
    """
    p = validate_exponent(p)
    return _lp_norm_values(u.values, u.grid.weights, p)


def _lp_norm_values(values: np.ndarray, weights: np.ndarray, p: float) -> float:
    magnitude = np.abs(values)
    if math.isinf(p):
        return float(np.max(magnitude)) if magnitude.size else 0.0
    return float(ordered_sum(weights * magnitude**p)) ** (1.0 / p)


def lp_distance(u: Field, v: Field, p: Exponent = 2) -> float:
    """L^p distance between two fields on the same grid."""
    if u.grid != v.grid:
        raise DimensionError("fields live on different grids")
    return _lp_norm_values(u.values - v.values, u.grid.weights, validate_exponent(p))


def conjugate_exponent(p: Exponent) -> float:
    """Hölder conjugate q with 1/p + 1/q = 1."""
    p = validate_exponent(p)
    if p == 1.0:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def kernel_lq_norm(kernel: DiscreteKernel, q: Exponent, derivative: bool = False) -> float:
    """
    sup over nodes x_i of the L^q norm of J(x_i, .) (or dJ/dx(x_i, .)) by quadrature.

    Args:
        kernel: Assembled kernel.
        q: Exponent in [1, inf].
        derivative: Use dJ/dx instead of J.
    """
    q = validate_exponent(q, "q")
    values = np.abs(kernel.raw_derivative() if derivative else kernel.raw)
    if math.isinf(q):
        return float(np.max(values))
    rows = ordered_sum(values**q * kernel.grid.weights[np.newaxis, :], axis=1) ** (1.0 / q)
    return float(np.max(rows))


def hausdorff_semidist(A: Ensemble, B: Ensemble, p: Exponent = 2) -> float:
    """
    Hausdorff semi-distance dist(A, B) = max over a in A of min over b in B of |a - b|_p.

    Asymmetric: dist(A, B) = 0 whenever every member of A appears in B.

    Raises:
        DomainError: If an ensemble is empty.
        DimensionError: If the ensembles live on different grids.
    """
    if not isinstance(A, Ensemble):
        A = Ensemble(tuple(A))
    if not isinstance(B, Ensemble):
        B = Ensemble(tuple(B))
    if A.grid != B.grid:
        raise DimensionError("ensembles live on different grids")
    p = validate_exponent(p)
    if math.isinf(p):
        distances = cdist(A.matrix(), B.matrix(), metric="chebyshev")
    else:
        distances = cdist(A.matrix(), B.matrix(), metric="minkowski", p=p, w=A.grid.weights)
    return float(np.max(np.min(distances, axis=1)))


def constant_fields(grid: SpatialGrid, levels: Sequence[float]) -> Tuple[Field, ...]:
    return tuple(grid.constant(level) for level in levels)


def smooth_random_fields(
    grid: SpatialGrid, count: int, radius: float, rng: np.random.Generator
) -> Tuple[Field, ...]:
    """
    Random smooth fields with sup norm at most radius.

    Each field is an offset in [-radius/2, radius/2] plus three sine modes with
    amplitudes up to radius/6.
    """
    phase = (grid.nodes - grid.a) / grid.measure
    fields = []
    for _ in range(count):
        offset = rng.uniform(-0.5, 0.5) * radius
        amplitudes = rng.uniform(-1.0, 1.0, size=3) * radius / 6.0
        values = offset + sum(
            amplitude * np.sin((k + 1) * math.pi * phase) for k, amplitude in enumerate(amplitudes)
        )
        fields.append(grid.field(values))
    return tuple(fields)


def default_seed(
    grid: SpatialGrid,
    radius: float,
    rng_seed: int = 42,
    constants: int = 7,
    random_fields: int = 8,
) -> Ensemble:
    """
    Default seed ensemble: constants spanning [-radius, radius] plus smooth random fields.

    With an odd number of constants the zero field is included.
    """
    rng = np.random.default_rng(rng_seed)
    levels = np.linspace(-radius, radius, constants) if constants > 1 else np.zeros(1)
    if constants % 2:
        levels[constants // 2] = 0.0
    members = constant_fields(grid, levels) + smooth_random_fields(grid, random_fields, radius, rng)
    return Ensemble(members, label=f"seed(radius={radius:g})")

"""
Energy functional for the autonomous limit problem du/dt = -u + g0(Ku).

    L(u) = integral of f(u) - f_min + 1/4 double integral of J(x, y)(u(x) - u(y))^2

with f(s) = -s^2/2 - i(s) and i(s) = -integral from 0 to s of g0^{-1}. The
functional is defined on Y = {|u| < a}. Along autonomous flows dL/dt = -I(u),
and I vanishes exactly at equilibria.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from src.dynamics.evolution import Trajectory
from src.dynamics.exceptions import DimensionError, DomainError, RangeError, SpecError
from src.dynamics.nonlinearity import AutonomousNonlinearity, TimeNonlinearity
from src.dynamics.spatial import (
    DiscreteKernel,
    Ensemble,
    Exponent,
    Field,
    apply_K_values,
    lp_distance,
    ordered_sum,
)
from utils.validators import ValidationError, validate_count, validate_exponent, validate_positive

logger = logging.getLogger(__name__)

MIN_RESOLUTION = 1000
EDGE_FRACTION = 1e-6
EQUILIBRIUM_RESIDUAL = 1e-8
DEDUP_DISTANCE = 1e-4
LEVEL_TOL = 1e-6
PICARD_DAMPING = 0.5
PICARD_SWITCH = 1e-6


@dataclass(frozen=True, eq=False)
class EnergySpec:
    """Tabulated potential f(s) = -s^2/2 - i(s) on (-a, a) and its minimum."""

    g0: AutonomousNonlinearity
    eps: float
    nodes: np.ndarray
    i_table: np.ndarray
    spline: CubicSpline
    u_bar: float
    f_min: float
    exterior_coupling: bool = False

    @property
    def a(self) -> float:
        return self.g0.a

    def i(self, s: np.ndarray) -> np.ndarray:
        """
        i(s) = -integral from 0 to s of g0^{-1}(theta) dtheta.

        Raises:
            DomainError: If any |s| >= a.
        """
        s = np.asarray(s, dtype=float)
        if np.any(np.abs(s) >= self.a):
            raise DomainError(f"i(s) is defined on |s| < {self.a}")
        values = np.asarray(self.spline(s), dtype=float)
        return np.where(s == 0.0, 0.0, values)

    def f(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return -0.5 * s**2 - self.i(s)


@dataclass(frozen=True)
class EnergyDecomposition:
    l1: float
    l2: float
    total: float


@dataclass(frozen=True, eq=False)
class EquilibriumSet:
    """Distinct equilibria of u = g0(Ku) with their energies and energy levels."""

    members: Tuple[Field, ...]
    energies: Tuple[float, ...]
    levels: Tuple[float, ...]
    level_of: Tuple[int, ...]
    residuals: Tuple[float, ...] = ()

    def __len__(self) -> int:
        return len(self.members)

    def level_members(self, level: int) -> List[int]:
        return [index for index, owner in enumerate(self.level_of) if owner == level]


@dataclass(frozen=True)
class EnergyReport:
    times: np.ndarray
    l1: np.ndarray
    l2: np.ndarray
    total: np.ndarray
    dissipation: np.ndarray
    remainder: np.ndarray
    coupling: np.ndarray
    fd_derivative: np.ndarray
    max_fd_mismatch: float
    violations: List[Dict[str, float]] = field(default_factory=list)
    monotone_violations: List[Dict[str, float]] = field(default_factory=list)
    autonomous: bool = False

    @property
    def ok(self) -> bool:
        return not self.violations and not self.monotone_violations


@dataclass(frozen=True)
class Verdict:
    status: str
    level_index: Optional[int]
    member_index: Optional[int]
    final_dist: float
    tail_dist: float
    single_equilibrium: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status,
            "level_index": self.level_index,
            "member_index": self.member_index,
            "final_dist": self.final_dist,
            "tail_dist": self.tail_dist,
            "single_equilibrium": self.single_equilibrium,
        }


def _half_table(g0: AutonomousNonlinearity, edge: float, count: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes 0 -> edge and i at those nodes, integrating from 0 so i(0) = 0 exactly."""
    nodes = np.linspace(0.0, edge, count)
    inverse = g0.inverse(nodes)
    return nodes, -cumulative_trapezoid(inverse, nodes, initial=0.0)


def build_energy_spec(
    g0: AutonomousNonlinearity,
    resolution: int = 4096,
    exterior_coupling: bool = False,
) -> EnergySpec:
    """
    Tabulate i and f on [-a + eps, a - eps], eps = a * 1e-6, and locate u_bar.

    Args:
        g0: Strictly increasing limit with bound a.
        resolution: Table nodes over the whole interval, at least 1000.
        exterior_coupling: Add the interaction with the exterior (where u = 0) to L2.

    Returns:
        EnergySpec with a cubic interpolant of i; ties between symmetric minimizers
        resolve to the nonnegative one.

    Raises:
        ValidationError: If resolution < 1000.
        SpecError: If g0 is not increasing, the table is not finite, or f has no
            interior minimizer (f unbounded below toward +-a).
    """
    resolution = validate_count(resolution, "resolution", minimum=MIN_RESOLUTION)
    if not g0.strictly_increasing:
        raise SpecError(f"energy needs a strictly increasing g0, '{g0.name}' is not")

    eps = g0.a * EDGE_FRACTION
    edge = g0.a - eps
    count = resolution // 2 + 1
    try:
        right_nodes, right_values = _half_table(g0, edge, count)
        left_nodes, left_values = _half_table(g0, -edge, count)
    except RangeError as e:
        raise SpecError(f"inverse of '{g0.name}' is not available up to the edge: {e}") from e

    nodes = np.concatenate([left_nodes[::-1], right_nodes[1:]])
    i_table = np.concatenate([left_values[::-1], right_values[1:]])
    if not np.all(np.isfinite(i_table)):
        raise SpecError(f"i(s) for '{g0.name}' is not finite on the table; use a larger margin")
    spline = CubicSpline(nodes, i_table)

    f_table = -0.5 * nodes**2 - i_table
    f_low = float(np.min(f_table))
    ties = np.flatnonzero(f_table <= f_low + 1e-12 * max(1.0, abs(f_low)))
    nonnegative = ties[nodes[ties] >= 0.0]
    best = int(nonnegative[0]) if nonnegative.size else int(ties[0])
    if best == 0 or best == len(nodes) - 1:
        raise SpecError(
            f"f has no interior minimum for '{g0.name}' (minimizer at the edge s={nodes[best]:.6g}); "
            "f is unbounded below near +-a"
        )

    def potential(s: float) -> float:
        return float(-0.5 * s * s - spline(s))

    refined = minimize_scalar(
        potential,
        bounds=(float(nodes[best - 1]), float(nodes[best + 1])),
        method="bounded",
        options={"xatol": 1e-12},
    )
    u_bar, f_min = float(nodes[best]), float(f_table[best])
    if refined.success and refined.fun < f_min:
        u_bar, f_min = float(refined.x), float(refined.fun)
    if u_bar == 0.0:
        f_min = 0.0

    logger.info(f"Energy spec for '{g0.name}': u_bar={u_bar:.8f}, f_min={f_min:.8f}")
    return EnergySpec(
        g0=g0,
        eps=eps,
        nodes=nodes,
        i_table=i_table,
        spline=spline,
        u_bar=u_bar,
        f_min=f_min,
        exterior_coupling=exterior_coupling,
    )


def _check_inside(u: Field, spec: EnergySpec, kernel: DiscreteKernel) -> None:
    if kernel.grid != u.grid:
        raise DimensionError("field and kernel live on different grids")
    peak = float(np.max(np.abs(u.values)))
    if peak >= spec.a:
        raise DomainError(f"|u|_inf = {peak} is outside Y = {{|u| < {spec.a}}}")


def lyapunov_value(u: Field, spec: EnergySpec, kernel: DiscreteKernel) -> EnergyDecomposition:
    """
    L(u) = L1 + L2 by quadrature.

    L1 = sum_i w_i (f(u_i) - f_min)
    L2 = 1/4 sum_{i,j} w_i w_j J(x_i, x_j)(u_i - u_j)^2
    plus 1/2 sum_i w_i u_i^2 (1 - m(x_i)) when exterior coupling is on.

    Raises:
        DomainError: If |u|_inf >= a.
    """
    _check_inside(u, spec, kernel)
    weights = u.grid.weights
    values = u.values
    l1 = float(ordered_sum(weights * (spec.f(values) - spec.f_min)))
    squares = (values[:, np.newaxis] - values[np.newaxis, :]) ** 2
    inner = ordered_sum(kernel.matrix * squares, axis=1)
    l2 = 0.25 * float(ordered_sum(weights * inner))
    if spec.exterior_coupling:
        l2 += 0.5 * float(ordered_sum(weights * values**2 * (1.0 - kernel.row_mass)))
    return EnergyDecomposition(l1=l1, l2=l2, total=l1 + l2)


def dissipation_I(u: Field, spec: EnergySpec, kernel: DiscreteKernel) -> float:
    """
    I(u) = integral of [Ku - g0^{-1}(u)][-u + g0(Ku)].

    Raises:
        RangeError: If some |u_i| >= a.
    """
    if kernel.grid != u.grid:
        raise DimensionError("field and kernel live on different grids")
    ku = apply_K_values(kernel, u.values)
    integrand = (ku - spec.g0.inverse(u.values)) * (-u.values + spec.g0(ku))
    return float(ordered_sum(u.grid.weights * integrand))


def remainder_R(
    t: float, u: Field, g: TimeNonlinearity, spec: EnergySpec, kernel: DiscreteKernel
) -> float:
    """
    R(t, u) = integral of [g^{-1}(t, u) - g0^{-1}(u)][-u + g0(Ku)].

    Raises:
        CapabilityError: If g has no inverse.
        RangeError: If u leaves the range of either inverse.
    """
    if kernel.grid != u.grid:
        raise DimensionError("field and kernel live on different grids")
    inverse_t = g.inverse(t, u.values)
    ku = apply_K_values(kernel, u.values)
    integrand = (inverse_t - spec.g0.inverse(u.values)) * (-u.values + spec.g0(ku))
    return float(ordered_sum(u.grid.weights * integrand))


def _coupling_Q(
    t: float, u: Field, g: TimeNonlinearity, spec: EnergySpec, kernel: DiscreteKernel
) -> float:
    """Q(t, u) = integral of [Ku - g0^{-1}(u)][g(t, Ku) - g0(Ku)]; zero when g = g0."""
    ku = apply_K_values(kernel, u.values)
    integrand = (ku - spec.g0.inverse(u.values)) * (g(t, ku) - spec.g0(ku))
    return float(ordered_sum(u.grid.weights * integrand))


def energy_decay_check(
    trajectory: Trajectory,
    g: TimeNonlinearity,
    spec: EnergySpec,
    kernel: DiscreteKernel,
    rtol: float = 1e-3,
) -> EnergyReport:
    """
    Compare the finite-difference derivative of L along a trajectory with -I + R.

    The tolerance per sample is max(rtol * scale, 10 dt^2), scale being the
    largest |-I + R| along the trajectory. For time-dependent g the exact
    derivative differs from -I + R by -(R + Q), so |R| + |Q| is added to the
    tolerance. In the autonomous case L must also be non-increasing within
    10 dt^2. Report only.

    Raises:
        DomainError: If the trajectory leaves Y or has fewer than 3 samples.
        CapabilityError: If g has no inverse.
    """
    if len(trajectory) < 3:
        raise DomainError(f"energy check needs at least 3 samples, got {len(trajectory)}")
    times = trajectory.times
    decompositions = [lyapunov_value(state, spec, kernel) for state in trajectory.states]
    l1 = np.array([d.l1 for d in decompositions])
    l2 = np.array([d.l2 for d in decompositions])
    total = np.array([d.total for d in decompositions])
    dissipation = np.array([dissipation_I(state, spec, kernel) for state in trajectory.states])
    limit_flow = g.autonomous and g.limit is not None
    if limit_flow and g.limit is spec.g0:
        remainder = np.zeros_like(dissipation)
        coupling = np.zeros_like(dissipation)
    else:
        remainder = np.array(
            [remainder_R(float(t), state, g, spec, kernel) for t, state in zip(times, trajectory.states)]
        )
        coupling = np.array(
            [_coupling_Q(float(t), state, g, spec, kernel) for t, state in zip(times, trajectory.states)]
        )

    fd = np.gradient(total, times, edge_order=2)
    predicted = -dissipation + remainder
    dt = float(np.median(np.diff(times)))
    scale = float(np.max(np.abs(predicted)))
    base_tol = max(rtol * scale, 10.0 * dt**2)
    mismatch = np.abs(fd - predicted)
    allowed = base_tol + np.abs(remainder) + np.abs(coupling)

    violations = [
        {"t": float(times[k]), "mismatch": float(mismatch[k]), "allowed": float(allowed[k])}
        for k in np.flatnonzero(mismatch > allowed)
    ]
    monotone_violations: List[Dict[str, float]] = []
    if limit_flow:
        increases = np.diff(total)
        monotone_violations = [
            {"t": float(times[k + 1]), "increase": float(increases[k])}
            for k in np.flatnonzero(increases > 10.0 * dt**2)
        ]
    if violations or monotone_violations:
        logger.warning(
            f"Energy check: {len(violations)} derivative mismatch(es), "
            f"{len(monotone_violations)} increase(s)"
        )
    return EnergyReport(
        times=times,
        l1=l1,
        l2=l2,
        total=total,
        dissipation=dissipation,
        remainder=remainder,
        coupling=coupling,
        fd_derivative=fd,
        max_fd_mismatch=float(np.max(mismatch)),
        violations=violations,
        monotone_violations=monotone_violations,
        autonomous=limit_flow,
    )


def equilibrium_residual(values: np.ndarray, g0: AutonomousNonlinearity, kernel: DiscreteKernel) -> float:
    return float(np.max(np.abs(values - g0(apply_K_values(kernel, values)))))


def _solve_from_seed(
    seed: Field,
    g0: AutonomousNonlinearity,
    kernel: DiscreteKernel,
    tol: float,
    max_iter: int,
) -> Optional[np.ndarray]:
    values = seed.values.copy()
    residual = equilibrium_residual(values, g0, kernel)
    for _ in range(max_iter):
        if residual <= max(tol, PICARD_SWITCH):
            break
        values = (1.0 - PICARD_DAMPING) * values + PICARD_DAMPING * g0(apply_K_values(kernel, values))
        residual = equilibrium_residual(values, g0, kernel)

    # Newton on u - g0(Ku) = 0
    identity = np.eye(len(values))
    for _ in range(50):
        if residual <= tol:
            break
        ku = apply_K_values(kernel, values)
        jacobian = identity - g0.slope(ku)[:, np.newaxis] * kernel.matrix
        try:
            delta = np.linalg.solve(jacobian, values - g0(ku))
        except np.linalg.LinAlgError:
            return None
        values = values - delta
        residual = equilibrium_residual(values, g0, kernel)

    if residual > max(tol, EQUILIBRIUM_RESIDUAL) or not np.all(np.abs(values) < g0.a):
        return None
    return values


def find_equilibria(
    spec: EnergySpec,
    kernel: DiscreteKernel,
    seeds: Ensemble,
    tol: float = 1e-10,
    max_iter: int = 10000,
    max_workers: int = 1,
) -> EquilibriumSet:
    """
    Solve u = g0(Ku) from every seed and collect the distinct solutions.

    Damped Picard u <- (1 - w) u + w g0(Ku) with w = 0.5 brings each seed close,
    Newton on the discrete system polishes to tol. Solutions closer than 1e-4
    in sup norm are merged (first seed wins). Energies are clustered into
    levels separated by more than 1e-6.

    Seeds that do not converge are skipped with a warning.
    """
    validate_positive(tol, "tol")
    g0 = spec.g0

    def solve(indexed: Tuple[int, Field]) -> Tuple[int, Optional[np.ndarray]]:
        index, seed = indexed
        return index, _solve_from_seed(seed, g0, kernel, tol, max_iter)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        outcomes = list(pool.map(solve, enumerate(seeds)))

    kept: List[np.ndarray] = []
    for index, values in outcomes:
        if values is None:
            logger.warning(f"Equilibrium search from seed {index} did not converge; skipped")
            continue
        if all(float(np.max(np.abs(values - other))) >= DEDUP_DISTANCE for other in kept):
            kept.append(values)

    members = tuple(Field(seeds.grid, values) for values in kept)
    energies = tuple(lyapunov_value(member, spec, kernel).total for member in members)
    residuals = tuple(equilibrium_residual(member.values, g0, kernel) for member in members)

    levels: List[float] = []
    for energy in sorted(energies):
        if not levels or energy - levels[-1] > LEVEL_TOL:
            levels.append(energy)
    level_of = tuple(
        max(k for k, level in enumerate(levels) if level <= energy + 1e-15) for energy in energies
    )
    logger.info(f"Found {len(members)} equilibria on {len(levels)} energy level(s)")
    return EquilibriumSet(
        members=members,
        energies=energies,
        levels=tuple(levels),
        level_of=level_of,
        residuals=residuals,
    )


def convergence_verdict(
    trajectory: Trajectory,
    eq_set: EquilibriumSet,
    p: Exponent = 2,
    tol: float = 1e-3,
    tail_fraction: float = 0.1,
) -> Verdict:
    """
    Decide which energy level (and equilibrium) the trajectory tail approaches.

    status is "converged" when exactly one level has tail distance below tol,
    "unresolved" when several do, "not_converged" when none does.
    """
    p = validate_exponent(p)
    if not 0 < tail_fraction <= 1:
        raise ValidationError(f"tail_fraction must be in (0, 1], got {tail_fraction}")
    if not len(eq_set):
        return Verdict("not_converged", None, None, math.inf, math.inf, False)

    tail_length = max(1, int(math.ceil(tail_fraction * len(trajectory))))
    tail = trajectory.states[-tail_length:]
    final = trajectory.final
    final_dist = [lp_distance(final, member, p) for member in eq_set.members]
    tail_dist = [max(lp_distance(state, member, p) for state in tail) for member in eq_set.members]

    nearest = int(np.argmin(final_dist))
    level_dist = [
        min(tail_dist[index] for index in eq_set.level_members(level))
        for level in range(len(eq_set.levels))
    ]
    candidates = [level for level, distance in enumerate(level_dist) if distance < tol]
    if len(candidates) == 1:
        status, level_index = "converged", candidates[0]
    elif candidates:
        status, level_index = "unresolved", None
    else:
        status, level_index = "not_converged", None

    single = status == "converged" and tail_dist[nearest] < tol
    return Verdict(
        status=status,
        level_index=level_index,
        member_index=nearest if single else None,
        final_dist=float(final_dist[nearest]),
        tail_dist=float(tail_dist[nearest]),
        single_equilibrium=single,
    )

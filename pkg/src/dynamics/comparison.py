"""
Comparison principle checks: sub/super-solution residuals, ordering of the
solutions of f <= g <= h problems, monotone Picard iteration and invariant
intervals between ordered equilibria.

Inequalities that hold almost everywhere in the continuous setting are checked
nodewise on the quadrature grid.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.dynamics.exceptions import (
    CertificationError,
    DomainError,
    InvariantEscape,
    MonotonicityViolation,
    OrderingViolation,
    PreconditionError,
)
from src.dynamics.evolution import (
    ProcessConfig,
    Trajectory,
    apply_G,
    contraction_windows,
    integrate,
    picard_nodes,
)
from src.dynamics.nonlinearity import TimeNonlinearity, check_monotone
from src.dynamics.spatial import DiscreteKernel, Ensemble, Field, apply_K_values
from utils.validators import validate_count

logger = logging.getLogger(__name__)

MONOTONE_TOL = 1e-10
EQUILIBRIUM_TOL = 1e-8


def ordering_tolerance(dt: float) -> float:
    return 1e-8 + 10.0 * dt**2


def _first_negative(gaps: np.ndarray, tol: float) -> Optional[Tuple[int, int]]:
    bad = np.argwhere(gaps < -tol)
    if not bad.size:
        return None
    return int(bad[0][0]), int(bad[0][1])


@dataclass(frozen=True)
class OrderedTriple:
    """Nonlinearities f <= g <= h with ordered initial data v_tau <= u_tau <= V_tau."""

    f: TimeNonlinearity
    g: TimeNonlinearity
    h: TimeNonlinearity
    v_tau: Field
    u_tau: Field
    V_tau: Field

    def validate(self, t_range: Tuple[float, float], samples: int = 200) -> None:
        """
        Certify the triple on the sampling box of g.

        Raises:
            PreconditionError: If f or h is not increasing, f <= g <= h fails
                at a sample, or the initial data are not ordered nodewise.
        """
        for label, nonlinearity in (("f", self.f), ("h", self.h)):
            if not nonlinearity.monotone_in_x:
                raise PreconditionError(f"comparison needs increasing {label}, '{nonlinearity.name}' is not")
            try:
                check_monotone(nonlinearity, t_range, self.g.default_x_range(), samples)
            except CertificationError as e:
                raise PreconditionError(f"{label} = '{nonlinearity.name}': {e}") from e

        lo, hi = self.g.default_x_range()
        xs = np.linspace(lo, hi, samples)
        ts = np.linspace(t_range[0], t_range[1], samples) if t_range[1] > t_range[0] else [t_range[0]]
        for t in ts:
            f_values, g_values, h_values = (q(float(t), xs) for q in (self.f, self.g, self.h))
            for lower, upper, label in ((f_values, g_values, "f <= g"), (g_values, h_values, "g <= h")):
                excess = lower - upper
                index = int(np.argmax(excess))
                if excess[index] > 1e-12:
                    raise PreconditionError(f"{label} fails at t={t:.6g}, x={xs[index]:.6g}")

        for lower, upper, label in (
            (self.v_tau, self.u_tau, "v_tau <= u_tau"),
            (self.u_tau, self.V_tau, "u_tau <= V_tau"),
        ):
            if lower.grid != upper.grid:
                raise PreconditionError(f"{label}: initial data live on different grids")
            bad = np.flatnonzero(lower.values > upper.values)
            if bad.size:
                raise PreconditionError(f"{label} fails at node {int(bad[0])}")


@dataclass(frozen=True)
class ComparisonReport:
    ordered: bool
    min_gap_lower: float
    min_gap_upper: float
    first_violation: Optional[Dict[str, Any]]
    tol: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ordered": self.ordered,
            "min_gap_lower": self.min_gap_lower,
            "min_gap_upper": self.min_gap_upper,
            "first_violation": self.first_violation,
            "tol": self.tol,
        }


@dataclass(frozen=True)
class InvariantReport:
    ok: bool
    min_gap_lower: float
    min_gap_upper: float
    escape: Optional[Dict[str, Any]]
    members: int


def _time_derivative(trajectory: Trajectory) -> np.ndarray:
    if len(trajectory) < 3:
        raise DomainError(f"residual needs at least 3 samples, got {len(trajectory)}")
    return np.gradient(trajectory.matrix(), trajectory.times, axis=0, edge_order=2)


def _forcing(trajectory: Trajectory, kernel: DiscreteKernel, q: TimeNonlinearity) -> np.ndarray:
    return np.vstack(
        [q(float(t), apply_K_values(kernel, state.values)) for t, state in zip(trajectory.times, trajectory.states)]
    )


def subsolution_residual(v: Trajectory, kernel: DiscreteKernel, f: TimeNonlinearity) -> np.ndarray:
    """
    Per-sample max over nodes of dv/dt + v - f(t, Kv); v is a subsolution iff all <= tol.

    dv/dt uses second-order centered differences, one-sided at the ends.

    Raises:
        DomainError: If v has fewer than 3 samples.
    """
    derivative = _time_derivative(v)
    return np.max(derivative + v.matrix() - _forcing(v, kernel, f), axis=1)


def supersolution_residual(V: Trajectory, kernel: DiscreteKernel, h: TimeNonlinearity) -> np.ndarray:
    """Per-sample max over nodes of -V + h(t, KV) - dV/dt; V is a supersolution iff all <= tol."""
    derivative = _time_derivative(V)
    return np.max(-V.matrix() + _forcing(V, kernel, h) - derivative, axis=1)


def verify_comparison(
    triple: OrderedTriple,
    tau: float,
    t: float,
    cfg: ProcessConfig,
    kernel: DiscreteKernel,
    max_workers: int = 1,
) -> ComparisonReport:
    """
    Integrate the f-, g- and h-problems and check v <= u <= V at every output time.

    Raises:
        PreconditionError: If the triple fails validation.
        OrderingViolation: If a gap drops below -(1e-8 + 10 dt^2); the report is attached.
    """
    triple.validate((tau, t))
    jobs = ((triple.v_tau, triple.f), (triple.u_tau, triple.g), (triple.V_tau, triple.h))
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        lower, middle, upper = pool.map(lambda job: integrate(job[0], tau, t, cfg, kernel, job[1]), jobs)

    tol = ordering_tolerance(cfg.dt)
    gaps_lower = middle.matrix() - lower.matrix()
    gaps_upper = upper.matrix() - middle.matrix()
    first = None
    for label, gaps in (("v <= u", gaps_lower), ("u <= V", gaps_upper)):
        hit = _first_negative(gaps, tol)
        if hit is not None and (first is None or hit[0] < first["sample"]):
            sample, node = hit
            first = {
                "relation": label,
                "sample": sample,
                "t": float(middle.times[sample]),
                "node": node,
                "gap": float(gaps[sample, node]),
            }

    report = ComparisonReport(
        ordered=first is None,
        min_gap_lower=float(np.min(gaps_lower)),
        min_gap_upper=float(np.min(gaps_upper)),
        first_violation=first,
        tol=tol,
    )
    if first is not None:
        raise OrderingViolation(
            f"{first['relation']} violated at t={first['t']:.6g}, node {first['node']} "
            f"(gap {first['gap']:.3e})",
            report,
        )
    logger.info(
        f"Ordering preserved on [{tau}, {t}]: min gaps {report.min_gap_lower:.3e}, "
        f"{report.min_gap_upper:.3e}"
    )
    return report


def monotone_picard(
    u_tau: Field,
    tau: float,
    T: float,
    kernel: DiscreteKernel,
    f: TimeNonlinearity,
    iterates: int,
    start: Optional[Field] = None,
) -> List[Field]:
    """
    Iterate the mild-solution operator G on [tau, T] from a constant-in-time start.

    Args:
        u_tau: Initial data entering G.
        tau: Initial time.
        T: Final time.
        kernel: Discretized K.
        f: Increasing nonlinearity.
        iterates: Number of applications of G.
        start: Starting function, constant in time; defaults to u_tau. A
            subsolution gives non-decreasing iterates, a supersolution
            non-increasing ones.

    Returns:
        (G^n start)(T) for n = 1..iterates.

    Raises:
        PreconditionError: If f is not increasing.
        MonotonicityViolation: If the iterates change direction beyond 1e-10.
    """
    iterates = validate_count(iterates, "iterates")
    if not f.monotone_in_x:
        raise PreconditionError(f"monotone Picard needs increasing f, '{f.name}' is not")
    start = u_tau if start is None else start
    windows, _ = contraction_windows(u_tau, tau, T, kernel, f)
    times = picard_nodes(tau, T, windows)
    phi = np.tile(start.values, (len(times), 1))

    direction = 0
    results: List[Field] = []
    for n in range(1, iterates + 1):
        updated = apply_G(u_tau.values, times, phi, kernel, f)
        change = updated - phi
        rising = bool(np.all(change >= -MONOTONE_TOL))
        falling = bool(np.all(change <= MONOTONE_TOL))
        if direction == 0:
            direction = 0 if rising and falling else 1 if rising else -1 if falling else 2
        if direction == 2 or (direction == 1 and not rising) or (direction == -1 and not falling):
            index = np.unravel_index(int(np.argmax(np.abs(change))), change.shape)
            raise MonotonicityViolation(
                f"Picard iterate {n} changes direction at t={times[index[0]]:.6g}, node {index[1]}",
                {"iterate": n, "t": float(times[index[0]]), "node": int(index[1])},
            )
        phi = updated
        results.append(Field(u_tau.grid, phi[-1]))
    logger.debug(f"Monotone Picard: {iterates} iterates over {windows} window(s), direction {direction}")
    return results


def _equilibrium_residual(tau: float, u: Field, kernel: DiscreteKernel, q: TimeNonlinearity) -> np.ndarray:
    return -u.values + q(tau, apply_K_values(kernel, u.values))


def invariant_interval_check(
    v_eq: Field,
    V_eq: Field,
    samples: Ensemble,
    horizon: float,
    cfg: ProcessConfig,
    kernel: DiscreteKernel,
    g: TimeNonlinearity,
    f: Optional[TimeNonlinearity] = None,
    h: Optional[TimeNonlinearity] = None,
    tau: float = 0.0,
    max_workers: int = 1,
) -> InvariantReport:
    """
    Check that [v_eq, V_eq] is positively invariant for the g-problem.

    v_eq must satisfy -v + f(tau, Kv) >= -1e-8 and V_eq must satisfy
    -V + h(tau, KV) <= 1e-8 (equilibria of the f- and h-problems qualify);
    f and h default to g.

    Raises:
        PreconditionError: If v_eq > V_eq somewhere, the equilibrium residuals
            fail, or a sample starts outside the interval.
        InvariantEscape: If an evolved sample leaves the interval by more than
            1e-8 + 10 dt^2; the report is attached.
    """
    f = f or g
    h = h or g
    if np.any(v_eq.values > V_eq.values):
        raise PreconditionError("invariant interval needs v_eq <= V_eq nodewise")
    if np.min(_equilibrium_residual(tau, v_eq, kernel, f)) < -EQUILIBRIUM_TOL:
        raise PreconditionError("v_eq is not a sub-equilibrium of the lower problem")
    if np.max(_equilibrium_residual(tau, V_eq, kernel, h)) > EQUILIBRIUM_TOL:
        raise PreconditionError("V_eq is not a super-equilibrium of the upper problem")
    for index, member in enumerate(samples):
        if np.any(member.values < v_eq.values) or np.any(member.values > V_eq.values):
            raise PreconditionError(f"sample {index} starts outside [v_eq, V_eq]")

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        trajectories = list(
            pool.map(lambda member: integrate(member, tau, tau + horizon, cfg, kernel, g), samples)
        )

    tol = ordering_tolerance(cfg.dt)
    min_lower = np.inf
    min_upper = np.inf
    escape = None
    for index, trajectory in enumerate(trajectories):
        states = trajectory.matrix()
        lower = states - v_eq.values
        upper = V_eq.values - states
        min_lower = min(min_lower, float(np.min(lower)))
        min_upper = min(min_upper, float(np.min(upper)))
        if escape is None:
            for gaps in (lower, upper):
                hit = _first_negative(gaps, tol)
                if hit is not None:
                    escape = {"member": index, "t": float(trajectory.times[hit[0]]), "node": hit[1]}
                    break

    report = InvariantReport(
        ok=escape is None,
        min_gap_lower=min_lower,
        min_gap_upper=min_upper,
        escape=escape,
        members=len(samples),
    )
    if escape is not None:
        raise InvariantEscape(
            f"sample {escape['member']} leaves the interval at t={escape['t']:.6g}, node {escape['node']}",
            report,
        )
    return report

"""
Evolution process S(t, tau) for du/dt = -u + g(t, Ku).

Time stepping uses exponential integrators built on the variation of constants
formula, so the linear part -u is integrated exactly. picard_solve iterates the
mild-solution operator G on a time-space grid instead of stepping.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterator, List, Tuple

import numpy as np

from src.dynamics.exceptions import BlowUpError, ConvergenceError, DimensionError, IterationError
from src.dynamics.nonlinearity import TimeNonlinearity, lipschitz_estimate
from src.dynamics.spatial import DiscreteKernel, Field, SpatialGrid, apply_K_values
from utils.validators import (
    ValidationError,
    validate_choice,
    validate_count,
    validate_finite,
    validate_positive,
)

logger = logging.getLogger(__name__)

METHODS = ("exp_euler", "exp_midpoint")
BLOWUP_THRESHOLD = 1e12
PICARD_SUBNODES = 32
MAX_HALVINGS = 30
MAX_RICHARDSON_LEVELS = 20
CONTRACTION_TARGET = 0.5


@dataclass(frozen=True)
class ProcessConfig:
    """Time integration settings."""

    dt: float = 1e-2
    method: str = "exp_euler"
    richardson: bool = False
    tol: float = 1e-6

    def __post_init__(self) -> None:
        validate_positive(self.dt, "process.dt")
        validate_positive(self.tol, "process.tol")
        validate_choice(self.method, METHODS, "process.method")
        if not isinstance(self.richardson, bool):
            raise ValidationError(f"process.richardson must be a boolean, got {self.richardson!r}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled solution; states[0] is the initial condition object itself."""

    times: np.ndarray
    states: Tuple[Field, ...]

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float)
        times.setflags(write=False)
        states = tuple(self.states)
        if len(times) != len(states) or not states:
            raise DimensionError(f"{len(times)} times for {len(states)} states")
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise ValidationError("trajectory times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def grid(self) -> SpatialGrid:
        return self.states[0].grid

    @property
    def initial(self) -> Field:
        return self.states[0]

    @property
    def final(self) -> Field:
        return self.states[-1]

    def matrix(self) -> np.ndarray:
        """States stacked row-wise, shape (len, n)."""
        return np.vstack([state.values for state in self.states])

    def __len__(self) -> int:
        return len(self.states)


def _check_grid(kernel: DiscreteKernel, u: Field) -> None:
    if kernel.grid != u.grid:
        raise DimensionError(
            f"field grid {u.grid.key} does not match kernel grid {kernel.grid.key}"
        )


def _check_blowup(values: np.ndarray, t: float) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise BlowUpError(f"non-finite state at t={t:.6g}", t)
    peak = float(np.max(np.abs(values)))
    if peak > BLOWUP_THRESHOLD:
        raise BlowUpError(f"sup norm {peak:.3e} exceeds {BLOWUP_THRESHOLD:g} at t={t:.6g}", t)
    return values


def rhs(t: float, u: Field, kernel: DiscreteKernel, g: TimeNonlinearity) -> Field:
    """F(t, u) - u = -u + g(t, Ku), nodewise."""
    _check_grid(kernel, u)
    return Field(u.grid, -u.values + g(t, apply_K_values(kernel, u.values)))


def _step_values(
    t: float,
    values: np.ndarray,
    h: float,
    method: str,
    kernel: DiscreteKernel,
    g: TimeNonlinearity,
) -> np.ndarray:
    gain = -math.expm1(-h)
    decay = math.exp(-h)
    if method == "exp_euler":
        return decay * values + gain * g(t, apply_K_values(kernel, values))
    half_gain = -math.expm1(-0.5 * h)
    half = math.exp(-0.5 * h) * values + half_gain * g(t, apply_K_values(kernel, values))
    return decay * values + gain * g(t + 0.5 * h, apply_K_values(kernel, half))


def _advance(
    t: float,
    values: np.ndarray,
    h: float,
    cfg: ProcessConfig,
    kernel: DiscreteKernel,
    g: TimeNonlinearity,
) -> np.ndarray:
    """One macro step of size h, subdivided by step doubling when Richardson control is on."""
    if not cfg.richardson:
        return _check_blowup(_step_values(t, values, h, cfg.method, kernel, g), t + h)

    def substeps(count: int) -> np.ndarray:
        current = values
        sub = h / count
        for k in range(count):
            current = _check_blowup(
                _step_values(t + k * sub, current, sub, cfg.method, kernel, g), t + (k + 1) * sub
            )
        return current

    count = 1
    coarse = substeps(1)
    for _ in range(MAX_RICHARDSON_LEVELS):
        fine = substeps(2 * count)
        error = float(np.max(np.abs(fine - coarse)))
        if error <= cfg.tol:
            return fine
        count *= 2
        coarse = fine
    logger.warning(f"Richardson control stopped at {count} substeps near t={t:.6g} (error {error:.3e})")
    return coarse


def step(
    t: float,
    u: Field,
    h: float,
    cfg: ProcessConfig,
    kernel: DiscreteKernel,
    g: TimeNonlinearity,
) -> Field:
    """
    Advance u from t to t + h.

    exp_euler: u' = e^{-h} u + (1 - e^{-h}) g(t, Ku).
    exp_midpoint: the nonlinear term is taken at (t + h/2, K u_half), where
    u_half is an exp_euler half step.

    Raises:
        ValidationError: If h <= 0.
        BlowUpError: If the result is non-finite or exceeds 1e12.
    """
    validate_positive(h, "h")
    _check_grid(kernel, u)
    return Field(u.grid, _advance(t, u.values, h, cfg, kernel, g))


def _schedule(tau: float, t: float, dt: float) -> Iterator[Tuple[float, float, float]]:
    """Yield (start, h, end) with start = tau + k dt and the last end exactly t."""
    k = 0
    current = tau
    while current < t:
        remaining = t - current
        if remaining <= dt * (1.0 + 1e-9):
            yield current, remaining, t
            return
        k += 1
        end = tau + k * dt
        yield current, end - current, end
        current = end


def step_count(tau: float, t: float, dt: float) -> int:
    """Number of steps integrate takes from tau to t."""
    return sum(1 for _ in _schedule(tau, t, dt))


def _prepare(u_tau: Field, tau: float, t: float, kernel: DiscreteKernel, g: TimeNonlinearity) -> None:
    validate_finite(tau, "tau")
    validate_finite(t, "t")
    if t < tau:
        raise ValidationError(f"integration requires t >= tau, got tau={tau}, t={t}")
    _check_grid(kernel, u_tau)
    if not g.k1 < 1:
        logger.warning(f"'{g.name}' has k1 = {g.k1} >= 1; solutions are not certified bounded")


def integrate(
    u_tau: Field,
    tau: float,
    t: float,
    cfg: ProcessConfig,
    kernel: DiscreteKernel,
    g: TimeNonlinearity,
    record_every: int = 1,
) -> Trajectory:
    """
    Integrate from (tau, u_tau) to time t.

    Args:
        u_tau: Initial state, kept as states[0].
        tau: Initial time.
        t: Final time, t >= tau. The last recorded time equals t exactly.
        cfg: Step size and method.
        kernel: Discretized K.
        g: Nonlinearity.
        record_every: Record every k-th step (the final state is always recorded).

    Returns:
        Trajectory from tau to t.

    Raises:
        BlowUpError: On non-finite or exploding states.
    """
    _prepare(u_tau, tau, t, kernel, g)
    record_every = validate_count(record_every, "record_every")
    times: List[float] = [tau]
    states: List[Field] = [u_tau]
    values = u_tau.values
    count = 0
    for start, h, end in _schedule(tau, t, cfg.dt):
        values = _advance(start, values, h, cfg, kernel, g)
        count += 1
        if count % record_every == 0 or end == t:
            times.append(end)
            states.append(Field(u_tau.grid, values))
    logger.debug(f"Integrated '{g.name}' on [{tau}, {t}] in {count} steps")
    return Trajectory(times=np.array(times), states=tuple(states))


def evolve(
    u_tau: Field,
    tau: float,
    t: float,
    cfg: ProcessConfig,
    kernel: DiscreteKernel,
    g: TimeNonlinearity,
) -> Field:
    """S(t, tau) u_tau without recording intermediate states."""
    _prepare(u_tau, tau, t, kernel, g)
    values = u_tau.values
    for start, h, _ in _schedule(tau, t, cfg.dt):
        values = _advance(start, values, h, cfg, kernel, g)
    return u_tau if values is u_tau.values else Field(u_tau.grid, values)


# ---------------------------------------------------------------------------
# Mild-solution operator G
# ---------------------------------------------------------------------------


def apply_G(
    u0: np.ndarray,
    times: np.ndarray,
    phi: np.ndarray,
    kernel: DiscreteKernel,
    g: TimeNonlinearity,
) -> np.ndarray:
    """
    (G phi)(t_j) = e^{-(t_j - t_0)} u0 + integral from t_0 to t_j of e^{-(t_j - s)} g(s, K phi(s)) ds.

    phi has shape (len(times), n) on a uniform time grid. The integral weights
    e^{-(t - s)} exactly against the piecewise-linear interpolant of the
    g-values, so constant forcing gives the exact (1 - e^{-(t - t_0)}) factor.
    """
    count = len(times)
    forcing = np.vstack([g(float(s), apply_K_values(kernel, row)) for s, row in zip(times, phi)])
    out = np.empty_like(phi)
    out[0] = u0
    if count == 1:
        return out
    h = float(times[1] - times[0])
    decay = math.exp(-h)
    gain = -math.expm1(-h)
    alpha = (gain - h * decay) / h
    beta = gain - alpha
    integral = np.zeros_like(u0)
    for j in range(1, count):
        integral = decay * integral + alpha * forcing[j - 1] + beta * forcing[j]
        out[j] = math.exp(-(times[j] - times[0])) * u0 + integral
    return out


def contraction_windows(
    u_tau: Field,
    tau: float,
    T: float,
    kernel: DiscreteKernel,
    g: TimeNonlinearity,
) -> Tuple[int, float]:
    """
    Number of equal windows splitting [tau, T] so that k_M * window < 0.5.

    k_M is the Lipschitz estimate of g over the ball of radius L + |u_tau|_inf
    with L = 1 + |u_tau|_inf.

    Returns:
        (window count, k_M).

    Raises:
        ConvergenceError: If more than 30 halvings are needed.
    """
    sup = float(np.max(np.abs(u_tau.values)))
    radius = (1.0 + sup + sup) * max(1.0, kernel.max_row_mass)
    k_m = lipschitz_estimate(g, (tau, T), (-radius, radius))
    window = T - tau
    halvings = 0
    while k_m * window >= CONTRACTION_TARGET:
        window *= 0.5
        halvings += 1
        if halvings > MAX_HALVINGS:
            raise ConvergenceError(
                f"no contraction window for '{g.name}' on [{tau}, {T}] (k_M = {k_m:.3e})"
            )
    return 2**halvings, k_m


def picard_nodes(tau: float, T: float, windows: int) -> np.ndarray:
    """Uniform inner time grid with 32 sub-intervals per window."""
    nodes = np.linspace(tau, T, PICARD_SUBNODES * windows + 1)
    nodes[-1] = T
    return nodes


def picard_solve(
    u_tau: Field,
    tau: float,
    T: float,
    kernel: DiscreteKernel,
    g: TimeNonlinearity,
    max_iter: int = 50,
    tol: float = 1e-10,
) -> Field:
    """
    Solve u = G u window by window and return the state at T.

    Args:
        u_tau: Initial state.
        tau: Initial time.
        T: Final time, T >= tau.
        kernel: Discretized K.
        g: Nonlinearity.
        max_iter: Iterations allowed per window.
        tol: Sup-norm change between iterates that ends a window.

    Raises:
        ConvergenceError: If no contraction window is found.
        IterationError: If a window does not converge within max_iter iterations.
    """
    _prepare(u_tau, tau, T, kernel, g)
    max_iter = validate_count(max_iter, "max_iter")
    validate_positive(tol, "tol")
    if T == tau:
        return u_tau

    windows, k_m = contraction_windows(u_tau, tau, T, kernel, g)
    logger.debug(f"Picard on [{tau}, {T}]: {windows} window(s), k_M = {k_m:.4f}")
    edges = np.linspace(tau, T, windows + 1)
    edges[-1] = T
    start = u_tau.values
    for left, right in zip(edges[:-1], edges[1:]):
        times = picard_nodes(float(left), float(right), 1)
        phi = np.tile(start, (len(times), 1))
        residual = math.inf
        for _ in range(max_iter):
            updated = apply_G(start, times, phi, kernel, g)
            residual = float(np.max(np.abs(updated - phi)))
            phi = updated
            if residual <= tol:
                break
        else:
            raise IterationError(
                f"Picard iteration on [{left:.6g}, {right:.6g}] stopped at residual {residual:.3e}",
                residual,
            )
        start = _check_blowup(phi[-1], float(right))
    return Field(u_tau.grid, start)

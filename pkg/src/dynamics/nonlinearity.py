"""
Time-dependent nonlinearities g(t, x) and their autonomous limits g0(x).

A nonlinearity carries its partial derivative D2g, an optional inverse in x,
claimed dissipativity constants (k1, k2) with |g(t, x)| <= k2 + k1 |x|, and an
optional autonomous limit. Claims are certified by sampling, not proven.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar, newton

from src.dynamics.exceptions import (
    CapabilityError,
    CertificationError,
    ConvergenceError,
    DomainError,
    RangeError,
)
from utils.validators import ValidationError, validate_count, validate_finite

logger = logging.getLogger(__name__)

MIN_SAMPLES = 100
INVERSE_TOL = 1e-10
NEWTON_TOL = 1e-12
MAX_ITERATIONS = 200

Interval = Tuple[float, float]
TimeFunction = Callable[[float, np.ndarray], np.ndarray]
ScalarFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AutonomousNonlinearity:
    """Bounded, strictly increasing g0 with inverse on (-a, a)."""

    name: str
    func: ScalarFunction
    a: float
    inverse_func: Optional[ScalarFunction] = None
    derivative: Optional[ScalarFunction] = None
    strictly_increasing: bool = True

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.func(np.asarray(x, dtype=float))

    def slope(self, x: np.ndarray) -> np.ndarray:
        """g0'(x), by central differences when no analytic derivative is given."""
        x = np.asarray(x, dtype=float)
        if self.derivative is not None:
            return self.derivative(x)
        h = 1e-6 * np.maximum(1.0, np.abs(x))
        return (self.func(x + h) - self.func(x - h)) / (2.0 * h)

    def inverse(self, theta: np.ndarray) -> np.ndarray:
        """
        Vectorized g0^{-1}.

        Raises:
            RangeError: If any |theta| >= a.
        """
        theta = np.asarray(theta, dtype=float)
        _check_inverse_range(theta, self.a, self.name)
        if self.inverse_func is not None:
            return self.inverse_func(theta)
        return np.vectorize(lambda value: invert_autonomous(self, float(value)), otypes=[float])(theta)


@dataclass(frozen=True)
class TimeNonlinearity:
    """g(t, x) with derivative, claims and optional inverse and limit."""

    name: str
    func: TimeFunction
    d2: TimeFunction
    k1: float
    k2: float
    monotone_in_x: bool = True
    inverse_func: Optional[TimeFunction] = None
    limit: Optional[AutonomousNonlinearity] = None
    autonomous: bool = False

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.func(t, np.asarray(x, dtype=float))

    def derivative(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.d2(t, np.asarray(x, dtype=float))

    @property
    def has_inverse(self) -> bool:
        return self.inverse_func is not None

    def inverse(self, t: float, y: np.ndarray) -> np.ndarray:
        """
        g^{-1}(t, y).

        Raises:
            CapabilityError: If no inverse was supplied.
        """
        if self.inverse_func is None:
            raise CapabilityError(f"nonlinearity '{self.name}' has no inverse in x")
        return self.inverse_func(t, np.asarray(y, dtype=float))

    def default_x_range(self) -> Interval:
        """Certification box |x| <= 10 k2 / (1 - k1), or |x| <= 10 when that is degenerate."""
        if self.k1 < 1 and self.k2 > 0:
            radius = 10.0 * self.k2 / (1.0 - self.k1)
        else:
            radius = 10.0
        return (-radius, radius)


@dataclass(frozen=True)
class DissipativityCertificate:
    k1: float
    k2: float
    worst_ratio: float
    worst_point: Tuple[float, float]
    t_range: Interval
    x_range: Interval
    samples: int


def _check_inverse_range(theta: np.ndarray, bound: float, name: str) -> None:
    if not np.all(np.isfinite(theta)):
        raise RangeError(f"{name}: inverse argument must be finite")
    if np.any(np.abs(theta) >= bound):
        worst = float(np.max(np.abs(theta)))
        raise RangeError(f"{name}: inverse undefined for |theta| = {worst} >= {bound}")


def with_claims(
    g: TimeNonlinearity,
    k1: Optional[float] = None,
    k2: Optional[float] = None,
    monotone: Optional[bool] = None,
) -> TimeNonlinearity:
    """Return g with user-claimed constants replacing the built-in ones."""
    changes = {}
    if k1 is not None:
        changes["k1"] = validate_finite(k1, "nonlinearity.k1")
    if k2 is not None:
        changes["k2"] = validate_finite(k2, "nonlinearity.k2")
    if monotone is not None:
        changes["monotone_in_x"] = bool(monotone)
    return dataclasses.replace(g, **changes)


# ---------------------------------------------------------------------------
# Built-in catalogue
# ---------------------------------------------------------------------------


def zero() -> TimeNonlinearity:
    """g = 0."""
    return TimeNonlinearity(
        name="zero",
        func=lambda t, x: np.zeros_like(x),
        d2=lambda t, x: np.zeros_like(x),
        k1=0.0,
        k2=0.0,
        monotone_in_x=True,
        autonomous=True,
    )


def linear(slope: float = 1.0) -> TimeNonlinearity:
    """g = slope * x; k1 = |slope| (k1 >= 1 is only usable for rhs evaluation)."""
    slope = validate_finite(slope, "nonlinearity.slope")
    inverse = (lambda t, y: y / slope) if slope != 0 else None
    return TimeNonlinearity(
        name=f"linear({slope:g})",
        func=lambda t, x: slope * x,
        d2=lambda t, x: np.full_like(x, slope),
        k1=abs(slope),
        k2=0.0,
        monotone_in_x=slope >= 0,
        inverse_func=inverse,
        autonomous=True,
    )


def autonomous_saturating(amplitude: float = 2.0, slope: float = 1.0) -> AutonomousNonlinearity:
    """g0(x) = amplitude * tanh(slope * x), bounded by |amplitude|."""
    amplitude = validate_finite(amplitude, "limit.amplitude")
    slope = validate_finite(slope, "limit.slope")
    if amplitude == 0 or slope == 0:
        raise ValidationError("saturating limit needs non-zero amplitude and slope")

    return AutonomousNonlinearity(
        name=f"{amplitude:g}*tanh({slope:g}x)",
        func=lambda x: amplitude * np.tanh(slope * x),
        a=abs(amplitude),
        inverse_func=lambda theta: np.arctanh(theta / amplitude) / slope,
        derivative=lambda x: amplitude * slope / np.cosh(slope * x) ** 2,
        strictly_increasing=amplitude * slope > 0,
    )


def autonomous_blended(
    amplitude: float = 2.0, slope: float = 1.0, weight: float = 0.5
) -> AutonomousNonlinearity:
    """
    g0(x) = amplitude * (w tanh(s x) + (1 - w) (2/pi) arctan(pi s x / 2)).

    Both sigmoids have slope s at the origin and saturate at 1, so g0 is bounded
    by |amplitude|. There is no closed-form inverse; g0.inverse solves numerically.
    """
    amplitude = validate_finite(amplitude, "limit.amplitude")
    slope = validate_finite(slope, "limit.slope")
    weight = validate_finite(weight, "limit.weight")
    if amplitude == 0 or slope == 0:
        raise ValidationError("blended limit needs non-zero amplitude and slope")
    if not 0.0 <= weight <= 1.0:
        raise ValidationError(f"limit.weight must lie in [0, 1], got {weight}")
    scale = 0.5 * math.pi * slope

    def func(x: np.ndarray) -> np.ndarray:
        arctan_part = np.arctan(scale * x) / (0.5 * math.pi)
        return amplitude * (weight * np.tanh(slope * x) + (1.0 - weight) * arctan_part)

    def derivative(x: np.ndarray) -> np.ndarray:
        arctan_part = 1.0 / (1.0 + (scale * x) ** 2)
        return amplitude * slope * (weight / np.cosh(slope * x) ** 2 + (1.0 - weight) * arctan_part)

    return AutonomousNonlinearity(
        name=f"{amplitude:g}*blend({slope:g}x, w={weight:g})",
        func=func,
        a=abs(amplitude),
        derivative=derivative,
        strictly_increasing=amplitude * slope > 0,
    )


def blended(amplitude: float = 2.0, slope: float = 1.0, weight: float = 0.5) -> TimeNonlinearity:
    """Time-independent g(t, x) = g0(x) for the blended sigmoid; k1 = 0, k2 = |amplitude|."""
    return from_autonomous(autonomous_blended(amplitude, slope, weight))


def _modulated_saturating(
    name: str,
    factor: Callable[[float], float],
    amplitude: float,
    slope: float,
    k2: float,
    monotone: bool,
    limit: Optional[AutonomousNonlinearity],
    autonomous: bool,
) -> TimeNonlinearity:
    def func(t: float, x: np.ndarray) -> np.ndarray:
        return factor(t) * amplitude * np.tanh(slope * x)

    def d2(t: float, x: np.ndarray) -> np.ndarray:
        return factor(t) * amplitude * slope / np.cosh(slope * x) ** 2

    def inverse(t: float, y: np.ndarray) -> np.ndarray:
        level = factor(t) * amplitude
        _check_inverse_range(y, abs(level), name)
        return np.arctanh(y / level) / slope

    return TimeNonlinearity(
        name=name,
        func=func,
        d2=d2,
        k1=0.0,
        k2=k2,
        monotone_in_x=monotone,
        inverse_func=inverse,
        limit=limit,
        autonomous=autonomous,
    )


def saturating(amplitude: float = 2.0, slope: float = 1.0) -> TimeNonlinearity:
    """g(t, x) = amplitude * tanh(slope * x); k1 = 0, k2 = |amplitude|."""
    limit = autonomous_saturating(amplitude, slope)
    return _modulated_saturating(
        limit.name, lambda t: 1.0, amplitude, slope, abs(amplitude),
        limit.strictly_increasing, limit, True,
    )


def modulated(
    amplitude: float = 2.0,
    slope: float = 1.0,
    c: float = 1.0,
    lam: float = 1.0,
    t0: float = 0.0,
) -> TimeNonlinearity:
    """
    Asymptotically autonomous family (1 + c e^{-lam t}) * amplitude * tanh(slope x).

    k2 is valid for t >= t0. The limit as t -> inf is amplitude * tanh(slope x).
    """
    lam = validate_finite(lam, "nonlinearity.lam")
    if lam <= 0:
        raise ValidationError(f"nonlinearity.lam must be > 0, got {lam}")
    c = validate_finite(c, "nonlinearity.c")
    t0 = validate_finite(t0, "nonlinearity.t0")
    peak = 1.0 + max(c, 0.0) * math.exp(-lam * t0)
    floor = 1.0 + min(c, 0.0) * math.exp(-lam * t0)
    limit = autonomous_saturating(amplitude, slope)
    return _modulated_saturating(
        f"(1+{c:g}e^(-{lam:g}t))*{limit.name}",
        lambda t: 1.0 + c * math.exp(-lam * t),
        amplitude, slope, abs(amplitude) * peak,
        limit.strictly_increasing and floor > 0, limit, False,
    )


def periodic(
    amplitude: float = 1.0,
    slope: float = 1.0,
    eps: float = 0.5,
    omega: float = 1.0,
) -> TimeNonlinearity:
    """(1 + eps sin(omega t)) * amplitude * tanh(slope x); k2 = |amplitude| (1 + |eps|)."""
    eps = validate_finite(eps, "nonlinearity.eps")
    omega = validate_finite(omega, "nonlinearity.omega")
    base = autonomous_saturating(amplitude, slope)
    return _modulated_saturating(
        f"(1+{eps:g}sin({omega:g}t))*{base.name}",
        lambda t: 1.0 + eps * math.sin(omega * t),
        amplitude, slope, abs(amplitude) * (1.0 + abs(eps)),
        base.strictly_increasing and abs(eps) < 1, None, False,
    )


def shifted(amplitude: float = 2.0, slope: float = 1.0, beta: float = 0.0) -> TimeNonlinearity:
    """g0 + beta with g0 = amplitude * tanh(slope x); k2 = |amplitude| + |beta|."""
    beta = validate_finite(beta, "nonlinearity.beta")
    base = autonomous_saturating(amplitude, slope)

    def inverse(t: float, y: np.ndarray) -> np.ndarray:
        centered = y - beta
        _check_inverse_range(centered, base.a, f"{base.name}+{beta:g}")
        return np.arctanh(centered / amplitude) / slope

    return TimeNonlinearity(
        name=f"{base.name}+{beta:g}",
        func=lambda t, x: base.func(x) + beta,
        d2=lambda t, x: base.derivative(x),
        k1=0.0,
        k2=base.a + abs(beta),
        monotone_in_x=base.strictly_increasing,
        inverse_func=inverse,
        limit=base if beta == 0 else None,
        autonomous=True,
    )


def from_autonomous(g0: AutonomousNonlinearity) -> TimeNonlinearity:
    """Lift g0 to a time-independent g(t, x) = g0(x) with k1 = 0, k2 = a."""
    return TimeNonlinearity(
        name=g0.name,
        func=lambda t, x: g0(x),
        d2=lambda t, x: g0.slope(x),
        k1=0.0,
        k2=g0.a,
        monotone_in_x=g0.strictly_increasing,
        inverse_func=lambda t, y: g0.inverse(y),
        limit=g0,
        autonomous=True,
    )


def time_shifted(g: TimeNonlinearity, beta: float) -> TimeNonlinearity:
    """g_beta(t, x) = g(t + beta, x)."""
    beta = validate_finite(beta, "beta")
    inverse = None
    if g.inverse_func is not None:
        inverse = lambda t, y: g.inverse_func(t + beta, y)  # noqa: E731
    return dataclasses.replace(
        g,
        name=f"{g.name}[t+{beta:g}]",
        func=lambda t, x: g.func(t + beta, x),
        d2=lambda t, x: g.d2(t + beta, x),
        inverse_func=inverse,
    )


# ---------------------------------------------------------------------------
# Certification
# ---------------------------------------------------------------------------


def _sample_axes(
    t_range: Interval, x_range: Interval, samples: int
) -> Tuple[np.ndarray, np.ndarray]:
    samples = validate_count(samples, "samples", minimum=MIN_SAMPLES)
    t_lo, t_hi = (validate_finite(v, "t_range") for v in t_range)
    x_lo, x_hi = (validate_finite(v, "x_range") for v in x_range)
    if t_hi < t_lo or x_hi < x_lo:
        raise ValidationError(f"empty sampling box t={t_range}, x={x_range}")
    ts = np.linspace(t_lo, t_hi, samples) if t_hi > t_lo else np.array([t_lo])
    xs = np.linspace(x_lo, x_hi, samples)
    if x_lo <= 0.0 <= x_hi:
        xs = np.union1d(xs, [0.0])
    return ts, xs


def certify_dissipativity(
    g: TimeNonlinearity,
    t_range: Interval,
    x_range: Optional[Interval] = None,
    samples: int = 200,
) -> DissipativityCertificate:
    """
    Verify |g(t, x)| <= k2 + k1 |x| on a sampled box.

    Args:
        g: Nonlinearity with claimed k1 < 1 and k2 >= 0.
        t_range: Time interval to sample.
        x_range: State interval; defaults to |x| <= 10 k2 / (1 - k1).
        samples: Samples per axis, at least 100.

    Returns:
        Certificate with the worst ratio |g| / (k2 + k1 |x|) and where it occurs.

    Raises:
        CertificationError: If k1 >= 1, k2 < 0 or any sample violates the bound.
    """
    if not g.k1 < 1:
        raise CertificationError(f"'{g.name}': claimed k1 = {g.k1} is not < 1")
    if g.k1 < 0 or g.k2 < 0:
        raise CertificationError(f"'{g.name}': claimed constants must be non-negative")
    x_range = x_range or g.default_x_range()
    ts, xs = _sample_axes(t_range, x_range, samples)

    bound = g.k2 + g.k1 * np.abs(xs)
    worst_ratio = 0.0
    worst_point = (float(ts[0]), float(xs[0]))
    for t in ts:
        values = np.abs(np.asarray(g(float(t), xs), dtype=float))
        if not np.all(np.isfinite(values)):
            index = int(np.argmax(~np.isfinite(values)))
            raise CertificationError(
                f"'{g.name}' is not finite at t={t}, x={xs[index]}", (float(t), float(xs[index]))
            )
        excess = values - bound
        index = int(np.argmax(excess))
        if excess[index] > 1e-12 * max(1.0, bound[index]):
            point = (float(t), float(xs[index]))
            raise CertificationError(
                f"'{g.name}' violates |g| <= {g.k2} + {g.k1}|x| at t={point[0]:.6g}, "
                f"x={point[1]:.6g}: |g| = {values[index]:.6g} > {bound[index]:.6g}",
                point,
            )
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(bound > 0, values / np.where(bound > 0, bound, 1.0), 0.0)
        index = int(np.argmax(ratio))
        if ratio[index] > worst_ratio:
            worst_ratio = float(ratio[index])
            worst_point = (float(t), float(xs[index]))

    logger.info(f"Certified '{g.name}' (k1={g.k1}, k2={g.k2}); worst ratio {worst_ratio:.6f}")
    return DissipativityCertificate(
        k1=g.k1,
        k2=g.k2,
        worst_ratio=worst_ratio,
        worst_point=worst_point,
        t_range=(float(ts[0]), float(ts[-1])),
        x_range=(float(xs[0]), float(xs[-1])),
        samples=samples,
    )


def check_monotone(
    g: TimeNonlinearity, t_range: Interval, x_range: Optional[Interval] = None, samples: int = 200
) -> None:
    """
    Verify d2 >= 0 on the sampled box.

    Raises:
        CertificationError: At the first sample with negative derivative.
    """
    ts, xs = _sample_axes(t_range, x_range or g.default_x_range(), samples)
    for t in ts:
        slopes = np.asarray(g.derivative(float(t), xs), dtype=float)
        index = int(np.argmin(slopes))
        if slopes[index] < -1e-12:
            raise CertificationError(
                f"'{g.name}' is decreasing at t={t:.6g}, x={xs[index]:.6g}",
                (float(t), float(xs[index])),
            )


def check_inverse(
    g: TimeNonlinearity, t_range: Interval, x_range: Optional[Interval] = None, samples: int = 200
) -> None:
    """
    Verify g(t, g^{-1}(t, y)) = y within 1e-10 on sampled y = g(t, x).

    Raises:
        CapabilityError: If g has no inverse.
        CertificationError: If the round trip fails.
    """
    if not g.has_inverse:
        raise CapabilityError(f"nonlinearity '{g.name}' has no inverse in x")
    ts, xs = _sample_axes(t_range, x_range or g.default_x_range(), samples)
    for t in ts:
        ys = np.asarray(g(float(t), xs), dtype=float)
        # stay clear of the edges of the sampled range, where saturating inverses blow up
        lo, hi = float(np.min(ys)), float(np.max(ys))
        margin = 1e-3 * (hi - lo)
        ys = ys[(ys > lo + margin) & (ys < hi - margin)]
        error = np.abs(g(float(t), g.inverse(float(t), ys)) - ys)
        if error.size and float(np.max(error)) > INVERSE_TOL:
            index = int(np.argmax(error))
            raise CertificationError(
                f"'{g.name}' inverse round trip fails at t={t:.6g}, y={ys[index]:.6g}",
                (float(t), float(ys[index])),
            )


def lipschitz_estimate(
    g: TimeNonlinearity,
    t_range: Interval,
    x_range: Interval,
    samples: int = 200,
) -> float:
    """
    Sampled sup of |D2g| over the box, refined locally around the maximizer.

    Raises:
        DomainError: If any sampled derivative is not finite.
    """
    ts, xs = _sample_axes(t_range, x_range, samples)
    best, best_t, best_index = -1.0, float(ts[0]), 0
    for t in ts:
        slopes = np.abs(np.asarray(g.derivative(float(t), xs), dtype=float))
        if not np.all(np.isfinite(slopes)):
            raise DomainError(f"'{g.name}': non-finite derivative at t={t}")
        index = int(np.argmax(slopes))
        if slopes[index] > best:
            best, best_t, best_index = float(slopes[index]), float(t), index

    lo = xs[max(best_index - 1, 0)]
    hi = xs[min(best_index + 1, len(xs) - 1)]
    if hi > lo:
        refined = minimize_scalar(
            lambda x: -abs(float(g.derivative(best_t, np.array([x]))[0])),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-10},
        )
        if refined.success and np.isfinite(refined.fun):
            best = max(best, -float(refined.fun))
    return best


def autonomous_gap(g: TimeNonlinearity, t: float, radius: float, samples: int = 201) -> float:
    """
    sup over |x| <= radius of |g(t, x) - g0(x)|.

    Raises:
        CapabilityError: If g has no autonomous limit.
    """
    if g.limit is None:
        raise CapabilityError(f"nonlinearity '{g.name}' has no autonomous limit")
    xs = np.linspace(-radius, radius, samples)
    return float(np.max(np.abs(g(t, xs) - g.limit(xs))))


def invert_autonomous(g0: AutonomousNonlinearity, theta: float) -> float:
    """
    Solve g0(x) = theta.

    Uses the closed form when one is given, otherwise a bracketed Brent solve
    polished by Newton's method.

    Raises:
        RangeError: If |theta| >= a.
        ConvergenceError: If no bracket is found or the residual stays above 1e-10.
    """
    theta = float(theta)
    _check_inverse_range(np.array([theta]), g0.a, g0.name)
    if g0.inverse_func is not None:
        return float(np.asarray(g0.inverse_func(np.array([theta])))[0])

    def residual(x: float) -> float:
        return float(g0(np.array([x]))[0]) - theta

    lo, hi = -1.0, 1.0
    for _ in range(MAX_ITERATIONS):
        if residual(lo) <= 0.0 <= residual(hi):
            break
        lo, hi = 2.0 * lo, 2.0 * hi
    else:
        raise ConvergenceError(f"{g0.name}: could not bracket inverse of {theta}")

    x = brentq(residual, lo, hi, xtol=NEWTON_TOL, maxiter=MAX_ITERATIONS)
    try:
        x = float(
            newton(
                residual,
                x,
                fprime=lambda z: float(g0.slope(np.array([z]))[0]),
                tol=NEWTON_TOL,
                maxiter=20,
            )
        )
    except (RuntimeError, ZeroDivisionError) as e:
        logger.debug(f"Newton polish skipped for {g0.name} at {theta}: {e}")
    if abs(residual(x)) > INVERSE_TOL:
        raise ConvergenceError(f"{g0.name}: inverse residual {abs(residual(x)):.3e} at {theta}")
    return x


# kind -> (builder, accepted parameter names)
CATALOGUE: Dict[str, Tuple[Callable[..., TimeNonlinearity], Tuple[str, ...]]] = {
    "zero": (zero, ()),
    "linear": (linear, ("slope",)),
    "saturating": (saturating, ("amplitude", "slope")),
    "modulated": (modulated, ("amplitude", "slope", "c", "lam", "t0")),
    "periodic": (periodic, ("amplitude", "slope", "eps", "omega")),
    "shifted": (shifted, ("amplitude", "slope", "beta")),
    "blended": (blended, ("amplitude", "slope", "weight")),
}

LIMIT_CATALOGUE: Dict[str, Tuple[Callable[..., AutonomousNonlinearity], Tuple[str, ...]]] = {
    "saturating": (autonomous_saturating, ("amplitude", "slope")),
    "blended": (autonomous_blended, ("amplitude", "slope", "weight")),
}

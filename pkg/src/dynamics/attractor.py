"""
Pullback absorption and attractor estimates.

The pullback attractor A(t) is approximated by evolving a seed ensemble from
increasingly remote initial times t - d_k and watching the images stabilize in
the Hausdorff semi-distance.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.dynamics.exceptions import (
    CapabilityError,
    DimensionError,
    DomainError,
    GronwallViolation,
)
from src.dynamics.evolution import ProcessConfig, Trajectory, evolve, integrate
from src.dynamics.nonlinearity import (
    TimeNonlinearity,
    certify_dissipativity,
    from_autonomous,
    lipschitz_estimate,
)
from src.dynamics.spatial import (
    DiscreteKernel,
    Ensemble,
    Exponent,
    Field,
    hausdorff_semidist,
    lp_distance,
    lp_norm,
)
from utils.validators import (
    validate_count,
    validate_exponent,
    validate_finite,
    validate_increasing,
    validate_positive,
)

logger = logging.getLogger(__name__)

# Allowed growth of the last residual, as a fraction of the stabilization tolerance
TAIL_SLACK = 1e-2


@dataclass(frozen=True)
class DecayReport:
    radius: float
    rate: float
    samples_outside: int
    violations: List[Tuple[float, float, float]]
    entry_time: Optional[float]

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass(frozen=True, eq=False)
class AttractorEstimate:
    """Pullback estimate of A(t) with its stabilization history."""

    t: float
    ensemble: Ensemble
    pullback_depths: Tuple[float, ...]
    residuals: Tuple[float, ...]
    converged: bool
    radius: float
    max_norm: float
    containment_ok: bool
    p: float = 2.0
    tail_monotone: bool = True

    def distinct(self, tol: float = 1e-6) -> Ensemble:
        """Members with near-duplicates (sup distance below tol) removed, first occurrence kept."""
        kept: List[Field] = []
        for member in self.ensemble:
            if all(np.max(np.abs(member.values - other.values)) >= tol for other in kept):
                kept.append(member)
        return Ensemble(tuple(kept), label=f"{self.ensemble.label} (distinct)")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "t": self.t,
            "depths": list(self.pullback_depths),
            "residuals": list(self.residuals),
            "converged": self.converged,
            "tail_monotone": self.tail_monotone,
            "radius": self.radius,
            "max_norm": self.max_norm,
            "containment_ok": self.containment_ok,
            "members": len(self.ensemble),
            "p": "inf" if math.isinf(self.p) else self.p,
        }


@dataclass(frozen=True)
class GradientReport:
    bound: float
    max_gradient: float
    slack: float
    ok: bool
    per_member: List[float] = field(default_factory=list)


@dataclass(frozen=True)
class SemicontinuityReport:
    rows: List[Dict[str, float]]
    monotone_decrease: bool
    violations: List[Dict[str, float]]

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class AutonomyReport:
    shifts: List[float]
    distances: List[float]
    decreasing: bool


def absorbing_radius(k1: float, k2: float, measure: float, p: Exponent, delta: float) -> float:
    """
    (1 + delta) k2 |Omega|^{1/p} / (1 - k1); |Omega|^{1/p} is 1 for p = inf.

    Raises:
        DomainError: If k1 >= 1.
    """
    k1 = validate_finite(k1, "k1")
    k2 = validate_positive(k2, "k2", allow_zero=True)
    delta = validate_positive(delta, "delta", allow_zero=True)
    measure = validate_positive(measure, "measure")
    p = validate_exponent(p)
    if not 0 <= k1 < 1:
        raise DomainError(f"absorbing radius needs 0 <= k1 < 1, got k1={k1}")
    scale = 1.0 if math.isinf(p) else measure ** (1.0 / p)
    return (1.0 + delta) * k2 * scale / (1.0 - k1)


def _sample_spacing(trajectory: Trajectory) -> float:
    if len(trajectory) < 2:
        return 0.0
    return float(np.median(np.diff(trajectory.times)))


def decay_envelope_check(
    trajectory: Trajectory,
    k1: float,
    k2: float,
    p: Exponent = 2,
    delta: float = 0.1,
    dt: Optional[float] = None,
) -> DecayReport:
    """
    Check the decay envelope outside the absorbing ball.

    While |u(t)|_p >= (1 + delta) k2 |Omega|^{1/p} / (1 - k1), the p-th power
    must satisfy |u(t)|^p <= e^{-delta p (1 - k1)(t - tau) / (1 + delta)} |u_tau|^p,
    checked with a (1 + 10 dt) tolerance factor. Report only.
    """
    p = validate_exponent(p)
    grid = trajectory.grid
    radius = absorbing_radius(k1, k2, grid.measure, p, delta)
    rate = delta * (1.0 - k1) / (1.0 + delta)
    dt = _sample_spacing(trajectory) if dt is None else dt
    factor = 1.0 + 10.0 * dt
    tau = float(trajectory.times[0])
    initial = lp_norm(trajectory.initial, p)

    violations = []
    outside = 0
    entry_time = None
    for t, state in zip(trajectory.times, trajectory.states):
        norm = lp_norm(state, p)
        if norm < radius:
            if entry_time is None:
                entry_time = float(t)
            continue
        outside += 1
        elapsed = float(t) - tau
        if math.isinf(p):
            envelope = math.exp(-rate * elapsed) * initial
            measured = norm
        else:
            envelope = math.exp(-rate * p * elapsed) * initial**p
            measured = norm**p
        if measured > envelope * factor:
            violations.append((float(t), measured, envelope))

    if violations:
        logger.warning(f"Decay envelope violated at {len(violations)} sample(s)")
    return DecayReport(
        radius=radius,
        rate=rate,
        samples_outside=outside,
        violations=violations,
        entry_time=entry_time,
    )


def _pullback_images(
    t: float,
    seed: Ensemble,
    depths: Sequence[float],
    cfg: ProcessConfig,
    kernel: DiscreteKernel,
    g: TimeNonlinearity,
    max_workers: int,
) -> List[Ensemble]:
    jobs = [(depth, member) for depth in depths for member in seed]

    def run(job: Tuple[float, Field]) -> Field:
        depth, member = job
        return evolve(member, t - depth, t, cfg, kernel, g)

    # map preserves job order, so the result does not depend on scheduling
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        images = list(pool.map(run, jobs))
    size = len(seed)
    return [
        Ensemble(tuple(images[k * size:(k + 1) * size]), label=f"S({t}, {t - depth})seed")
        for k, depth in enumerate(depths)
    ]


def residual_tail_monotone(residuals: Sequence[float], tol: float) -> bool:
    """True when the last residual does not exceed the one before it (up to TAIL_SLACK * tol)."""
    if len(residuals) < 2:
        return True
    return bool(residuals[-1] <= residuals[-2] + TAIL_SLACK * tol)


def pullback_omega_limit(
    t: float,
    seed: Ensemble,
    depths: Sequence[float],
    cfg: ProcessConfig,
    kernel: DiscreteKernel,
    g: TimeNonlinearity,
    tol: float = 1e-4,
    p: Exponent = 2,
    max_workers: int = 1,
) -> AttractorEstimate:
    """
    Estimate A(t) by residual stabilization over increasing pullback depths.

    Args:
        t: Section time.
        seed: Bounded seed ensemble.
        depths: Strictly increasing positive depths d_k; images are S(t, t - d_k) seed.
        cfg: Time stepping.
        kernel: Discretized K.
        g: Nonlinearity with k1 < 1 (certified on [t - max depth, t]).
        tol: Stabilization tolerance for the last residual.
        p: Norm exponent for the semi-distance and containment.
        max_workers: Worker threads for independent pullback runs.

    Returns:
        AttractorEstimate built from the deepest image ensemble.

    Raises:
        CertificationError: If g fails its dissipativity certificate.
    """
    t = validate_finite(t, "t")
    depths = validate_increasing(list(depths), "depths")
    if depths[0] <= 0:
        raise DomainError("pullback depths must be positive")
    validate_positive(tol, "tol")
    p = validate_exponent(p)
    max_workers = validate_count(max_workers, "max_workers")
    if seed.grid != kernel.grid:
        raise DimensionError("seed ensemble and kernel live on different grids")

    certify_dissipativity(g, (t - depths[-1], t))
    logger.info(f"Pullback estimate of A({t}) from {len(seed)} seeds at depths {depths}")
    images = _pullback_images(t, seed, depths, cfg, kernel, g, max_workers)

    residuals = tuple(
        hausdorff_semidist(images[k], images[k + 1], p) for k in range(len(images) - 1)
    )
    tail_monotone = residual_tail_monotone(residuals, tol)
    converged = bool(residuals) and residuals[-1] < tol and tail_monotone
    estimate = images[-1]

    radius = absorbing_radius(g.k1, g.k2, kernel.grid.measure, p, 0.0)
    max_norm = max(lp_norm(member, p) for member in estimate)
    containment_ok = max_norm <= radius + max(tol, 1e-6 + 10.0 * cfg.dt)
    if not tail_monotone:
        logger.warning(f"Pullback residuals grow at the tail: {residuals[-2:]}")
    elif not converged:
        logger.warning(f"Pullback residuals did not drop below {tol}: {residuals}")
    if not containment_ok:
        logger.warning(f"Estimate leaves the ball of radius {radius} (max norm {max_norm})")

    return AttractorEstimate(
        t=t,
        ensemble=Ensemble(estimate.members, label=f"A({t})"),
        pullback_depths=tuple(depths),
        residuals=residuals,
        converged=converged,
        radius=radius,
        max_norm=max_norm,
        containment_ok=containment_ok,
        p=p,
        tail_monotone=tail_monotone,
    )


def gradient_bound_check(
    estimate: AttractorEstimate,
    kernel_dx_bound: float,
    k3: float,
    M: float,
    tol: float = 1e-6,
) -> GradientReport:
    """
    Check |du/dx| <= k3 * C * M at the nodes of every member.

    C bounds sup_x |dJ/dx(x, .)|_q (see kernel_lq_norm), k3 bounds |D2g| and M
    bounds the members in L^p. Report only.
    """
    bound = validate_positive(k3, "k3", True) * validate_positive(kernel_dx_bound, "C", True)
    bound *= validate_positive(M, "M", True)
    grid = estimate.ensemble.grid
    edge_order = 2 if grid.n >= 3 else 1
    per_member = [
        float(np.max(np.abs(np.gradient(member.values, grid.nodes, edge_order=edge_order))))
        for member in estimate.ensemble
    ]
    max_gradient = max(per_member)
    return GradientReport(
        bound=bound,
        max_gradient=max_gradient,
        slack=bound - max_gradient,
        ok=max_gradient <= bound + tol,
        per_member=per_member,
    )


def _sup_difference(
    g_a: TimeNonlinearity, g_b: TimeNonlinearity, t_range: Tuple[float, float], radius: float
) -> float:
    ts = np.linspace(t_range[0], t_range[1], 101) if t_range[1] > t_range[0] else [t_range[0]]
    xs = np.linspace(-radius, radius, 401)
    return max(float(np.max(np.abs(g_a(float(s), xs) - g_b(float(s), xs)))) for s in ts)


def semicontinuity_experiment(
    t: float,
    family: Sequence[Tuple[float, TimeNonlinearity]],
    beta0: Tuple[float, TimeNonlinearity],
    seed: Ensemble,
    cfg: ProcessConfig,
    kernel: DiscreteKernel,
    tau: Optional[float] = None,
    depths: Sequence[float] = (5.0, 10.0, 20.0, 40.0, 80.0),
    tol: float = 1e-4,
    p: Exponent = 2,
    max_workers: int = 1,
) -> SemicontinuityReport:
    """
    Compare the g_beta problems with the g_beta0 problem.

    Trajectory level: every seed member is integrated from tau to t under both
    nonlinearities and |u_beta - u_beta0|_p(s) is checked against
    |Omega|^{1/p} |g_beta - g_beta0|_inf e^{k_B (s - tau)}.
    Attractor level: dist(A_beta(t), A_beta0(t)) for each beta.

    Raises:
        GronwallViolation: After all rows are computed, if any trajectory
            distance exceeds its bound. The report is attached.
    """
    p = validate_exponent(p)
    tau = t - 1.0 if tau is None else validate_finite(tau, "tau")
    b0, g0 = beta0
    grid = kernel.grid
    scale = 1.0 if math.isinf(p) else grid.measure ** (1.0 / p)

    reference = [integrate(member, tau, t, cfg, kernel, g0) for member in seed]
    reference_attractor = pullback_omega_limit(t, seed, depths, cfg, kernel, g0, tol, p, max_workers)

    rows: List[Dict[str, float]] = []
    violations: List[Dict[str, float]] = []
    for beta, g_beta in family:
        trajectories = [integrate(member, tau, t, cfg, kernel, g_beta) for member in seed]
        sup = max(
            float(np.max(np.abs(traj.matrix()))) for traj in trajectories + reference
        ) * max(1.0, kernel.max_row_mass) + 1.0
        k_b = max(
            lipschitz_estimate(g_beta, (tau, t), (-sup, sup)),
            lipschitz_estimate(g0, (tau, t), (-sup, sup)),
        )
        gap = _sup_difference(g_beta, g0, (tau, t), sup)

        traj_dist = 0.0
        final_bound = scale * gap * math.exp(k_b * (t - tau))
        for traj, ref in zip(trajectories, reference):
            for s, state, ref_state in zip(traj.times, traj.states, ref.states):
                distance = lp_distance(state, ref_state, p)
                bound = scale * gap * math.exp(k_b * (float(s) - tau))
                traj_dist = max(traj_dist, distance)
                if distance > bound * (1.0 + 1e-9) + 1e-12:
                    violations.append({"beta": beta, "t": float(s), "distance": distance, "bound": bound})

        attractor = pullback_omega_limit(t, seed, depths, cfg, kernel, g_beta, tol, p, max_workers)
        attractor_dist = hausdorff_semidist(attractor.ensemble, reference_attractor.ensemble, p)
        offset = abs(beta - b0)
        rows.append(
            {
                "beta": float(beta),
                "traj_dist": traj_dist,
                "gronwall_bound": final_bound,
                "attractor_dist": attractor_dist,
                "ratio": attractor_dist / offset if offset > 0 else 0.0,
                "k_B": k_b,
            }
        )
        logger.info(
            f"beta={beta}: traj_dist={traj_dist:.3e} (bound {final_bound:.3e}), "
            f"attractor_dist={attractor_dist:.3e}"
        )

    ordered = sorted(rows, key=lambda row: abs(row["beta"] - b0), reverse=True)
    distances = [row["attractor_dist"] for row in ordered]
    monotone = all(later <= earlier + tol for earlier, later in zip(distances, distances[1:]))
    report = SemicontinuityReport(rows=rows, monotone_decrease=monotone, violations=violations)
    if violations:
        first = violations[0]
        raise GronwallViolation(
            f"trajectory distance {first['distance']:.6g} exceeds Gronwall bound "
            f"{first['bound']:.6g} at beta={first['beta']}, t={first['t']:.6g}",
            report,
        )
    return report


def asymptotic_autonomy_check(
    g: TimeNonlinearity,
    u: Field,
    s: float,
    shifts: Sequence[float],
    cfg: ProcessConfig,
    kernel: DiscreteKernel,
    p: Exponent = 2,
) -> AutonomyReport:
    """
    Measure |S(s + tau_j, tau_j) u - S_0(s) u|_p along increasing tau_j.

    S_0 is the process of the autonomous limit g0.

    Raises:
        CapabilityError: If g has no autonomous limit.
    """
    if g.limit is None:
        raise CapabilityError(f"nonlinearity '{g.name}' has no autonomous limit")
    s = validate_positive(s, "s", allow_zero=True)
    shifts = validate_increasing(list(shifts), "shifts")
    limit_process = from_autonomous(g.limit)
    target = evolve(u, 0.0, s, cfg, kernel, limit_process)
    distances = [
        lp_distance(evolve(u, shift, shift + s, cfg, kernel, g), target, p) for shift in shifts
    ]
    decreasing = all(later <= earlier + 1e-12 for earlier, later in zip(distances, distances[1:]))
    return AutonomyReport(shifts=shifts, distances=distances, decreasing=decreasing)

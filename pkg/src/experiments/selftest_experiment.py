"""
Selftest experiment: closed-form examples for every numerical module.

Each check returns (passed, value). Checks are independent and run on small
grids, so the whole suite finishes in a few seconds.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, List, Tuple

import numpy as np

from config import RunConfig, parse_config
from src.dynamics.attractor import (
    absorbing_radius,
    decay_envelope_check,
    gradient_bound_check,
    pullback_omega_limit,
)
from src.dynamics.comparison import (
    OrderedTriple,
    invariant_interval_check,
    monotone_picard,
    subsolution_residual,
    verify_comparison,
)
from src.dynamics.evolution import ProcessConfig, Trajectory, integrate, picard_solve, rhs, step
from src.dynamics.exceptions import (
    CertificationError,
    CheckFailure,
    KernelError,
    PreconditionError,
    RangeError,
)
from src.dynamics.lyapunov import (
    build_energy_spec,
    convergence_verdict,
    dissipation_I,
    find_equilibria,
    lyapunov_value,
    remainder_R,
)
from src.dynamics.nonlinearity import (
    autonomous_saturating,
    certify_dissipativity,
    linear,
    lipschitz_estimate,
    saturating,
    with_claims,
    zero,
)
from src.dynamics.spatial import (
    Ensemble,
    apply_K,
    assemble_kernel,
    build_grid,
    hausdorff_semidist,
    lp_norm,
    uniform_kernel,
)
from src.experiments.base_experiment import BaseExperiment
from utils.validators import ValidationError

logger = logging.getLogger(__name__)

CheckResult = Tuple[bool, float]

CFG = ProcessConfig(dt=1e-2)


def _raises(func: Callable[[], Any], error: type) -> CheckResult:
    try:
        func()
    except error:
        return True, 1.0
    return False, 0.0


def _mean_problem(n: int = 11):
    grid = build_grid(0.0, 1.0, n)
    return grid, assemble_kernel(grid, uniform_kernel(grid.measure))


def check_trapezoid_two_points() -> CheckResult:
    grid = build_grid(0.0, 1.0, 2)
    ok = list(grid.nodes) == [0.0, 1.0] and list(grid.weights) == [0.5, 0.5]
    return ok, float(grid.weights[0])


def check_midpoint_weights() -> CheckResult:
    grid = build_grid(0.0, 1.0, 4, "midpoint")
    return bool(np.all(grid.weights == 0.25)), float(np.sum(grid.weights))


def check_weight_sum() -> CheckResult:
    grid = build_grid(-1.0, 1.0, 101)
    total = float(np.sum(grid.weights))
    return abs(grid.measure - 2.0) == 0 and abs(total - 2.0) < 1e-12, total


def check_unit_row_mass() -> CheckResult:
    grid = build_grid(0.0, 1.0, 10, "midpoint")
    kernel = assemble_kernel(grid, uniform_kernel(grid.measure, 1.0))
    worst = float(np.max(np.abs(kernel.row_mass - 1.0)))
    return worst < 1e-12, worst


def check_rejects_signed_kernel() -> CheckResult:
    grid = build_grid(0.0, 1.0, 5)
    return _raises(lambda: assemble_kernel(grid, lambda x, y: x - y), KernelError)


def check_mean_of_ramp() -> CheckResult:
    grid, kernel = _mean_problem()
    ku = apply_K(kernel, grid.sample(lambda x: x))
    error = float(np.max(np.abs(ku.values - 0.5)))
    return error < 1e-12, error


def check_mean_of_constant() -> CheckResult:
    grid, kernel = _mean_problem()
    error = float(np.max(np.abs(apply_K(kernel, grid.constant(3.0)).values - 3.0)))
    return error < 1e-12, error


def check_unit_norms() -> CheckResult:
    grid, _ = _mean_problem()
    one = grid.constant(1.0)
    l2, linf = lp_norm(one, 2), lp_norm(one, math.inf)
    return abs(l2 - 1.0) < 1e-12 and linf == 1.0, l2


def check_hausdorff_examples() -> CheckResult:
    grid, _ = _mean_problem(5)
    u = grid.sample(lambda x: x)
    v = grid.constant(2.0)
    origin = grid.zeros()
    same = hausdorff_semidist(Ensemble((u,)), Ensemble((u,)))
    inside = hausdorff_semidist(Ensemble((origin,)), Ensemble((origin, v)))
    to_origin = hausdorff_semidist(Ensemble((u, v)), Ensemble((origin,)))
    expected = max(lp_norm(u), lp_norm(v))
    ok = same == 0.0 and inside == 0.0 and abs(to_origin - expected) < 1e-12
    return ok, to_origin


def check_certificates() -> CheckResult:
    zero_certificate = certify_dissipativity(zero(), (0.0, 1.0), (-10.0, 10.0))
    certify_dissipativity(saturating(2.0, 1.0), (0.0, 1.0))
    failed, _ = _raises(
        lambda: certify_dissipativity(with_claims(linear(1.0), k1=0.5), (0.0, 1.0), (-10.0, 10.0)),
        CertificationError,
    )
    return zero_certificate.worst_ratio == 0.0 and failed, zero_certificate.worst_ratio


def check_lipschitz_of_saturating() -> CheckResult:
    estimate = lipschitz_estimate(saturating(2.0, 1.0), (0.0, 1.0), (-5.0, 5.0))
    flat = lipschitz_estimate(zero(), (0.0, 1.0), (-5.0, 5.0))
    return abs(estimate - 2.0) < 1e-6 and flat == 0.0, estimate


def check_limit_inverse() -> CheckResult:
    g0 = autonomous_saturating(2.0, 1.0)
    at_zero = float(g0.inverse(np.array([0.0]))[0])
    out_of_range, _ = _raises(lambda: g0.inverse(np.array([2.5])), RangeError)
    return at_zero == 0.0 and out_of_range, at_zero


def check_rhs_examples() -> CheckResult:
    grid, kernel = _mean_problem()
    decay = rhs(0.0, grid.constant(1.0), kernel, zero())
    ramp = grid.sample(lambda x: x)
    mean = rhs(0.0, ramp, kernel, linear(1.0))
    rest = rhs(0.0, grid.zeros(), kernel, saturating(2.0, 1.0))
    error = float(np.max(np.abs(mean.values - (0.5 - ramp.values))))
    ok = bool(np.all(decay.values == -1.0)) and error < 1e-12 and bool(np.all(rest.values == 0.0))
    return ok, error


def check_linear_step() -> CheckResult:
    grid, kernel = _mean_problem()
    after = step(0.0, grid.constant(1.0), 1.0, CFG, kernel, zero())
    error = float(np.max(np.abs(after.values - math.exp(-1.0))))
    return error <= 1e-16, error


def check_linear_decay() -> CheckResult:
    grid, kernel = _mean_problem()
    start = grid.constant(1.0)
    identity = integrate(start, 1.0, 1.0, CFG, kernel, zero())
    trajectory = integrate(start, 0.0, 2.0, CFG, kernel, zero())
    error = float(np.max(np.abs(trajectory.final.values - math.exp(-2.0))))
    ok = len(identity) == 1 and identity.final is start and error < 1e-14
    return ok, error


def check_picard_linear() -> CheckResult:
    grid, kernel = _mean_problem()
    solution = picard_solve(grid.constant(1.0), 0.0, 1.0, kernel, zero())
    error = float(np.max(np.abs(solution.values - math.exp(-1.0))))
    return error < 1e-12, error


def check_absorbing_radius() -> CheckResult:
    radius = absorbing_radius(0.0, 0.0, 1.0, 2, 0.1)
    return radius == 0.0, radius


def check_pure_decay_envelope() -> CheckResult:
    grid, kernel = _mean_problem()
    trajectory = integrate(grid.constant(1.0), 0.0, 1.0, CFG, kernel, zero())
    report = decay_envelope_check(trajectory, 0.0, 0.0, 2, 0.1)
    return report.ok, float(len(report.violations))


def check_zero_attractor() -> CheckResult:
    grid, kernel = _mean_problem(5)
    seed = Ensemble(tuple(grid.constant(level) for level in (-1.0, 0.0, 1.0)))
    estimate = pullback_omega_limit(0.0, seed, (1.0, 2.0, 4.0), CFG, kernel, zero())
    gradient = gradient_bound_check(estimate, 0.0, 0.0, estimate.max_norm)
    ok = estimate.max_norm <= math.exp(-4.0) * (1.0 + 1e-9) and estimate.containment_ok and gradient.ok
    return ok, estimate.max_norm


def check_equal_triple() -> CheckResult:
    grid, kernel = _mean_problem(5)
    g = saturating(2.0, 1.0)
    u = grid.constant(0.5)
    report = verify_comparison(OrderedTriple(g, g, g, u, u, u), 0.0, 1.0, CFG, kernel)
    return report.ordered and report.min_gap_lower == 0.0 and report.min_gap_upper == 0.0, report.min_gap_lower


def check_inverted_triple() -> CheckResult:
    grid, kernel = _mean_problem(5)
    g = saturating(2.0, 1.0)
    triple = OrderedTriple(g, g, g, grid.constant(1.0), grid.zeros(), grid.constant(2.0))
    return _raises(lambda: verify_comparison(triple, 0.0, 1.0, CFG, kernel), PreconditionError)


def check_constant_barrier() -> CheckResult:
    grid, kernel = _mean_problem(5)
    barrier = grid.constant(-2.0)
    trajectory = Trajectory(times=np.array([0.0, 0.5, 1.0]), states=(barrier, barrier, barrier))
    worst = float(np.max(subsolution_residual(trajectory, kernel, saturating(2.0, 1.0))))
    return worst <= 0.0, worst


def check_picard_fixed_point() -> CheckResult:
    grid, kernel = _mean_problem(5)
    iterates = monotone_picard(grid.zeros(), 0.0, 0.5, kernel, saturating(2.0, 1.0), 3)
    worst = max(float(np.max(np.abs(field.values))) for field in iterates)
    return worst == 0.0, worst


def check_trivial_invariant_interval() -> CheckResult:
    grid, kernel = _mean_problem(5)
    origin = grid.zeros()
    g = saturating(2.0, 1.0)
    report = invariant_interval_check(origin, origin, Ensemble((origin,)), 1.0, CFG, kernel, g)
    outside, _ = _raises(
        lambda: invariant_interval_check(
            origin, origin, Ensemble((grid.constant(1.0),)), 1.0, CFG, kernel, g
        ),
        PreconditionError,
    )
    return report.ok and outside, report.min_gap_lower


def check_energy_table() -> CheckResult:
    spec = build_energy_spec(autonomous_saturating(2.0, 1.0))
    at_zero = float(spec.i(np.array([0.0]))[0])
    asymmetry = abs(float(spec.f(np.array([1.0]))[0] - spec.f(np.array([-1.0]))[0]))
    return at_zero == 0.0 and asymmetry < 1e-10, asymmetry


def check_energy_at_minimizer() -> CheckResult:
    grid, kernel = _mean_problem(5)
    spec = build_energy_spec(autonomous_saturating(2.0, 1.0))
    energy = lyapunov_value(grid.constant(spec.u_bar), spec, kernel)
    return abs(energy.total) < 1e-10 and energy.l2 == 0.0, energy.total


def check_dissipation_and_remainder_vanish() -> CheckResult:
    grid, kernel = _mean_problem(5)
    g = saturating(2.0, 1.0)
    spec = build_energy_spec(g.limit)
    dissipation = dissipation_I(grid.zeros(), spec, kernel)
    remainder = remainder_R(3.0, grid.constant(1.0), g, spec, kernel)
    return dissipation == 0.0 and abs(remainder) < 1e-12, remainder


def check_equilibrium_verdict() -> CheckResult:
    grid, kernel = _mean_problem(5)
    g = saturating(2.0, 1.0)
    spec = build_energy_spec(g.limit)
    origin = grid.zeros()
    eq_set = find_equilibria(spec, kernel, Ensemble((origin,)))
    trajectory = integrate(origin, 0.0, 1.0, CFG, kernel, g)
    verdict = convergence_verdict(trajectory, eq_set)
    unchanged = len(eq_set) == 1 and bool(np.all(eq_set.members[0].values == 0.0))
    return unchanged and verdict.status == "converged" and verdict.final_dist == 0.0, verdict.final_dist


def check_config_defaults() -> CheckResult:
    config = parse_config("")
    defaults = (
        config.process.dt == 1e-2
        and config.p == 2.0
        and config.grid.rule == "trapezoid"
        and config.rng_seed == 42
    )
    try:
        parse_config("[kernell]\nkind = 'uniform'\n")
    except ValidationError as e:
        return defaults and "kernell" in str(e), config.process.dt
    return False, config.process.dt


CHECKS: Tuple[Tuple[str, Callable[[], CheckResult]], ...] = (
    ("grid.trapezoid_two_points", check_trapezoid_two_points),
    ("grid.midpoint_weights", check_midpoint_weights),
    ("grid.weight_sum", check_weight_sum),
    ("kernel.unit_row_mass", check_unit_row_mass),
    ("kernel.rejects_signed", check_rejects_signed_kernel),
    ("apply_K.mean_of_ramp", check_mean_of_ramp),
    ("apply_K.mean_of_constant", check_mean_of_constant),
    ("lp_norm.unit_constant", check_unit_norms),
    ("hausdorff.examples", check_hausdorff_examples),
    ("nonlinearity.certificates", check_certificates),
    ("nonlinearity.lipschitz", check_lipschitz_of_saturating),
    ("nonlinearity.limit_inverse", check_limit_inverse),
    ("evolution.rhs", check_rhs_examples),
    ("evolution.linear_step", check_linear_step),
    ("evolution.linear_decay", check_linear_decay),
    ("evolution.picard_linear", check_picard_linear),
    ("attractor.absorbing_radius", check_absorbing_radius),
    ("attractor.pure_decay", check_pure_decay_envelope),
    ("attractor.zero_attractor", check_zero_attractor),
    ("comparison.equal_triple", check_equal_triple),
    ("comparison.inverted_triple", check_inverted_triple),
    ("comparison.constant_barrier", check_constant_barrier),
    ("comparison.picard_fixed_point", check_picard_fixed_point),
    ("comparison.trivial_interval", check_trivial_invariant_interval),
    ("lyapunov.energy_table", check_energy_table),
    ("lyapunov.energy_at_minimizer", check_energy_at_minimizer),
    ("lyapunov.vanishing_terms", check_dissipation_and_remainder_vanish),
    ("lyapunov.equilibrium_verdict", check_equilibrium_verdict),
    ("config.defaults", check_config_defaults),
)


def run_check(entry: Tuple[str, Callable[[], CheckResult]]) -> Dict[str, Any]:
    name, check = entry
    try:
        passed, value = check()
        error = None
    except Exception as e:
        logger.error(f"Selftest check {name} raised: {e}", exc_info=True)
        passed, value, error = False, math.nan, f"{type(e).__name__}: {e}"
    if not passed:
        logger.warning(f"Selftest check {name} failed (value {value})")
    return {"name": name, "passed": bool(passed), "value": float(value), "error": error}


class SelftestExperiment(BaseExperiment):
    """Experiment writing selftest.json."""

    def __init__(self, emitter, threads: int = 1) -> None:
        super().__init__("selftest", emitter, threads)

    def process(self, config: RunConfig) -> Dict[str, Any]:
        logger.info(f"Step 1: Running {len(CHECKS)} selftest checks...")
        # map keeps CHECKS order regardless of thread count
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            results: List[Dict[str, Any]] = list(pool.map(run_check, CHECKS))
        failed = [result["name"] for result in results if not result["passed"]]
        payload = {"checks": results, "total": len(results), "failed": failed}
        self.emitter.write_json("selftest.json", payload)
        logger.info(f"Selftest: {len(results) - len(failed)}/{len(results)} checks passed")
        if failed:
            raise CheckFailure(f"selftest checks failed: {', '.join(failed)}", payload)
        return {"success": True, "artifacts": self._artifacts(), "failed": failed}

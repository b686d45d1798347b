"""
Attractor experiment: pullback estimate of A(t) with containment and gradient checks.
"""

import logging
import math
from typing import Any, Dict

import numpy as np

from config import RunConfig
from src.dynamics.attractor import (
    AttractorEstimate,
    absorbing_radius,
    gradient_bound_check,
    pullback_omega_limit,
)
from src.dynamics.exceptions import CheckFailure
from src.dynamics.nonlinearity import lipschitz_estimate
from src.dynamics.spatial import conjugate_exponent, default_seed, kernel_lq_norm
from src.experiments.base_experiment import BaseExperiment

logger = logging.getLogger(__name__)

SEED_RADIUS_FACTOR = 1.5


def member_columns(estimate: AttractorEstimate) -> Dict[str, Any]:
    members = estimate.ensemble
    matrix = members.matrix()
    columns: Dict[str, Any] = {"member": list(range(len(members)))}
    for j, x in enumerate(members.grid.nodes):
        columns[f"x={x:.17g}"] = matrix[:, j]
    return columns


class AttractorExperiment(BaseExperiment):
    """Experiment writing attractor.json and members.csv."""

    def __init__(self, emitter, threads: int = 1) -> None:
        super().__init__("attractor", emitter, threads)

    def process(self, config: RunConfig) -> Dict[str, Any]:
        """
        Estimate A(t) and check it against the absorbing ball.

        Raises:
            CheckFailure: If the estimate leaves the ball (after writing the artifacts).
        """
        problem = self._setup(config)
        spec = config.attractor
        g = problem.g

        # Seeds span 1.5 times the sup-norm absorbing radius unless a radius is configured
        radius = spec.seed_radius
        if radius is None:
            ball = absorbing_radius(g.k1, g.k2, problem.grid.measure, math.inf, 0.0)
            radius = SEED_RADIUS_FACTOR * ball or 1.0
        seed = default_seed(
            problem.grid, radius, config.rng_seed, spec.seed_constants, spec.seed_random
        )

        logger.info(f"Step 1: Pullback runs for A({spec.t}) from {len(seed)} seeds...")
        estimate = pullback_omega_limit(
            spec.t, seed, spec.depths, config.process, problem.kernel, g,
            spec.tol, config.p, self.threads,
        )
        self.emitter.write_table("members.csv", member_columns(estimate))

        logger.info("Step 2: Checking the gradient bound...")
        sup = float(np.max(np.abs(estimate.ensemble.matrix()))) * max(1.0, problem.kernel.max_row_mass)
        k3 = lipschitz_estimate(g, (spec.t - spec.depths[-1], spec.t), (-sup - 1.0, sup + 1.0))
        C = kernel_lq_norm(problem.kernel, conjugate_exponent(config.p), derivative=True)
        gradient = gradient_bound_check(estimate, C, k3, estimate.max_norm)

        report = estimate.to_dict()
        report.update(
            {
                "members_csv_path": "members.csv",
                "distinct_members": len(estimate.distinct()),
                "seed_radius": radius,
                "absorbing_radius": absorbing_radius(
                    g.k1, g.k2, problem.grid.measure, config.p, spec.delta
                ),
                "gradient": {
                    "bound": gradient.bound,
                    "max_gradient": gradient.max_gradient,
                    "ok": gradient.ok,
                },
            }
        )
        self.emitter.write_json("attractor.json", report)

        if not estimate.containment_ok:
            raise CheckFailure(
                f"attractor estimate leaves the absorbing ball: max norm {estimate.max_norm:.6g} "
                f"> radius {estimate.radius:.6g}",
                report,
            )
        logger.info(f"Attractor estimate completed (converged: {estimate.converged})")
        return {"success": True, "artifacts": self._artifacts(), "report": report}

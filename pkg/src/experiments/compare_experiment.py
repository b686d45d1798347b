"""
Compare experiment: sub/super-solution ordering along an ordered triple.
"""

import logging
from typing import Any, Dict

from config import RunConfig
from src.dynamics.catalog import field_from_spec, nonlinearity_from_spec
from src.dynamics.comparison import OrderedTriple, verify_comparison
from src.dynamics.exceptions import OrderingViolation
from src.experiments.base_experiment import BaseExperiment

logger = logging.getLogger(__name__)


class CompareExperiment(BaseExperiment):
    """Experiment writing compare.json."""

    def __init__(self, emitter, threads: int = 1) -> None:
        super().__init__("compare", emitter, threads)

    def process(self, config: RunConfig) -> Dict[str, Any]:
        """
        Integrate the f-, g- and h-problems and check v <= u <= V.

        Raises:
            PreconditionError: If the triple or its initial data are not ordered.
            OrderingViolation: If the ordering breaks; compare.json is written first.
        """
        problem = self._setup(config)
        spec = config.compare
        grid = problem.grid
        triple = OrderedTriple(
            f=nonlinearity_from_spec(spec.lower),
            g=problem.g,
            h=nonlinearity_from_spec(spec.upper),
            v_tau=field_from_spec(spec.v_tau, grid, config.rng_seed),
            u_tau=field_from_spec(spec.u_tau, grid, config.rng_seed),
            V_tau=field_from_spec(spec.V_tau, grid, config.rng_seed),
        )

        logger.info(f"Step 1: Verifying ordering on [{spec.tau}, {spec.t}]...")
        try:
            report = verify_comparison(
                triple, spec.tau, spec.t, config.process, problem.kernel, self.threads
            )
        except OrderingViolation as e:
            self.emitter.write_json("compare.json", e.report.to_dict())
            raise

        payload = report.to_dict()
        self.emitter.write_json("compare.json", payload)
        return {"success": True, "artifacts": self._artifacts(), "report": payload}

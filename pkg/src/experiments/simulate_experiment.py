"""
Simulate experiment: integrate one trajectory and summarize it.
"""

import logging
import math
from typing import Any, Dict, Optional

from config import RunConfig
from src.dynamics.attractor import decay_envelope_check
from src.dynamics.catalog import field_from_spec
from src.dynamics.evolution import Trajectory, integrate, step_count
from src.dynamics.spatial import lp_norm
from src.experiments.base_experiment import BaseExperiment

logger = logging.getLogger(__name__)


def trajectory_columns(trajectory: Trajectory) -> Dict[str, Any]:
    """Column 't' followed by one column per node, headed by its coordinate."""
    matrix = trajectory.matrix()
    columns: Dict[str, Any] = {"t": trajectory.times}
    for j, x in enumerate(trajectory.grid.nodes):
        columns[f"x={x:.17g}"] = matrix[:, j]
    return columns


class SimulateExperiment(BaseExperiment):
    """Experiment writing trajectory.csv and summary.json."""

    def __init__(self, emitter, threads: int = 1) -> None:
        super().__init__("simulate", emitter, threads)

    def process(self, config: RunConfig) -> Dict[str, Any]:
        problem = self._setup(config)
        spec = config.simulate
        cfg = config.process
        u_tau = field_from_spec(spec.initial, problem.grid, config.rng_seed)

        logger.info(f"Step 1: Integrating on [{spec.tau}, {spec.t}] with {cfg.method}, dt={cfg.dt}")
        trajectory = integrate(
            u_tau, spec.tau, spec.t, cfg, problem.kernel, problem.g, spec.record_every
        )
        self.emitter.write_table("trajectory.csv", trajectory_columns(trajectory))

        logger.info("Step 2: Checking the decay envelope...")
        decay: Optional[Dict[str, Any]] = None
        if 0 <= problem.g.k1 < 1:
            report = decay_envelope_check(
                trajectory, problem.g.k1, problem.g.k2, config.p, spec.delta, dt=cfg.dt
            )
            decay = {
                "radius": report.radius,
                "rate": report.rate,
                "samples_outside": report.samples_outside,
                "violations": len(report.violations),
                "entry_time": report.entry_time,
                "ok": report.ok,
            }
        else:
            logger.warning(f"Skipping decay envelope: k1 = {problem.g.k1} is not in [0, 1)")

        final = trajectory.final
        summary = {
            "nonlinearity": problem.g.name,
            "kernel": problem.kernel.name,
            "tau": spec.tau,
            "t": spec.t,
            "steps": step_count(spec.tau, spec.t, cfg.dt),
            "samples": len(trajectory),
            "final_norms": {
                "l1": lp_norm(final, 1),
                "l2": lp_norm(final, 2),
                "linf": lp_norm(final, math.inf),
                "p": lp_norm(final, config.p),
            },
            "decay": decay,
        }
        self.emitter.write_json("summary.json", summary)
        logger.info("Simulation completed successfully")
        return {"success": True, "artifacts": self._artifacts(), "summary": summary}

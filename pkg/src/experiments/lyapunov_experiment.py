"""
Lyapunov experiment: energy along a trajectory, equilibria of the limit and a verdict.
"""

import logging
import math
from typing import Any, Dict, List, Optional

import numpy as np

from config import RunConfig
from src.dynamics.catalog import field_from_spec, limit_from_spec
from src.dynamics.evolution import Trajectory, integrate
from src.dynamics.exceptions import RangeError
from src.dynamics.lyapunov import (
    EnergySpec,
    EquilibriumSet,
    build_energy_spec,
    convergence_verdict,
    dissipation_I,
    energy_decay_check,
    find_equilibria,
    lyapunov_value,
    remainder_R,
)
from src.dynamics.nonlinearity import TimeNonlinearity
from src.dynamics.spatial import DiscreteKernel, Ensemble, Field, constant_fields, lp_distance
from src.experiments.base_experiment import BaseExperiment
from utils.validators import ValidationError

logger = logging.getLogger(__name__)

ENERGY_COLUMNS = ("t", "L", "L1", "L2", "I", "R", "dist_to_nearest_eq")


def _remainder(
    t: float, state: Field, g: TimeNonlinearity, spec: EnergySpec, kernel: DiscreteKernel, exact: bool
) -> float:
    if exact:
        return 0.0
    try:
        return remainder_R(t, state, g, spec, kernel)
    except RangeError:
        return math.nan


def energy_rows(
    trajectory: Trajectory,
    g: TimeNonlinearity,
    spec: EnergySpec,
    kernel: DiscreteKernel,
    eq_set: EquilibriumSet,
    p: float,
) -> Dict[str, List[float]]:
    """
    Per-sample energy table; L, I and R are NaN where the state is outside Y
    (or outside the range of g(t, .) for R).
    """
    exact = g.autonomous and g.limit is spec.g0
    rows: Dict[str, List[float]] = {name: [] for name in ENERGY_COLUMNS}
    for t, state in zip(trajectory.times, trajectory.states):
        t = float(t)
        rows["t"].append(t)
        rows["dist_to_nearest_eq"].append(
            min((lp_distance(state, member, p) for member in eq_set.members), default=math.inf)
        )
        if float(np.max(np.abs(state.values))) >= spec.a:
            for name in ("L", "L1", "L2", "I", "R"):
                rows[name].append(math.nan)
            continue
        energy = lyapunov_value(state, spec, kernel)
        rows["L"].append(energy.total)
        rows["L1"].append(energy.l1)
        rows["L2"].append(energy.l2)
        rows["I"].append(dissipation_I(state, spec, kernel))
        rows["R"].append(_remainder(t, state, g, spec, kernel, exact))
    return rows


def _energy_tail(trajectory: Trajectory, rows: Dict[str, List[float]]) -> Optional[Trajectory]:
    """Samples after the last one where the energy terms are undefined."""
    undefined = [k for k, value in enumerate(rows["R"]) if math.isnan(value)]
    start = undefined[-1] + 1 if undefined else 0
    if len(trajectory) - start < 3:
        return None
    return Trajectory(times=trajectory.times[start:], states=trajectory.states[start:])


class LyapunovExperiment(BaseExperiment):
    """Experiment writing lyapunov.csv and verdict.json."""

    def __init__(self, emitter, threads: int = 1) -> None:
        super().__init__("lyapunov", emitter, threads)

    def process(self, config: RunConfig) -> Dict[str, Any]:
        """
        Track L along a trajectory and decide which equilibrium level it approaches.

        Raises:
            ValidationError: If no autonomous limit is available, or g has no
                inverse while the remainder R is needed.
        """
        problem = self._setup(config)
        spec = config.lyapunov
        g = problem.g
        g0 = limit_from_spec(config.limit, g)
        if g0 is None:
            raise ValidationError(
                f"lyapunov needs an autonomous limit: '{g.name}' has none, add a [limit] table"
            )
        if not (g.autonomous and g.limit is g0) and not g.has_inverse:
            raise ValidationError(f"lyapunov needs g with an inverse in x, '{g.name}' has none")

        logger.info("Step 1: Building the energy tables...")
        energy_spec = build_energy_spec(g0, spec.resolution, spec.exterior_coupling)

        logger.info(f"Step 2: Integrating on [{spec.tau}, {spec.t}]...")
        u_tau = field_from_spec(spec.initial, problem.grid, config.rng_seed)
        trajectory = integrate(
            u_tau, spec.tau, spec.t, config.process, problem.kernel, g, spec.record_every
        )

        logger.info("Step 3: Solving for equilibria of the limit...")
        levels = spec.seed_levels or tuple(np.linspace(-1.5 * g0.a, 1.5 * g0.a, 7))
        seeds = constant_fields(problem.grid, levels)
        if float(np.max(np.abs(trajectory.final.values))) < g0.a:
            seeds = seeds + (trajectory.final,)
        eq_set = find_equilibria(
            energy_spec, problem.kernel, Ensemble(seeds, label="equilibrium seeds"),
            spec.equilibrium_tol, max_workers=self.threads,
        )

        logger.info("Step 4: Energy along the trajectory...")
        rows = energy_rows(trajectory, g, energy_spec, problem.kernel, eq_set, config.p)
        self.emitter.write_table("lyapunov.csv", rows)

        energy_check: Optional[Dict[str, Any]] = None
        tail = _energy_tail(trajectory, rows)
        if tail is None:
            logger.warning("Trajectory does not stay in Y long enough for the energy check")
        else:
            report = energy_decay_check(tail, g, energy_spec, problem.kernel)
            energy_check = {
                "from_t": float(tail.times[0]),
                "max_fd_mismatch": report.max_fd_mismatch,
                "violations": len(report.violations),
                "monotone_violations": len(report.monotone_violations),
                "autonomous": report.autonomous,
                "ok": report.ok,
            }

        logger.info("Step 5: Convergence verdict...")
        verdict = convergence_verdict(trajectory, eq_set, config.p, spec.verdict_tol)
        payload = verdict.to_dict()
        payload.update(
            {
                "limit": g0.name,
                "u_bar": energy_spec.u_bar,
                "f_min": energy_spec.f_min,
                "levels": list(eq_set.levels),
                "equilibria": [
                    {
                        "energy": energy,
                        "level": level,
                        "residual": residual,
                        "mean": float(np.mean(member.values)),
                        "sup": float(np.max(np.abs(member.values))),
                    }
                    for member, energy, level, residual in zip(
                        eq_set.members, eq_set.energies, eq_set.level_of, eq_set.residuals
                    )
                ],
                "energy_check": energy_check,
            }
        )
        self.emitter.write_json("verdict.json", payload)
        logger.info(f"Verdict: {verdict.status}")
        return {"success": True, "artifacts": self._artifacts(), "verdict": payload}

"""
Orchestrator for the nonlocal evolution toolkit.

Dispatches a validated run configuration to the experiment of a subcommand.
"""

import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Type, Union

# Ensure project root is in path
project_root = Path(__file__).parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

from config import RunConfig, get_settings
from src.dynamics.exceptions import CheckFailure
from src.experiments import (
    AttractorExperiment,
    CompareExperiment,
    LyapunovExperiment,
    SelftestExperiment,
    SimulateExperiment,
    SweepExperiment,
)
from src.experiments.base_experiment import BaseExperiment
from utils.emitter import ArtifactEmitter
from utils.validators import ValidationError, validate_choice, validate_count

logger = logging.getLogger(__name__)

EXPERIMENTS: Dict[str, Type[BaseExperiment]] = {
    "simulate": SimulateExperiment,
    "attractor": AttractorExperiment,
    "compare": CompareExperiment,
    "lyapunov": LyapunovExperiment,
    "sweep": SweepExperiment,
    "selftest": SelftestExperiment,
}


class ExperimentOrchestrator:
    """Runs one subcommand against a run configuration."""

    def __init__(
        self,
        output_dir: Union[str, Path],
        threads: Optional[int] = None,
    ) -> None:
        """
        Initialize the orchestrator.

        Args:
            output_dir: Directory receiving the artifacts.
            threads: Worker threads; falls back to NONLOCAL_THREADS, then 1.
        """
        self.threads = validate_count(threads if threads is not None else get_settings().threads, "threads")
        self.emitter = ArtifactEmitter(output_dir)
        logger.info(f"Experiment orchestrator initialized ({self.emitter.output_dir}, {self.threads} thread(s))")

    def run(self, command: str, config: RunConfig) -> Dict[str, Any]:
        """
        Run a subcommand.

        Args:
            command: One of simulate, attractor, compare, lyapunov, sweep, selftest.
            config: Validated run configuration.

        Returns:
            Results dictionary of the experiment.

        Raises:
            ValidationError: If the command or the configuration is invalid.
            CheckFailure: If a verified property fails.
            RuntimeError: If the run fails for any other reason.
        """
        try:
            command = validate_choice(command, EXPERIMENTS, "command")
            experiment = EXPERIMENTS[command](self.emitter, self.threads)

            logger.info(f"Starting {command} (rng_seed={config.rng_seed})")
            result = experiment.process(config)
            logger.info(f"{command} completed successfully")
            return result

        except ValidationError as e:
            logger.error(f"Validation error: {e}")
            raise

        except CheckFailure as e:
            logger.error(f"Check failed: {e}")
            raise

        except Exception as e:
            logger.error(f"Error in {command}: {e}", exc_info=True)
            raise RuntimeError(f"Failed to run {command}: {e}") from e

"""
Base experiment class for the nonlocal evolution toolkit.

Provides the problem setup shared by all subcommands.
"""

import logging
import sys
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict

# Add parent directory to path for imports
project_root = Path(__file__).parent.parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

from config import RunConfig
from src.dynamics.catalog import grid_from_spec, kernel_from_spec, nonlinearity_from_spec
from src.dynamics.nonlinearity import TimeNonlinearity
from src.dynamics.spatial import DiscreteKernel, SpatialGrid
from utils.emitter import ArtifactEmitter

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Problem:
    """Grid, kernel and nonlinearity of one run."""

    grid: SpatialGrid
    kernel: DiscreteKernel
    g: TimeNonlinearity


class BaseExperiment(ABC):
    """Base class for all subcommand experiments."""

    def __init__(self, name: str, emitter: ArtifactEmitter, threads: int = 1) -> None:
        """
        Initialize the base experiment.

        Args:
            name: Name of the experiment (the subcommand).
            emitter: Serialized writer for the run's artifacts.
            threads: Worker threads for independent trajectories.
        """
        self.name = name
        self.emitter = emitter
        self.threads = threads
        logger.info(f"Initialized {self.name} experiment ({self.threads} thread(s))")

    @abstractmethod
    def process(self, config: RunConfig) -> Dict[str, Any]:
        """
        Run the experiment and write its artifacts.

        Args:
            config: Validated run configuration.

        Returns:
            Results dictionary with at least 'success' and 'artifacts'.
        """
        pass

    def _setup(self, config: RunConfig) -> Problem:
        """Build grid, kernel and nonlinearity from the shared config blocks."""
        grid = grid_from_spec(config.grid)
        kernel = kernel_from_spec(config.kernel, grid, config.base_dir)
        g = nonlinearity_from_spec(config.nonlinearity)
        logger.info(f"Problem: {grid.n}-node {grid.rule} grid on ({grid.a}, {grid.b}), "
                    f"kernel '{kernel.name}', g = {g.name}")
        return Problem(grid=grid, kernel=kernel, g=g)

    def _artifacts(self) -> list:
        return [path.name for path in self.emitter.written]

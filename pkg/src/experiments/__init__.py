"""Experiments package: one experiment per CLI subcommand."""

from src.experiments.attractor_experiment import AttractorExperiment
from src.experiments.compare_experiment import CompareExperiment
from src.experiments.lyapunov_experiment import LyapunovExperiment
from src.experiments.selftest_experiment import SelftestExperiment
from src.experiments.simulate_experiment import SimulateExperiment
from src.experiments.sweep_experiment import SweepExperiment

__all__ = [
    "SimulateExperiment",
    "AttractorExperiment",
    "CompareExperiment",
    "LyapunovExperiment",
    "SweepExperiment",
    "SelftestExperiment",
]

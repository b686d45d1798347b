"""
Tests for sub/super-solution residuals, ordered triples, monotone Picard
iteration and invariant intervals.
"""

import numpy as np
import pytest

from src.dynamics.comparison import (
    OrderedTriple,
    invariant_interval_check,
    monotone_picard,
    ordering_tolerance,
    subsolution_residual,
    supersolution_residual,
    verify_comparison,
)
from src.dynamics.evolution import ProcessConfig, Trajectory, integrate
from src.dynamics.exceptions import (
    DomainError,
    InvariantEscape,
    MonotonicityViolation,
    PreconditionError,
)
from src.dynamics.nonlinearity import linear, shifted
from src.dynamics.spatial import Ensemble
from utils.validators import ValidationError


def constant_trajectory(field, times=(0.0, 0.5, 1.0)):
    return Trajectory(times=np.array(times), states=tuple(field for _ in times))


class TestResiduals:
    def test_lower_constant_barrier(self, small_grid, small_kernel, g):
        residual = subsolution_residual(constant_trajectory(small_grid.constant(-2.0)), small_kernel, g)
        assert np.all(residual <= 0.0)

    def test_upper_constant_barrier(self, small_grid, small_kernel, g):
        residual = supersolution_residual(constant_trajectory(small_grid.constant(2.0)), small_kernel, g)
        assert np.all(residual <= 0.0)

    def test_solution_has_small_residual(self, grid, mean_kernel, g):
        trajectory = integrate(grid.sample(lambda x: x), 0.0, 1.0, ProcessConfig(dt=1e-3), mean_kernel, g)
        assert np.max(np.abs(subsolution_residual(trajectory, mean_kernel, g))) < 1e-2

    def test_needs_three_samples(self, small_grid, small_kernel, g):
        with pytest.raises(DomainError):
            subsolution_residual(constant_trajectory(small_grid.zeros(), (0.0, 1.0)), small_kernel, g)


class TestVerifyComparison:
    def test_equal_triple_has_zero_gaps(self, small_grid, small_kernel, cfg, g):
        u = small_grid.constant(0.5)
        report = verify_comparison(OrderedTriple(g, g, g, u, u, u), 0.0, 1.0, cfg, small_kernel)
        assert report.ordered
        assert report.min_gap_lower == 0.0 and report.min_gap_upper == 0.0
        assert report.first_violation is None

    def test_shifted_triple_stays_ordered(self, grid, mean_kernel, cfg, g):
        triple = OrderedTriple(
            shifted(2.0, 1.0, -0.1), g, shifted(2.0, 1.0, 0.1),
            grid.constant(-1.0), grid.sample(lambda x: 0.5 * np.sin(6.0 * x)), grid.constant(1.0),
        )
        report = verify_comparison(triple, 0.0, 10.0, cfg, mean_kernel, max_workers=3)
        assert report.ordered
        assert report.min_gap_lower >= -1e-8
        assert report.min_gap_upper >= -1e-8
        assert report.tol == ordering_tolerance(cfg.dt)

    def test_inverted_initial_data(self, small_grid, small_kernel, cfg, g):
        triple = OrderedTriple(g, g, g, small_grid.constant(1.0), small_grid.zeros(), small_grid.constant(2.0))
        with pytest.raises(PreconditionError, match="v_tau <= u_tau"):
            verify_comparison(triple, 0.0, 1.0, cfg, small_kernel)

    def test_unordered_nonlinearities(self, small_grid, small_kernel, cfg, g):
        u = small_grid.zeros()
        triple = OrderedTriple(shifted(2.0, 1.0, 0.1), g, g, u, u, u)
        with pytest.raises(PreconditionError, match="f <= g"):
            verify_comparison(triple, 0.0, 1.0, cfg, small_kernel)

    def test_decreasing_bound(self, small_grid, small_kernel, cfg, g):
        u = small_grid.zeros()
        triple = OrderedTriple(linear(-1.0), g, g, u, u, u)
        with pytest.raises(PreconditionError, match="increasing"):
            verify_comparison(triple, 0.0, 1.0, cfg, small_kernel)

    def test_precondition_is_a_configuration_error(self):
        assert issubclass(PreconditionError, ValidationError)


class TestMonotonePicard:
    def test_fixed_point(self, small_grid, small_kernel, g):
        iterates = monotone_picard(small_grid.zeros(), 0.0, 0.5, small_kernel, g, 3)
        assert all(np.all(field.values == 0.0) for field in iterates)

    @pytest.mark.parametrize("level, direction", [(-1.0, 1.0), (1.0, -1.0)])
    def test_iterates_move_monotonically(self, small_grid, small_kernel, g, level, direction):
        iterates = monotone_picard(
            small_grid.zeros(), 0.0, 0.5, small_kernel, g, 12, start=small_grid.constant(level)
        )
        for earlier, later in zip(iterates, iterates[1:]):
            assert np.all(direction * (later.values - earlier.values) >= -1e-10)
        assert np.max(np.abs(iterates[-1].values)) < 1e-6

    def test_unordered_start(self, small_grid, small_kernel, g):
        start = small_grid.sample(lambda x: 2.0 * x - 1.0)
        with pytest.raises(MonotonicityViolation) as excinfo:
            monotone_picard(small_grid.zeros(), 0.0, 0.5, small_kernel, g, 3, start=start)
        assert excinfo.value.report["iterate"] == 1

    def test_needs_increasing_nonlinearity(self, small_grid, small_kernel):
        with pytest.raises(PreconditionError):
            monotone_picard(small_grid.zeros(), 0.0, 0.5, small_kernel, linear(-1.0), 2)


class TestInvariantInterval:
    @pytest.fixture
    def bounds(self, grid, c_star):
        return grid.constant(-c_star), grid.constant(c_star)

    def test_trivial_interval(self, small_grid, small_kernel, cfg, g):
        origin = small_grid.zeros()
        report = invariant_interval_check(origin, origin, Ensemble((origin,)), 1.0, cfg, small_kernel, g)
        assert report.ok
        assert report.members == 1

    def test_equilibria_bracket_the_flow(self, grid, mean_kernel, cfg, g, bounds):
        lower, upper = bounds
        samples = Ensemble(
            (grid.constant(-1.5), grid.zeros(), grid.constant(1.5), grid.sample(lambda x: 1.8 * x - 0.9))
        )
        report = invariant_interval_check(lower, upper, samples, 5.0, cfg, mean_kernel, g, max_workers=2)
        assert report.ok
        assert report.escape is None
        assert report.min_gap_lower > -1e-12 and report.min_gap_upper > -1e-12

    def test_sample_outside(self, grid, mean_kernel, cfg, g, bounds):
        lower, upper = bounds
        with pytest.raises(PreconditionError, match="outside"):
            invariant_interval_check(lower, upper, Ensemble((grid.constant(2.0),)), 1.0, cfg, mean_kernel, g)

    def test_reversed_bounds(self, grid, mean_kernel, cfg, g, bounds):
        lower, upper = bounds
        with pytest.raises(PreconditionError):
            invariant_interval_check(upper, lower, Ensemble((grid.zeros(),)), 1.0, cfg, mean_kernel, g)

    def test_upper_bound_must_be_a_super_equilibrium(self, grid, mean_kernel, cfg, g, bounds):
        lower, _ = bounds
        with pytest.raises(PreconditionError, match="super-equilibrium"):
            invariant_interval_check(
                lower, grid.constant(0.5), Ensemble((grid.zeros(),)), 1.0, cfg, mean_kernel, g
            )

    def test_escape_under_a_larger_nonlinearity(self, grid, mean_kernel, cfg, g, bounds):
        lower, upper = bounds
        with pytest.raises(InvariantEscape) as excinfo:
            invariant_interval_check(
                lower, upper, Ensemble((upper,)), 1.0, cfg, mean_kernel, shifted(2.0, 1.0, 0.5), f=g, h=g
            )
        assert not excinfo.value.report.ok
        assert excinfo.value.report.escape["member"] == 0

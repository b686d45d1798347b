"""
Tests for absorption, pullback attractor estimates, gradient bounds,
semicontinuity and asymptotic autonomy.
"""

import math

import numpy as np
import pytest

from src.dynamics.attractor import (
    absorbing_radius,
    asymptotic_autonomy_check,
    decay_envelope_check,
    gradient_bound_check,
    pullback_omega_limit,
    residual_tail_monotone,
    semicontinuity_experiment,
)
from src.dynamics.evolution import integrate
from src.dynamics.exceptions import CapabilityError, DimensionError, DomainError
from src.dynamics.nonlinearity import modulated, periodic, shifted, zero
from src.dynamics.spatial import Ensemble, constant_fields, lp_norm
from utils.validators import ValidationError


class TestAbsorbingRadius:
    @pytest.mark.parametrize(
        "k1, k2, measure, p, delta, expected",
        [
            (0.0, 2.0, 1.0, 2, 0.1, 2.2),
            (0.0, 2.0, 4.0, 2, 0.0, 4.0),
            (0.5, 1.0, 1.0, math.inf, 0.0, 2.0),
            (0.0, 0.0, 1.0, 2, 0.1, 0.0),
        ],
    )
    def test_formula(self, k1, k2, measure, p, delta, expected):
        assert abs(absorbing_radius(k1, k2, measure, p, delta) - expected) < 1e-12

    def test_requires_k1_below_one(self):
        with pytest.raises(DomainError):
            absorbing_radius(1.0, 2.0, 1.0, 2, 0.1)


class TestDecayEnvelope:
    def test_large_state_enters_the_ball(self, grid, mean_kernel, cfg, g):
        trajectory = integrate(grid.constant(10.0), 0.0, 10.0, cfg, mean_kernel, g, record_every=10)
        report = decay_envelope_check(trajectory, g.k1, g.k2, 2, 0.1)
        assert report.ok
        assert report.samples_outside > 0
        assert report.entry_time is not None and report.entry_time < 5.0
        assert lp_norm(trajectory.final) < 2.2

    def test_pure_decay(self, grid, mean_kernel, cfg):
        trajectory = integrate(grid.constant(1.0), 0.0, 1.0, cfg, mean_kernel, zero())
        report = decay_envelope_check(trajectory, 0.0, 0.0, 2, 0.1)
        assert report.ok
        assert report.radius == 0.0
        assert report.samples_outside == len(trajectory)


class TestPullback:
    def test_zero_nonlinearity_collapses_to_the_origin(self, small_grid, small_kernel, cfg):
        seed = Ensemble(constant_fields(small_grid, (-1.0, 0.0, 1.0)))
        estimate = pullback_omega_limit(0.0, seed, (1.0, 2.0, 4.0), cfg, small_kernel, zero())
        assert estimate.max_norm <= math.exp(-4.0) * (1.0 + 1e-9)
        assert estimate.containment_ok
        assert gradient_bound_check(estimate, 0.0, 0.0, estimate.max_norm).ok

    def test_saturating_attractor_is_three_constants(self, grid, mean_kernel, cfg, g, c_star):
        seed = Ensemble(constant_fields(grid, (-2.2, -1.4, -0.7, 0.0, 0.7, 1.4, 2.2)))
        estimate = pullback_omega_limit(0.0, seed, (5.0, 10.0, 20.0, 40.0), cfg, mean_kernel, g)
        assert estimate.converged
        assert len(estimate.residuals) == 3
        assert estimate.residuals[-1] < 1e-4
        assert estimate.containment_ok
        assert estimate.radius == 2.0
        targets = (-c_star, 0.0, c_star)
        for member in estimate.ensemble:
            assert min(np.max(np.abs(member.values - level)) for level in targets) < 1e-3
        distinct = estimate.distinct()
        assert len(distinct) == 3

    def test_parallel_runs_match_serial(self, grid, mean_kernel, cfg, g):
        seed = Ensemble(constant_fields(grid, (-1.0, 0.5, 2.0)))
        serial = pullback_omega_limit(0.0, seed, (1.0, 2.0), cfg, mean_kernel, g, max_workers=1)
        parallel = pullback_omega_limit(0.0, seed, (1.0, 2.0), cfg, mean_kernel, g, max_workers=4)
        np.testing.assert_array_equal(serial.ensemble.matrix(), parallel.ensemble.matrix())
        assert serial.residuals == parallel.residuals

    def test_report_fields(self, small_grid, small_kernel, cfg, g):
        seed = Ensemble(constant_fields(small_grid, (0.0,)))
        report = pullback_omega_limit(1.0, seed, (1.0, 2.0), cfg, small_kernel, g).to_dict()
        assert report["depths"] == [1.0, 2.0]
        assert report["members"] == 1
        assert report["residuals"] == [0.0]
        assert report["tail_monotone"]
        assert report["p"] == 2.0

    def test_growing_tail_is_not_converged(self, small_grid, small_kernel, cfg):
        # Residuals e^-10 (1 - e^-0.001) then about e^-10: the last is below tol but larger
        seed = Ensemble(constant_fields(small_grid, (1.0,)))
        estimate = pullback_omega_limit(0.0, seed, (10.0, 10.001, 20.0), cfg, small_kernel, zero())
        assert estimate.residuals[-1] < 1e-4
        assert estimate.residuals[-1] > estimate.residuals[-2]
        assert not estimate.tail_monotone
        assert not estimate.converged
        assert not estimate.to_dict()["tail_monotone"]

    def test_decreasing_tail_is_monotone(self, small_grid, small_kernel, cfg):
        seed = Ensemble(constant_fields(small_grid, (1.0,)))
        estimate = pullback_omega_limit(0.0, seed, (5.0, 10.0, 20.0), cfg, small_kernel, zero())
        assert estimate.tail_monotone
        assert estimate.converged

    def test_depths_must_increase(self, small_grid, small_kernel, cfg, g):
        seed = Ensemble(constant_fields(small_grid, (0.0,)))
        with pytest.raises(ValidationError):
            pullback_omega_limit(0.0, seed, (2.0, 1.0), cfg, small_kernel, g)
        with pytest.raises(DomainError):
            pullback_omega_limit(0.0, seed, (0.0, 1.0), cfg, small_kernel, g)

    def test_grid_mismatch(self, grid, small_kernel, cfg, g):
        with pytest.raises(DimensionError):
            pullback_omega_limit(0.0, Ensemble((grid.zeros(),)), (1.0,), cfg, small_kernel, g)


class TestResidualTail:
    @pytest.mark.parametrize(
        "residuals, expected",
        [
            ((), True),
            ((5e-5,), True),
            ((1e-3, 1e-5), True),
            ((1e-3, 1e-5, 5e-5), False),
            ((1e-16, 3e-16), True),
            ((1e-5, 1e-5 + 5e-7), True),
        ],
    )
    def test_last_two_residuals(self, residuals, expected):
        assert residual_tail_monotone(residuals, 1e-4) is expected


class TestGradientBound:
    def test_ramp_member_against_bound(self, grid, mean_kernel, cfg):
        seed = Ensemble((grid.sample(lambda x: x),))
        estimate = pullback_omega_limit(0.0, seed, (1.0,), cfg, mean_kernel, zero())
        slope = math.exp(-1.0)
        loose = gradient_bound_check(estimate, 1.0, 1.0, 1.0)
        tight = gradient_bound_check(estimate, 1.0, 1.0, 0.1)
        assert abs(loose.max_gradient - slope) < 1e-12
        assert loose.ok and not tight.ok
        assert tight.slack < 0


class TestSemicontinuity:
    def test_shift_family(self, small_grid, small_kernel, cfg):
        seed = Ensemble(constant_fields(small_grid, (-3.0, 0.0, 3.0)))
        betas = (0.2, 0.1, 0.05)
        family = [(beta, shifted(2.0, 1.0, beta)) for beta in betas]
        report = semicontinuity_experiment(
            2.0, family, (0.0, shifted(2.0, 1.0, 0.0)), seed, cfg, small_kernel,
            tau=0.0, depths=(5.0, 10.0, 20.0),
        )
        assert report.ok
        assert report.monotone_decrease
        assert [row["beta"] for row in report.rows] == list(betas)
        for row in report.rows:
            assert row["traj_dist"] <= row["gronwall_bound"]
            assert row["attractor_dist"] <= 2.0 * row["beta"]
            assert abs(row["k_B"] - 2.0) < 1e-6


class TestAsymptoticAutonomy:
    def test_distances_shrink(self, grid, mean_kernel, cfg):
        report = asymptotic_autonomy_check(
            modulated(2.0, 1.0, c=1.0, lam=1.0), grid.constant(1.0), 1.0, (0.0, 2.0, 4.0, 8.0),
            cfg, mean_kernel,
        )
        assert report.decreasing
        assert report.distances[-1] < 1e-2 * report.distances[0]

    def test_needs_a_limit(self, grid, mean_kernel, cfg):
        with pytest.raises(CapabilityError):
            asymptotic_autonomy_check(periodic(), grid.zeros(), 1.0, (0.0, 1.0), cfg, mean_kernel)

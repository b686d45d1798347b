"""
Tests for grids, fields, kernels, norms and the Hausdorff semi-distance.
"""

import math

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.dynamics.exceptions import DimensionError, DomainError, KernelError
from src.dynamics.spatial import (
    Ensemble,
    Field,
    apply_K,
    assemble_kernel,
    build_grid,
    conjugate_exponent,
    default_seed,
    gaussian_kernel,
    hausdorff_semidist,
    kernel_from_values,
    kernel_lq_norm,
    load_kernel_table,
    lp_distance,
    lp_norm,
    ordered_sum,
    smooth_random_fields,
    tent_kernel,
    uniform_kernel,
)
from utils.validators import ValidationError


class TestBuildGrid:
    def test_trapezoid_two_points(self):
        grid = build_grid(0.0, 1.0, 2)
        assert_array_equal(grid.nodes, [0.0, 1.0])
        assert_array_equal(grid.weights, [0.5, 0.5])

    def test_midpoint_cell_centers(self):
        grid = build_grid(0.0, 1.0, 4, "midpoint")
        assert_array_equal(grid.nodes, [0.125, 0.375, 0.625, 0.875])
        assert_array_equal(grid.weights, [0.25] * 4)

    @pytest.mark.parametrize("rule", ["trapezoid", "midpoint"])
    @pytest.mark.parametrize("n", [2, 7, 101, 1000, 5000])
    def test_weights_sum_to_measure(self, rule, n):
        grid = build_grid(-1.0, 2.0, n, rule)
        assert grid.measure == 3.0
        assert abs(ordered_sum(grid.weights) - 3.0) <= 1e-12 * 3.0

    def test_trapezoid_includes_endpoints(self):
        grid = build_grid(-0.5, 0.5, 101)
        assert grid.nodes[0] == -0.5
        assert grid.nodes[-1] == 0.5

    @pytest.mark.parametrize(
        "a, b, n, rule",
        [(1.0, 1.0, 5, "trapezoid"), (1.0, 0.0, 5, "trapezoid"), (0.0, 1.0, 1, "trapezoid"),
         (0.0, 1.0, 5, "simpson"), (0.0, math.inf, 5, "trapezoid")],
    )
    def test_rejects_bad_input(self, a, b, n, rule):
        with pytest.raises(ValidationError):
            build_grid(a, b, n, rule)

    def test_equal_grids_compare_by_parameters(self):
        assert build_grid(0.0, 1.0, 5) == build_grid(0.0, 1.0, 5)
        assert build_grid(0.0, 1.0, 5) != build_grid(0.0, 1.0, 5, "midpoint")


class TestField:
    def test_wrong_length_is_rejected(self, grid):
        with pytest.raises(DimensionError):
            Field(grid, np.zeros(grid.n + 1))

    def test_non_finite_values_are_rejected(self, grid):
        values = np.zeros(grid.n)
        values[3] = math.nan
        with pytest.raises(DomainError):
            Field(grid, values)

    def test_values_are_read_only(self, grid):
        u = grid.constant(1.0)
        with pytest.raises(ValueError):
            u.values[0] = 2.0

    def test_empty_ensemble_is_rejected(self):
        with pytest.raises(DomainError):
            Ensemble(())

    def test_ensemble_members_share_a_grid(self, grid, small_grid):
        with pytest.raises(DimensionError):
            Ensemble((grid.zeros(), small_grid.zeros()))


class TestKernel:
    def test_mean_kernel_has_unit_row_mass(self, mean_kernel):
        assert_allclose(mean_kernel.row_mass, 1.0, atol=1e-12)
        assert mean_kernel.symmetric

    def test_signed_kernel_names_offending_entry(self, small_grid):
        with pytest.raises(KernelError) as excinfo:
            assemble_kernel(small_grid, lambda x, y: x - y)
        i, j = excinfo.value.indices
        assert small_grid.nodes[i] < small_grid.nodes[j]

    def test_asymmetric_table_is_rejected(self, small_grid):
        raw = np.full((5, 5), 0.5)
        raw[0, 1] = 0.6
        with pytest.raises(KernelError) as excinfo:
            kernel_from_values(small_grid, raw)
        assert set(excinfo.value.indices) == {0, 1}

    def test_heavy_rows_are_rejected(self, small_grid):
        with pytest.raises(KernelError) as excinfo:
            assemble_kernel(small_grid, uniform_kernel(small_grid.measure, 2.0))
        assert excinfo.value.indices == (0, 1, 2, 3, 4)

    @pytest.mark.parametrize("J", [gaussian_kernel(0.2), tent_kernel(0.3)])
    def test_normalized_kernels_lose_mass_at_the_boundary(self, J):
        grid = build_grid(0.0, 1.0, 101)
        kernel = assemble_kernel(grid, J)
        assert kernel.max_row_mass <= 1.0 + 1e-10
        assert kernel.row_mass[0] < kernel.row_mass[50]

    def test_load_table(self, tmp_path, small_grid):
        path = tmp_path / "kernel.csv"
        columns = [f"{x:.17g}" for x in small_grid.nodes]
        pd.DataFrame(np.ones((5, 5)), columns=columns).to_csv(path, index=False)
        kernel = load_kernel_table(path, small_grid)
        assert_allclose(kernel.row_mass, 1.0, atol=1e-12)
        assert kernel.name == "table(kernel.csv)"

    def test_table_header_must_match_grid(self, tmp_path, small_grid):
        path = tmp_path / "kernel.csv"
        pd.DataFrame(np.ones((5, 5)), columns=["0", "0.2", "0.4", "0.6", "0.8"]).to_csv(path, index=False)
        with pytest.raises(ValidationError, match="header"):
            load_kernel_table(path, small_grid)

    def test_missing_table(self, tmp_path, small_grid):
        with pytest.raises(ValidationError, match="not found"):
            load_kernel_table(tmp_path / "absent.csv", small_grid)


class TestApplyK:
    def test_mean_of_ramp(self, grid, mean_kernel):
        ku = apply_K(mean_kernel, grid.sample(lambda x: x))
        assert_allclose(ku.values, 0.5, atol=1e-12)

    def test_constant_is_preserved(self, grid, mean_kernel):
        assert_allclose(apply_K(mean_kernel, grid.constant(3.0)).values, 3.0, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_linearity(self, grid, seed):
        kernel = assemble_kernel(grid, gaussian_kernel(0.3))
        rng = np.random.default_rng(seed)
        u, v = (grid.field(rng.uniform(-1.0, 1.0, grid.n)) for _ in range(2))
        a, b = rng.uniform(-2.0, 2.0, 2)
        combined = apply_K(kernel, grid.field(a * u.values + b * v.values)).values
        expected = a * apply_K(kernel, u).values + b * apply_K(kernel, v).values
        assert_allclose(combined, expected, rtol=1e-12, atol=1e-12)

    def test_grid_mismatch(self, mean_kernel, small_grid):
        with pytest.raises(DimensionError):
            apply_K(mean_kernel, small_grid.zeros())

    def test_matches_fine_quadrature(self):
        coarse = build_grid(0.0, 1.0, 101)
        fine = build_grid(0.0, 1.0, 1001)
        J = gaussian_kernel(0.2)
        coarse_ku = apply_K(assemble_kernel(coarse, J), coarse.sample(np.cos))
        fine_ku = apply_K(assemble_kernel(fine, J), fine.sample(np.cos))
        assert_allclose(coarse_ku.values, fine_ku.values[::10], rtol=1e-3)


class TestNorms:
    def test_unit_constant(self, grid):
        one = grid.constant(1.0)
        assert abs(lp_norm(one, 2) - 1.0) < 1e-12
        assert abs(lp_norm(one, 1) - 1.0) < 1e-12
        assert lp_norm(one, math.inf) == 1.0
        assert lp_norm(one, "inf") == 1.0

    def test_exponent_below_one(self, grid):
        with pytest.raises(ValidationError):
            lp_norm(grid.zeros(), 0.5)

    def test_distance(self, grid):
        assert abs(lp_distance(grid.constant(1.0), grid.constant(-1.0), 2) - 2.0) < 1e-12

    @pytest.mark.parametrize("p, q", [(1, math.inf), (2, 2.0), (3, 1.5), (math.inf, 1.0)])
    def test_conjugate_exponent(self, p, q):
        assert conjugate_exponent(p) == q

    def test_kernel_lq_norm_of_mean_kernel(self, mean_kernel):
        assert abs(kernel_lq_norm(mean_kernel, 1) - 1.0) < 1e-12
        assert kernel_lq_norm(mean_kernel, math.inf) == 1.0
        assert kernel_lq_norm(mean_kernel, 2, derivative=True) == 0.0


class TestHausdorff:
    def test_examples(self, small_grid):
        u = small_grid.sample(lambda x: x)
        v = small_grid.constant(2.0)
        origin = small_grid.zeros()
        assert hausdorff_semidist(Ensemble((u,)), Ensemble((u,))) == 0.0
        assert hausdorff_semidist(Ensemble((origin,)), Ensemble((origin, v))) == 0.0
        assert abs(
            hausdorff_semidist(Ensemble((u, v)), Ensemble((origin,))) - max(lp_norm(u), lp_norm(v))
        ) < 1e-12

    def test_is_asymmetric(self, small_grid):
        origin = small_grid.zeros()
        v = small_grid.constant(2.0)
        assert hausdorff_semidist(Ensemble((origin,)), Ensemble((origin, v))) == 0.0
        assert abs(hausdorff_semidist(Ensemble((origin, v)), Ensemble((origin,))) - 2.0) < 1e-12

    def test_sup_norm_variant(self, small_grid):
        u = small_grid.sample(lambda x: x)
        assert hausdorff_semidist(Ensemble((u,)), Ensemble((small_grid.zeros(),)), math.inf) == 1.0

    def test_grid_mismatch(self, grid, small_grid):
        with pytest.raises(DimensionError):
            hausdorff_semidist(Ensemble((grid.zeros(),)), Ensemble((small_grid.zeros(),)))


class TestSeeds:
    def test_default_seed_layout(self, grid):
        seed = default_seed(grid, 3.0, rng_seed=7)
        assert len(seed) == 15
        levels = [float(member.values[0]) for member in seed.members[:7]]
        assert_allclose(levels, np.linspace(-3.0, 3.0, 7))
        assert 0.0 in levels

    def test_default_seed_is_reproducible(self, grid):
        first = default_seed(grid, 3.0, rng_seed=7).matrix()
        second = default_seed(grid, 3.0, rng_seed=7).matrix()
        assert_array_equal(first, second)

    def test_random_fields_stay_in_the_ball(self, grid):
        fields = smooth_random_fields(grid, 50, 2.5, np.random.default_rng(0))
        assert max(float(np.max(np.abs(u.values))) for u in fields) <= 2.5

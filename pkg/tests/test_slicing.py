"""Tests for cut-defect scans, layer-cake identities, and the averaged
mass bound."""

import math

import numpy as np
import pytest

from nldrop import geometry
from nldrop.energy import EnergyParams, background
from nldrop.errors import ParameterError
from nldrop.kernels import KernelSpec
from nldrop.quadrature import QuadratureSpec, voxelize
from nldrop.slicing import (
    averaged_mass_bound,
    default_direction_grid,
    default_level_grid,
    layer_cake_checks,
    scan,
    splitting_defect,
    sphere_positive_integral,
)


def frac(N=2, s=0.5, eps=0.7, lam=1.0):
    return KernelSpec(dimension=N, s=s, epsilon=eps, lam=lam, kind="fractional")


def make_params(N=2, A=1.0):
    return EnergyParams(kernel=frac(N=N), A=A, alpha=1.0, beta=1.0)


def seeded_blob(seed=8, grid_n=32):
    return geometry.random_blob(2, np.random.default_rng(seed), grid_n=grid_n)


class TestSphereIntegral:
    def test_plane_value(self):
        x = np.array([3.0, 4.0])
        assert sphere_positive_integral(x) == pytest.approx(10.0, rel=1e-14)

    def test_space_value(self):
        x = np.array([0.0, 0.0, 2.0])
        assert sphere_positive_integral(x) == pytest.approx(2.0 * math.pi, rel=1e-14)

    def test_uncorrected_variant(self):
        x = np.array([1.0, 0.0, 0.0])
        assert sphere_positive_integral(x, corrected=False) == pytest.approx(
            2.0 * math.pi, rel=1e-14
        )
        assert sphere_positive_integral(x, corrected=True) == pytest.approx(
            math.pi, rel=1e-14
        )

    def test_unsupported_dimension(self):
        with pytest.raises(ParameterError):
            sphere_positive_integral(np.ones(4))


class TestSplittingDefect:
    def test_terms_are_nonnegative(self):
        rec = splitting_defect(
            seeded_blob(), np.array([0.6, 0.8]), 0.013, make_params(), QuadratureSpec()
        )
        assert rec.lhs >= 0.0
        assert rec.cross_kernel >= 0.0
        assert rec.background_minus >= 0.0
        assert rec.defect == pytest.approx(rec.rhs - rec.lhs, abs=0.0)

    def test_relabeling_swaps_sides(self):
        # (nu, l) -> (-nu, -l) exchanges the two sides: the pair terms are
        # invariant and the two lower-side backgrounds partition the total
        blob = seeded_blob()
        params = make_params()
        spec = QuadratureSpec()
        nu = np.array([0.6, 0.8])
        r1 = splitting_defect(blob, nu, 0.013, params, spec)
        r2 = splitting_defect(blob, -nu, -0.013, params, spec)
        assert r1.lhs == pytest.approx(r2.lhs, rel=1e-12)
        assert r1.cross_kernel == pytest.approx(r2.cross_kernel, rel=1e-12)
        total = background(blob, 1.0, spec).value
        assert r1.background_minus + r2.background_minus == pytest.approx(
            total, rel=1e-12
        )

    def test_cut_outside_shape_is_trivial(self):
        blob = seeded_blob()
        rec = splitting_defect(
            blob, np.array([1.0, 0.0]), 100.0, make_params(), QuadratureSpec()
        )
        assert rec.lhs == 0.0 and rec.cross_kernel == 0.0

    def test_record_keys(self):
        rec = splitting_defect(
            seeded_blob(), np.array([1.0, 0.0]), 0.0, make_params(), QuadratureSpec()
        ).as_record()
        for key in (
            "nu0", "nu1", "l", "lhs", "cross_kernel", "background_minus",
            "rhs", "defect", "lhs_error", "rhs_error",
        ):
            assert key in rec


class TestScan:
    def test_grid_shape_and_minimum(self):
        blob = seeded_blob()
        nus = default_direction_grid(2, 4)
        levels = np.linspace(-0.3, 0.3, 5)
        res = scan(blob, make_params(), QuadratureSpec(), nu_grid=nus, l_grid=levels)
        assert len(res.records) == 4 * 5
        assert len(res.integrated_defect) == 4
        assert res.min_defect == min(r.defect for r in res.records)
        assert res.min_record.defect == res.min_defect

    def test_sweep_matches_direct_evaluation(self):
        blob = seeded_blob()
        params = make_params()
        spec = QuadratureSpec()
        nu = np.array([0.6, 0.8])
        direct = splitting_defect(blob, nu, 0.013, params, spec)
        res = scan(blob, params, spec, nu_grid=[nu], l_grid=[0.013])
        rec = res.records[0]
        assert rec.lhs == pytest.approx(direct.lhs, rel=1e-10)
        assert rec.cross_kernel == pytest.approx(direct.cross_kernel, rel=1e-10)
        assert rec.background_minus == pytest.approx(direct.background_minus, rel=1e-10)

    def test_monte_carlo_route_runs(self):
        b = geometry.ball_of_volume(2, 1.0)
        spec = QuadratureSpec(method="monte-carlo", budget=4000, seed=2)
        res = scan(b, make_params(), spec, nu_grid=[np.array([1.0, 0.0])], l_grid=[0.0])
        assert len(res.records) == 1
        assert np.isfinite(res.min_defect)


class TestDirectionAndLevelGrids:
    def test_directions_are_unit(self):
        for N in (2, 3):
            grid = default_direction_grid(N, 16)
            assert grid.shape == (16, N)
            assert np.allclose(np.linalg.norm(grid, axis=1), 1.0, rtol=1e-12)

    def test_unsupported_dimension(self):
        with pytest.raises(ParameterError):
            default_direction_grid(4, 8)

    def test_levels_span_the_shape(self):
        blob = seeded_blob()
        nu = np.array([1.0, 0.0])
        levels = default_level_grid(blob, nu, count=17)
        assert len(levels) == 17
        lo, hi = blob.bounding_box()
        assert levels[0] < lo[0] and levels[-1] > hi[0]


class TestLayerCake:
    def test_residuals_within_errors(self):
        blob = geometry.random_blob(2, np.random.default_rng(3), grid_n=64)
        nu = np.array([1.0, 0.3])
        checks = layer_cake_checks(blob, nu / np.linalg.norm(nu), QuadratureSpec(), l_count=32)
        assert checks.residual_background <= 3.0 * checks.error_background
        assert checks.residual_riesz <= 3.0 * checks.error_riesz

    def test_level_refinement_shrinks_background_residual(self):
        for seed in (3, 4, 5):
            blob = geometry.random_blob(2, np.random.default_rng(seed), grid_n=48)
            nu = np.array([1.0, 0.3])
            nu = nu / np.linalg.norm(nu)
            c1 = layer_cake_checks(blob, nu, QuadratureSpec(), l_count=24)
            c2 = layer_cake_checks(blob, nu, QuadratureSpec(), l_count=48)
            assert c2.residual_background < c1.residual_background

    def test_grid_refinement_shrinks_background_residual(self):
        ball = geometry.ball_of_volume(2, 0.5)
        nu = np.array([1.0, 0.3])
        nu = nu / np.linalg.norm(nu)
        spec = QuadratureSpec()
        c32 = layer_cake_checks(voxelize(ball, cells_per_axis=32), nu, spec, l_count=32)
        c64 = layer_cake_checks(voxelize(ball, cells_per_axis=64), nu, spec, l_count=32)
        assert c64.residual_background < c32.residual_background
        assert c64.residual_riesz <= 3.0 * c64.error_riesz

    def test_shape_above_origin_gives_exact_zero(self):
        # when E lies in {x . nu >= 0} the one-sided background identity
        # is 0 = 0 with no quadrature error at all
        blob = seeded_blob()
        shifted = geometry.translate(blob, np.array([96 * blob.spacing, 0.0]))
        checks = layer_cake_checks(shifted, np.array([1.0, 0.0]), QuadratureSpec(), l_count=16)
        assert checks.residual_background == 0.0
        assert checks.lhs_background == 0.0 and checks.rhs_background == 0.0


class TestAveragedBound:
    def test_small_disk_satisfies_the_bound(self):
        rep = averaged_mass_bound(
            geometry.ball_of_volume(2, 0.3), make_params(), QuadratureSpec()
        )
        assert rep.lhs == pytest.approx(0.3 ** 2, rel=1e-12)
        assert rep.defect == rep.rhs - rep.lhs
        assert rep.defect > 0.0
        assert rep.signature is False

    def test_empty_shape_is_vacuous(self):
        rep = averaged_mass_bound(
            geometry.empty_ball_config(2), make_params(), QuadratureSpec()
        )
        assert rep.signature is False
        assert "vacuous" in rep.note

    def test_record_keys(self):
        rep = averaged_mass_bound(
            geometry.ball_of_volume(2, 0.3), make_params(), QuadratureSpec()
        ).as_record()
        for key in (
            "mass", "q_value", "q_error", "b_value", "b_error", "lhs", "rhs",
            "defect", "combined_error", "signature", "sphere_constant",
            "sphere_constant_variant", "note",
        ):
            assert key in rep

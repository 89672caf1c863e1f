"""Tests for the energy terms and their splitting identities.

Ball values are checked against closed forms (Newton's point-mass rule,
harmonic averages, sphere-area formulas) and against high-accuracy
reference numbers computed independently with scipy.integrate on the
radial/polar reductions.
"""

import math

import numpy as np
import pytest

from nldrop import geometry
from nldrop.energy import (
    EnergyParams,
    EnergyReport,
    background,
    check_perimeter_decomposition,
    check_riesz_decomposition,
    interaction,
    perimeter,
    riesz,
    scaling_report,
    total_energy,
)
from nldrop.errors import ParameterError, PreconditionError
from nldrop.kernels import KernelSpec
from nldrop.quadrature import QuadratureSpec, voxelize

# fractional boundary energies of the unit ball at s = 1/2, computed with
# two independent quadratures of the pair-distance reduction
UNIT_DISK_PERIM_HALF = 62.13063877777980
UNIT_BALL_PERIM_HALF_N3 = 178.65892351075532

# polar-coordinate nquad value for two disks (radii 0.6 and 0.8, centers
# 2.0 apart) interacting through 1/|x-y|
DISK_PAIR_COULOMB = 1.1775672396381625


def frac(N=2, s=0.5, eps=0.7, lam=1.0):
    return KernelSpec(dimension=N, s=s, epsilon=eps, lam=lam, kind="fractional")


def disk(m=math.pi, N=2):
    return geometry.ball_of_volume(N, m)


class TestParams:
    def test_negative_background_strength(self):
        with pytest.raises(ParameterError):
            EnergyParams(kernel=frac(), A=-1.0)

    def test_alpha_range(self):
        with pytest.raises(ParameterError):
            EnergyParams(kernel=frac(), alpha=2.0)

    def test_beta_range(self):
        with pytest.raises(ParameterError):
            EnergyParams(kernel=frac(), beta=3.0)


class TestBallPerimeter:
    def test_unit_disk_value(self):
        est = perimeter(disk(), frac(), QuadratureSpec())
        assert est.value == pytest.approx(UNIT_DISK_PERIM_HALF, rel=1e-10)

    def test_unit_ball_value_three_dim(self):
        est = perimeter(disk(4.0 * math.pi / 3.0, N=3), frac(N=3), QuadratureSpec())
        assert est.value == pytest.approx(UNIT_BALL_PERIM_HALF_N3, rel=1e-10)

    def test_exact_homogeneous_scaling(self):
        b = geometry.ball_of_volume(2, 1.3)
        k = frac()
        spec = QuadratureSpec()
        p1 = perimeter(b, k, spec).value
        p2 = perimeter(geometry.scale(b, 2.0), k, spec).value
        assert p2 == pytest.approx(2.0 ** 1.5 * p1, rel=1e-13)

    def test_two_balls_below_sum_of_singles(self):
        # the union's boundary energy loses twice the cross interaction
        spec = QuadratureSpec()
        k = frac()
        b1 = geometry.BallConfig(dimension=2, centers=np.zeros((1, 2)), radii=np.array([0.7]))
        b2 = geometry.BallConfig(dimension=2, centers=np.array([[2.0, 0.0]]), radii=np.array([0.8]))
        pair = geometry.BallConfig(
            dimension=2,
            centers=np.vstack([b1.centers, b2.centers]),
            radii=np.concatenate([b1.radii, b2.radii]),
        )
        p_pair = perimeter(pair, k, spec).value
        p_sum = perimeter(b1, k, spec).value + perimeter(b2, k, spec).value
        cross = interaction(b1, b2, k, spec).value
        assert p_pair == pytest.approx(p_sum - 2.0 * cross, rel=1e-9)
        assert p_pair < p_sum

    def test_voxel_route_agrees_with_radial_route(self):
        b = disk()
        radial = perimeter(b, frac(), QuadratureSpec())
        grid = perimeter(voxelize(b, cells_per_axis=96), frac(), QuadratureSpec())
        dev = abs(radial.value - grid.value)
        assert dev <= 4.0 * (radial.error + grid.error)

    def test_grid_route_residual_shrinks_with_refinement(self):
        b = disk()
        spec = QuadratureSpec()
        p_true = perimeter(b, frac(), spec).value
        v_true = riesz(b, 1.0, spec).value
        p_dev = [
            abs(perimeter(voxelize(b, cells_per_axis=n), frac(), spec).value - p_true)
            for n in (48, 96)
        ]
        v_dev = [
            abs(riesz(voxelize(b, cells_per_axis=n), 1.0, spec).value - v_true)
            for n in (48, 96)
        ]
        assert p_dev[1] < p_dev[0]
        assert v_dev[1] < v_dev[0]


class TestBallRiesz:
    def test_unit_ball_coulomb_three_dim(self):
        est = riesz(disk(4.0 * math.pi / 3.0, N=3), 1.0, QuadratureSpec())
        assert est.value == pytest.approx(16.0 * math.pi ** 2 / 15.0, rel=1e-12)

    def test_unit_disk_inverse_distance(self):
        est = riesz(disk(), 1.0, QuadratureSpec())
        assert est.value == pytest.approx(8.0 * math.pi / 3.0, rel=1e-10)

    def test_exact_scaling(self):
        b = geometry.ball_of_volume(2, 1.3)
        spec = QuadratureSpec()
        v1 = riesz(b, 0.7, spec).value
        v2 = riesz(geometry.scale(b, 2.0), 0.7, spec).value
        assert v2 == pytest.approx(2.0 ** 3.3 * v1, rel=1e-13)

    def test_newton_point_mass_cross_term(self):
        # disjoint balls with the 1/r interaction see each other as points
        pair = geometry.BallConfig(
            dimension=3,
            centers=np.array([[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]]),
            radii=np.array([1.0, 0.5]),
        )
        est = riesz(pair, 1.0, QuadratureSpec())
        vol = geometry.unit_ball_volume(3)
        expected = (
            16.0 * math.pi ** 2 / 15.0 * (1.0 + 0.5 ** 5)
            + vol ** 2 * 0.5 ** 3 / 3.0
        )
        assert est.value == pytest.approx(expected, rel=1e-12)

    def test_disk_pair_against_independent_quadrature(self):
        U = geometry.BallConfig(dimension=2, centers=np.zeros((1, 2)), radii=np.array([0.6]))
        W = geometry.BallConfig(dimension=2, centers=np.array([[2.0, 0.0]]), radii=np.array([0.8]))
        est = interaction(U, W, 1.0, QuadratureSpec())
        assert est.value == pytest.approx(DISK_PAIR_COULOMB, rel=1e-5)

    def test_alpha_out_of_range(self):
        with pytest.raises(ParameterError):
            riesz(disk(), 2.5, QuadratureSpec())


class TestBackground:
    def test_centered_ball_closed_form(self):
        # int over B_R of |x|^-beta = area(S^{N-1}) R^(N-beta)/(N-beta)
        R = 1.3
        b = geometry.BallConfig(dimension=2, centers=np.zeros((1, 2)), radii=np.array([R]))
        est = background(b, 0.5, QuadratureSpec())
        assert est.value == pytest.approx(2.0 * math.pi * R ** 1.5 / 1.5, rel=1e-12)

    def test_harmonic_average_off_center(self):
        # a ball away from the origin weighs vol/d under the 1/|x| weight
        b = geometry.BallConfig(dimension=3, centers=np.array([[0.0, 0.0, 3.0]]), radii=np.array([1.2]))
        est = background(b, 1.0, QuadratureSpec())
        expected = geometry.unit_ball_volume(3) * 1.2 ** 3 / 3.0
        assert est.value == pytest.approx(expected, rel=1e-12)

    def test_beta_zero_is_volume(self):
        b = geometry.BallConfig(dimension=2, centers=np.array([[0.5, 0.0]]), radii=np.array([1.0]))
        est = background(b, 0.0, QuadratureSpec())
        assert est.value == pytest.approx(math.pi, rel=1e-3)

    def test_radial_and_grid_routes_agree(self):
        b = geometry.BallConfig(dimension=2, centers=np.array([[0.5, 0.0]]), radii=np.array([1.0]))
        r1 = background(b, 0.7, QuadratureSpec())
        r2 = background(voxelize(b, cells_per_axis=192), 0.7, QuadratureSpec())
        assert abs(r1.value - r2.value) <= 4.0 * (r1.error + r2.error)

    def test_shift_away_from_origin_decreases_weight(self):
        rng = np.random.default_rng(9)
        blob = geometry.random_blob(2, rng, grid_n=24)
        est0 = background(blob, 1.0, QuadratureSpec())
        shifted = geometry.translate(blob, np.array([40 * blob.spacing, 0.0]))
        est1 = background(shifted, 1.0, QuadratureSpec())
        assert est1.value < est0.value

    def test_beta_out_of_range(self):
        with pytest.raises(ParameterError):
            background(disk(), 3.5, QuadratureSpec())


class TestTotalEnergy:
    def test_assembly_arithmetic(self):
        params = EnergyParams(kernel=frac(), A=2.0, alpha=0.7, beta=1.0)
        spec = QuadratureSpec()
        b = disk()
        rep = total_energy(b, params, spec)
        p = perimeter(b, params.kernel, spec)
        v = riesz(b, 0.7, spec)
        r = background(b, 1.0, spec)
        assert rep.total == p.value + v.value - 2.0 * r.value
        assert rep.error == p.error + v.error + 2.0 * r.error

    def test_record_keys(self):
        params = EnergyParams(kernel=frac(), A=0.5)
        rep = total_energy(disk(), params, QuadratureSpec())
        rec = rep.as_record()
        for key in (
            "perimeter", "perimeter_error", "riesz", "riesz_error",
            "background", "background_error", "total", "total_error",
            "A", "alpha", "beta",
        ):
            assert key in rec


class TestInteraction:
    def test_overlap_rejected(self):
        U = geometry.BallConfig(dimension=2, centers=np.zeros((1, 2)), radii=np.array([1.0]))
        W = geometry.BallConfig(dimension=2, centers=np.array([[0.5, 0.0]]), radii=np.array([1.0]))
        with pytest.raises(PreconditionError):
            interaction(U, W, 1.0, QuadratureSpec())

    def test_empty_factor_gives_zero(self):
        U = geometry.empty_ball_config(2)
        W = disk()
        est = interaction(U, W, 1.0, QuadratureSpec())
        assert est.value == 0.0


class TestDecompositions:
    def test_perimeter_identity_cancels_on_shared_grid(self):
        rng = np.random.default_rng(12)
        U, W = geometry.random_disjoint_pair(2, rng, grid_n=48)
        check = check_perimeter_decomposition(U, W, frac(), QuadratureSpec())
        scale = abs(check.terms["P_U"]) + abs(check.terms["P_W"])
        assert abs(check.residual) <= 1e-10 * scale

    def test_riesz_identity_cancels_on_shared_grid(self):
        rng = np.random.default_rng(12)
        U, W = geometry.random_disjoint_pair(2, rng, grid_n=48)
        check = check_riesz_decomposition(U, W, QuadratureSpec(), alpha=0.8)
        scale = abs(check.terms["V_union"]) + 1e-30
        assert abs(check.residual) <= 1e-8 * scale

    def test_monte_carlo_routes_agree_within_error(self):
        U = geometry.BallConfig(dimension=2, centers=np.array([[-1.0, 0.0]]), radii=np.array([0.7]))
        W = geometry.BallConfig(dimension=2, centers=np.array([[1.2, 0.1]]), radii=np.array([0.8]))
        spec = QuadratureSpec(method="monte-carlo", budget=40_000, seed=3)
        cr = check_riesz_decomposition(U, W, spec, alpha=0.6)
        assert abs(cr.residual) <= 4.0 * cr.combined_error
        cp = check_perimeter_decomposition(U, W, frac(), spec)
        assert abs(cp.residual) <= 4.0 * cp.combined_error

    def test_residual_coerces_to_float(self):
        rng = np.random.default_rng(5)
        U, W = geometry.random_disjoint_pair(2, rng, grid_n=32)
        check = check_riesz_decomposition(U, W, QuadratureSpec(), alpha=0.8)
        assert float(check) == check.residual


class TestTranslationInvariance:
    def test_pair_terms_unmoved_by_grid_shifts(self):
        rng = np.random.default_rng(21)
        blob = geometry.random_blob(2, rng, grid_n=24)
        shift = np.array([32 * blob.spacing, -16 * blob.spacing])
        moved = geometry.translate(blob, shift)
        spec = QuadratureSpec()
        assert riesz(moved, 0.8, spec).value == pytest.approx(
            riesz(blob, 0.8, spec).value, rel=1e-12
        )
        assert perimeter(moved, frac(), spec).value == pytest.approx(
            perimeter(blob, frac(), spec).value, rel=1e-9
        )


class TestScalingReport:
    def test_fractional_exponents_are_exact_on_voxels(self):
        rng = np.random.default_rng(7)
        blob = geometry.random_blob(2, rng, grid_n=32)
        params = EnergyParams(kernel=frac(), A=1.0, alpha=1.0, beta=1.0)
        rep = scaling_report(blob, 2.0, params, QuadratureSpec())
        assert rep.exponents["perimeter"] == pytest.approx(1.5, rel=1e-12)
        assert rep.exponents["riesz"] == pytest.approx(3.0, rel=1e-12)
        assert rep.exponents["background"] == pytest.approx(1.0, rel=1e-12)
        assert rep.exact == {"perimeter": True, "riesz": True, "background": True}

    def test_truncated_kernel_not_flagged_exact(self):
        k = KernelSpec(
            dimension=2, s=0.5, epsilon=0.75, lam=1.0,
            kind="truncated-fractional", cap=0.3,
        )
        params = EnergyParams(kernel=k)
        rep = scaling_report(disk(), 2.0, params, QuadratureSpec())
        assert rep.exact["perimeter"] is False

    def test_bad_scale_factor(self):
        params = EnergyParams(kernel=frac())
        with pytest.raises(ParameterError):
            scaling_report(disk(), -1.0, params, QuadratureSpec())

    def test_record_keys(self):
        params = EnergyParams(kernel=frac())
        rep = scaling_report(disk(), 2.0, params, QuadratureSpec())
        rec = rep.as_record()
        assert rec["lambda"] == 2.0
        for name in ("perimeter", "riesz", "background"):
            for suffix in ("base", "scaled", "ratio", "exponent", "expected", "exact"):
                assert f"{name}_{suffix}" in rec

"""Tests for the integration engines.

Reference values were computed independently with scipy.integrate
(dblquad/nquad with explicit breakpoint lists) and with closed forms, then
frozen here; the engine must reproduce them without sharing code paths.
"""

import math

import numpy as np
import pytest

from nldrop.errors import ParameterError
from nldrop import geometry
from nldrop.kernels import KernelSpec
from nldrop.quadrature import (
    IntegralEstimate,
    PointSingularity,
    QuadratureSpec,
    cell_pair_integral,
    complement_double_integral,
    double_integral,
    integral_over,
    kernel_integrand,
    point_singularity_cell_integral,
    riesz_integrand,
    sphere_average,
    voxelize,
    _fft_pair_sum,
    _stencil,
)

# independently computed with scipy.integrate.quad/dblquad on the
# difference-variable form (triangular cell weight, breakpoints at the
# weight apex and the origin)
SAME_CELL_N2_SIGMA1_UNIT = 2.973209598247377
ADJACENT_N2_SIGMA1_H025 = 0.01737701077889105
DIAGONAL_N2_FRAC_HALF_H025 = 0.08450104983574339
POINTSING_BOX_N2 = 4.744602115449199
POINTSING_SMOOTH_N2 = 0.29887985952395063

# high-accuracy radial reduction value for the fractional boundary energy
# of the unit disk at s = 1/2 (checked against two independent quadratures)
DISK_BOUNDARY_HALF = 62.13063877777980


def frac_kernel(N=2, s=0.5, eps=0.7, lam=1.0):
    return KernelSpec(dimension=N, s=s, epsilon=eps, lam=lam, kind="fractional")


class TestSpecValidation:
    def test_unknown_method(self):
        with pytest.raises(ParameterError):
            QuadratureSpec(method="simpson")

    def test_small_budget(self):
        with pytest.raises(ParameterError):
            QuadratureSpec(budget=10)

    def test_negative_padding(self):
        with pytest.raises(ParameterError):
            QuadratureSpec(padding=-1.0)

    def test_unknown_diagonal_rule(self):
        with pytest.raises(ParameterError):
            QuadratureSpec(diagonal_rule="ignore")

    def test_riesz_exponent_range(self):
        with pytest.raises(ParameterError):
            riesz_integrand(2, 2.0)
        with pytest.raises(ParameterError):
            riesz_integrand(2, 0.0)


class TestCellPairIntegral:
    def test_same_cell_riesz_scaled(self):
        # the unit-cell value scales by h^(2N - sigma)
        rz = riesz_integrand(2, 1.0)
        h = 0.25
        got = cell_pair_integral(np.zeros(2), h, rz.vec, 2)
        assert got == pytest.approx(h ** 3 * SAME_CELL_N2_SIGMA1_UNIT, rel=1e-8)

    def test_adjacent_cell_riesz(self):
        rz = riesz_integrand(2, 1.0)
        got = cell_pair_integral(np.array([0.25, 0.0]), 0.25, rz.vec, 2)
        assert got == pytest.approx(ADJACENT_N2_SIGMA1_H025, rel=1e-8)

    def test_diagonal_cell_boundary_kernel(self):
        ki = kernel_integrand(frac_kernel())
        got = cell_pair_integral(np.array([0.25, 0.25]), 0.25, ki.vec, 2)
        assert got == pytest.approx(DIAGONAL_N2_FRAC_HALF_H025, rel=1e-7)

    def test_far_pair_matches_midpoint(self):
        # smooth regime: the exact pair integral approaches the midpoint value
        rz = riesz_integrand(2, 1.0)
        h = 0.1
        d = np.array([3.0, 1.0])
        got = cell_pair_integral(d, h, rz.vec, 2)
        mid = float(rz.vec(d[None, :])[0]) * h ** 4
        assert got == pytest.approx(mid, rel=1e-3)


class TestPointSingularityCell:
    def test_interior_singularity(self):
        got = point_singularity_cell_integral([0, 0], [1, 1], [0.3, 0.4], 1.2, 2)
        assert got == pytest.approx(POINTSING_BOX_N2, rel=1e-7)

    def test_negative_exponent_smooth(self):
        got = point_singularity_cell_integral([0, 0], [1, 1], [0.3, 0.4], -1.5, 2)
        assert got == pytest.approx(POINTSING_SMOOTH_N2, rel=1e-9)

    def test_divergent_exponent_rejected(self):
        with pytest.raises(ParameterError):
            point_singularity_cell_integral([0, 0], [1, 1], [0.3, 0.4], 2.0, 2)


class TestStencilAndPairSum:
    def test_stencil_is_symmetric(self):
        rz = riesz_integrand(2, 1.0)
        T = _stencil((6, 5), 0.2, rz, "pair-offset")
        assert np.allclose(T, T[::-1, ::-1], rtol=1e-12, atol=0)

    def test_fft_pair_sum_matches_direct_loop(self):
        rng = np.random.default_rng(7)
        a = rng.random((6, 5)) < 0.5
        b = rng.random((6, 5)) < 0.5
        rz = riesz_integrand(2, 1.0)
        h = 0.3
        T = _stencil((6, 5), h, rz, "pair-offset")
        got = _fft_pair_sum(a, b, T)
        direct = 0.0
        for i in np.argwhere(a):
            for j in np.argwhere(b):
                off = j - i
                direct += T[off[0] + 5, off[1] + 4]
        assert got == pytest.approx(direct, rel=1e-12)


class TestIntegralOver:
    def test_singular_integrand_on_disk(self):
        # int over B_R of |x|^-beta = area(S^{N-1}) R^(N-beta) / (N-beta)
        ball = geometry.ball_of_volume(2, math.pi)
        ps = PointSingularity(center=np.zeros(2), exponent=1.2)
        est = integral_over(ball, ps, QuadratureSpec(budget=40_000))
        oracle = 2.0 * math.pi / 0.8
        assert abs(est.value - oracle) <= 4.0 * est.error
        assert abs(est.value - oracle) <= 0.02 * oracle

    def test_volume_via_constant(self):
        v = voxelize(geometry.ball_of_volume(2, 2.0), cells_per_axis=64)
        est = integral_over(v, lambda p: np.ones(p.shape[0]), QuadratureSpec())
        assert est.value == pytest.approx(geometry.volume(v), rel=1e-12)

    def test_mc_heavy_tail_warning(self):
        ball = geometry.ball_of_volume(2, math.pi)
        ps = PointSingularity(center=np.zeros(2), exponent=1.2)
        est = integral_over(ball, ps, QuadratureSpec(method="monte-carlo", budget=2000))
        assert est.warning is not None

    def test_empty_shape(self):
        est = integral_over(
            geometry.empty_ball_config(2), lambda p: np.ones(p.shape[0]), QuadratureSpec()
        )
        assert est.value == 0.0 and est.error == 0.0


class TestDoubleIntegral:
    def test_tensor_swap_symmetry(self):
        rng = np.random.default_rng(2)
        a = geometry.random_blob(2, rng, grid_n=24)
        b = geometry.translate(a, np.array([96 * a.spacing, 8 * a.spacing]))
        d1 = double_integral(a, b, 0.6, QuadratureSpec())
        d2 = double_integral(b, a, 0.6, QuadratureSpec())
        assert d1.value == pytest.approx(d2.value, rel=1e-12)

    def test_generic_callable_matches_stationary_when_separated(self):
        rng = np.random.default_rng(3)
        a = geometry.random_blob(2, rng, grid_n=16)
        b = geometry.translate(a, np.array([80 * a.spacing, 0.0]))

        def g_pair(x, y):
            return 1.0 / (1.0 + np.sum((x - y) ** 2, axis=-1))

        from nldrop.quadrature import OffsetIntegrand

        igd = OffsetIntegrand(
            dimension=2,
            sigma=0.0,
            vec=lambda z: 1.0 / (1.0 + np.sum(z ** 2, axis=-1)),
            cache_token=("test-lorentz",),
        )
        d_gen = double_integral(a, b, g_pair, QuadratureSpec())
        d_sta = double_integral(a, b, igd, QuadratureSpec())
        assert d_gen.value == pytest.approx(d_sta.value, rel=1e-10)

    def test_mc_repeat_is_bit_identical(self):
        ball = geometry.ball_of_volume(2, math.pi)
        spec = QuadratureSpec(method="monte-carlo", budget=40_000, seed=5)
        m1 = double_integral(ball, ball, 0.6, spec)
        m2 = double_integral(ball, ball, 0.6, spec)
        assert m1.value == m2.value and m1.error == m2.error

    def test_mc_seed_changes_value(self):
        ball = geometry.ball_of_volume(2, math.pi)
        m1 = double_integral(ball, ball, 0.6, QuadratureSpec(method="monte-carlo", budget=40_000, seed=5))
        m2 = double_integral(ball, ball, 0.6, QuadratureSpec(method="monte-carlo", budget=40_000, seed=6))
        assert m1.value != m2.value

    def test_mc_stderr_shrinks_with_budget(self):
        ball = geometry.ball_of_volume(2, math.pi)
        m1 = double_integral(ball, ball, 0.6, QuadratureSpec(method="monte-carlo", budget=40_000, seed=5))
        m2 = double_integral(ball, ball, 0.6, QuadratureSpec(method="monte-carlo", budget=160_000, seed=5))
        # 4x the samples should halve the standard error, up to estimator noise
        assert 1.3 < m1.error / m2.error < 3.2

    def test_mc_heavy_pair_integrand_warns(self):
        ball = geometry.ball_of_volume(2, math.pi)
        est = double_integral(
            ball, ball, riesz_integrand(2, 1.5),
            QuadratureSpec(method="monte-carlo", budget=2000, seed=0),
        )
        assert est.warning is not None

    def test_kernel_dimension_mismatch(self):
        ball = geometry.ball_of_volume(2, math.pi)
        with pytest.raises(ParameterError):
            double_integral(ball, ball, frac_kernel(N=3, eps=0.7), QuadratureSpec())


class TestComplementIntegral:
    def test_disk_boundary_energy(self):
        ball = geometry.ball_of_volume(2, math.pi)
        est = complement_double_integral(ball, frac_kernel(), QuadratureSpec(budget=40_000))
        dev = abs(est.value - DISK_BOUNDARY_HALF)
        assert dev <= 4.0 * est.error
        assert dev <= 0.02 * DISK_BOUNDARY_HALF

    def test_pinned_box_reproducibility(self):
        ball = geometry.ball_of_volume(2, math.pi)
        box = (np.array([-4.0, -4.0]), np.array([4.0, 4.0]))
        e1 = complement_double_integral(ball, frac_kernel(), QuadratureSpec(), box=box)
        e2 = complement_double_integral(ball, frac_kernel(), QuadratureSpec(), box=box)
        assert e1.value == e2.value

    def test_mc_heavy_tail_warns(self):
        ball = geometry.ball_of_volume(2, math.pi)
        est = complement_double_integral(
            ball, frac_kernel(), QuadratureSpec(method="monte-carlo", budget=2000, seed=1)
        )
        assert est.warning is not None


class TestSphereIntegrals:
    def test_constant_gives_sphere_area(self):
        spec = QuadratureSpec(budget=20_000)
        for N, area in ((2, 2.0 * math.pi), (3, 4.0 * math.pi)):
            est = sphere_average(lambda v: np.ones(v.shape[0]), N, spec)
            assert est.value == pytest.approx(area, rel=1e-12)

    def test_positive_part_projection(self):
        # int over the sphere of (e1 . nu)_+ is 2 in the plane and pi in space
        spec = QuadratureSpec(budget=20_000)
        est2 = sphere_average(lambda v: np.clip(v[:, 0], 0.0, None), 2, spec)
        assert est2.value == pytest.approx(2.0, rel=1e-6)
        est3 = sphere_average(lambda v: np.clip(v[:, 0], 0.0, None), 3, spec)
        assert est3.value == pytest.approx(math.pi, rel=1e-3)

    def test_unsupported_dimension(self):
        with pytest.raises(ParameterError):
            sphere_average(lambda v: np.ones(v.shape[0]), 4, QuadratureSpec())


class TestVoxelize:
    def test_disk_volume_converges(self):
        ball = geometry.ball_of_volume(2, math.pi)
        v = voxelize(ball, cells_per_axis=128)
        assert geometry.volume(v) == pytest.approx(math.pi, rel=5e-3)

    def test_voxel_passthrough(self):
        rng = np.random.default_rng(1)
        blob = geometry.random_blob(2, rng, grid_n=16)
        assert voxelize(blob) is blob

    def test_grid_size_guard(self):
        ball = geometry.ball_of_volume(2, math.pi)
        with pytest.raises(ParameterError):
            voxelize(ball, cells_per_axis=20_000)


class TestEstimateRecord:
    def test_as_record_fields(self):
        est = IntegralEstimate(1.5, 0.1, 100, "tensor-midpoint", 0, None)
        rec = est.as_record()
        assert rec == {
            "value": 1.5,
            "error": 0.1,
            "samples": 100,
            "method": "tensor-midpoint",
            "seed": 0,
            "warning": "",
        }

"""Row projection, curve fitting, fitted-map rendering, segmentation."""

import numpy as np
import pytest

from fsflow import (
    CameraIntrinsics,
    CurveFit,
    DegenerateFit,
    DimensionMismatch,
    EmptyInput,
    FlowMap,
    InsufficientRows,
    MountConfig,
    NoiseSpec,
    PoseDelta,
    RowProjection,
    SceneSpec,
    UnitsMismatch,
    add_noise,
    fit_fv_curve,
    insert_obstacle,
    render_fitted_fv,
    render_flow_map,
    row_projection,
    segment_freespace,
    synth_ground_truth,
)


def simplest_scene(z_d=1.0, h=1.5, fy=700.0, width=400, height=300):
    """Noiseless zero-roll straight-driving scene; the analytic profile is
    f(v) = k*(v-v0)^2/(1 - k*(v-v0)) with k = z_d/(h*fy)."""
    k = CameraIntrinsics(fx=700.0, fy=fy, u0=200.0, v0=100.0)
    m = MountConfig(h=h, theta=0.0)
    spec = SceneSpec(intrinsics=k, mount=m, width=width, height=height,
                     lateral_extent=40.0, longitudinal_extent=200.0)
    return spec, synth_ground_truth(spec, PoseDelta(z_d=z_d))


def constant_map(value, width=80, height=60, units="px"):
    return FlowMap(
        np.zeros((height, width)),
        np.full((height, width), float(value)),
        np.ones((height, width), dtype=bool),
        units,
    )


class TestRowProjection:
    def test_constant_map(self):
        rp = row_projection(constant_map(3.0))
        assert rp.rows.size == 60
        assert np.all(np.abs(rp.values - 3.0) <= 0.125)

    def test_tracks_analytic_curve(self):
        spec, gt = simplest_scene(z_d=1.0)
        rp = row_projection(gt)
        k_true = 1.0 / (1.5 * 700.0)
        dv = rp.rows - 100.0
        analytic = k_true * dv**2 / (1.0 - k_true * dv)
        assert np.all(np.abs(rp.values - analytic) <= 0.125)  # bin_w / 2

    def test_mode_resists_outlier_population(self, rng):
        # 40% of each row is a constant far off the curve
        f = constant_map(2.0, width=100, height=40)
        outlier_cols = rng.random((40, 100)) < 0.4
        f.fv[outlier_cols] = 30.0
        rp = row_projection(f)
        assert np.all(np.abs(rp.values - 2.0) <= 0.125)

    def test_column_permutation_invariance(self, rng):
        spec, gt = simplest_scene()
        rp = row_projection(gt)
        perm = rng.permutation(gt.width)
        shuffled = FlowMap(gt.fu[:, perm], gt.fv[:, perm], gt.valid[:, perm], gt.units)
        rp2 = row_projection(shuffled)
        assert np.array_equal(rp.rows, rp2.rows)
        np.testing.assert_array_equal(rp.values, rp2.values)

    def test_min_support_drops_sparse_rows(self):
        f = constant_map(1.0, width=30, height=10)
        f.valid[3, :] = False
        f.valid[4, :25] = False  # 5 remaining < 10
        rp = row_projection(f)
        assert 3 not in rp.rows
        assert 4 not in rp.rows
        assert np.all(rp.support[rp.rows != 0] >= 10)

    def test_empty_input_raises(self):
        f = constant_map(1.0)
        f.valid[:] = False
        with pytest.raises(EmptyInput):
            row_projection(f)

    def test_mask_narrows_selection(self):
        f = constant_map(5.0)
        mask = np.zeros_like(f.valid)
        mask[:10, :] = True
        rp = row_projection(f, mask)
        assert rp.rows.max() == 9


class TestFitFvCurve:
    def test_parameter_recovery_worked_example(self):
        spec, gt = simplest_scene(z_d=1.0, h=1.5, fy=700.0)
        rp = row_projection(gt)
        fit = fit_fv_curve(rp, spec.intrinsics, "rational-displacement")
        k_true = 1.0 / 1050.0
        assert abs(fit.coeffs[0] - k_true) / k_true < 1e-6
        assert fit.rms < 1e-9

    @pytest.mark.parametrize("z_d,h,fy", [(0.5, 1.2, 500.0), (2.0, 2.2, 900.0),
                                          (1.3, 0.8, 700.0)])
    def test_parameter_recovery_sweep(self, z_d, h, fy):
        spec, gt = simplest_scene(z_d=z_d, h=h, fy=fy)
        rp = row_projection(gt)
        fit = fit_fv_curve(rp, spec.intrinsics, "rational-displacement")
        k_true = z_d / (h * fy)
        assert abs(fit.coeffs[0] - k_true) / k_true < 1e-6

    def test_all_zero_rows_give_zero_curve(self):
        rp = row_projection(constant_map(0.0))
        fit = fit_fv_curve(rp, CameraIntrinsics(700, 700, 40, 10), "rational-displacement")
        assert fit.coeffs[0] == 0.0
        assert fit.rms == 0.0

    def test_insufficient_rows_generic(self):
        rp = RowProjection(rows=np.array([10, 11]), values=np.array([1.0, 1.1]),
                           support=np.array([20, 20]), height=100, units="px")
        with pytest.raises(InsufficientRows):
            fit_fv_curve(rp, CameraIntrinsics(700, 700, 0, 0), "generic-quadratic")

    def test_quadratic_velocity_recovery(self):
        k = CameraIntrinsics(fx=700.0, fy=700.0, u0=200.0, v0=100.0)
        m = MountConfig(h=1.5, theta=0.0)
        v_r = 12.0
        vel = render_flow_map(k, m, __import__("fsflow").VelocityState(v_r=v_r),
                              width=400, height=300, model="simple-vel")
        rp = row_projection(vel)
        fit = fit_fv_curve(rp, k, "quadratic-velocity")
        k_true = v_r / (1.5 * 700.0)
        assert abs(fit.coeffs[0] - k_true) / k_true < 1e-6
        assert fit.units == "px/s"

    def test_generic_quadratic_exact(self):
        v = np.arange(20, 60)
        a, b, c = 0.002, -0.1, 3.0
        rp = RowProjection(rows=v, values=a * v**2 + b * v + c,
                           support=np.full(v.size, 50), height=100, units="px")
        fit = fit_fv_curve(rp, CameraIntrinsics(700, 700, 0, 0), "generic-quadratic")
        assert fit.coeffs == pytest.approx((a, b, c), abs=1e-9)
        assert fit.rms < 1e-9

    def test_reweighting_sheds_contaminated_rows(self):
        # clean quadratic everywhere except four wildly offset rows
        v = np.arange(10, 60)
        k_true = 1e-3
        values = k_true * (v - 5.0) ** 2
        values[[5, 15, 25, 35]] += 40.0
        rp = RowProjection(rows=v, values=values, support=np.full(v.size, 50),
                           height=100, units="px")
        fit = fit_fv_curve(rp, CameraIntrinsics(700, 700, 0, 5.0), "quadratic-velocity")
        assert abs(fit.coeffs[0] - k_true) / k_true < 0.05
        assert fit.inliers <= v.size - 4

    def test_rational_invalid_denominator_raises(self):
        # rows straddling v0 with a large value below pull k negative enough
        # that 1 - k*(v - v0) <= 0 on the upper row
        rp = RowProjection(rows=np.array([90, 110]), values=np.array([100.0, 0.0]),
                           support=np.array([30, 30]), height=200, units="px")
        with pytest.raises(DegenerateFit):
            fit_fv_curve(rp, CameraIntrinsics(700, 700, 0, 100.0), "rational-displacement")

    def test_unknown_kind_rejected(self):
        rp = row_projection(constant_map(1.0))
        with pytest.raises(ValueError):
            fit_fv_curve(rp, CameraIntrinsics(700, 700, 0, 0), "cubic")


class TestRenderFittedFv:
    def test_noiseless_fit_below_one_pixel(self):
        spec, gt = simplest_scene()
        rp = row_projection(gt)
        fit = fit_fv_curve(rp, spec.intrinsics, "rational-displacement")
        fitted = render_fitted_fv(fit, gt.width, gt.height)
        both = gt.valid & fitted.valid
        assert both.any()
        assert np.abs(gt.fv - fitted.fv)[both].max() < 1.0

    def test_zero_curve_renders_zero(self):
        fit = CurveFit(kind="rational-displacement", coeffs=(0.0,), v0=100.0,
                       rms=0.0, inliers=10, units="px")
        fitted = render_fitted_fv(fit, 32, 24)
        assert np.all(fitted.fv == 0.0)
        assert fitted.valid.all()

    def test_rows_are_constant(self):
        fit = CurveFit(kind="quadratic-velocity", coeffs=(1e-3,), v0=10.0,
                       rms=0.0, inliers=10, units="px/s")
        fitted = render_fitted_fv(fit, 17, 23)
        assert np.all(fitted.fv == fitted.fv[:, :1])
        assert np.all(fitted.fu == 0.0)


class TestSegmentFreespace:
    def test_identical_maps_all_freespace(self):
        spec, gt = simplest_scene()
        mask = segment_freespace(gt, gt, tau=1.0)
        assert np.array_equal(mask, gt.valid)

    def test_obstacle_patch_rejected_ground_kept(self):
        spec, gt = simplest_scene()
        rp = row_projection(gt)
        fit = fit_fv_curve(rp, spec.intrinsics, "rational-displacement")
        fitted = render_fitted_fv(fit, gt.width, gt.height)
        tau = 1.0
        bumped, gt_mask = insert_obstacle(gt, (150, 200, 60, 40), (0.0, 5.0 * tau))
        seg = segment_freespace(bumped, fitted, tau=tau)
        assert not seg[200:240, 150:210].any()
        ground = gt.valid & ~np.zeros_like(gt.valid)
        ground[200:240, 150:210] = False
        assert seg[ground & fitted.valid].all()

    def test_zero_tau_rejects_noise(self):
        spec, gt = simplest_scene()
        noisy = add_noise(gt, NoiseSpec(sigma=0.5, seed=3))
        seg = segment_freespace(noisy, gt, tau=0.0)
        assert seg.sum() < 0.01 * gt.valid.sum()

    def test_dimension_mismatch(self):
        a = constant_map(1.0, width=10, height=10)
        b = constant_map(1.0, width=11, height=10)
        with pytest.raises(DimensionMismatch):
            segment_freespace(a, b, tau=1.0)

    def test_units_mismatch(self):
        a = constant_map(1.0, units="px")
        b = constant_map(1.0, units="px/s")
        with pytest.raises(UnitsMismatch):
            segment_freespace(a, b, tau=1.0)


class TestNoiseRobustness:
    @pytest.mark.parametrize("sigma", [0.1, 0.25, 0.5])
    def test_recovered_k_and_fitted_map_stable(self, sigma):
        spec, gt = simplest_scene(z_d=1.0)
        k_true = 1.0 / 1050.0
        noisy = add_noise(gt, NoiseSpec(sigma=sigma, seed=17))
        rp = row_projection(noisy)
        fit = fit_fv_curve(rp, spec.intrinsics, "rational-displacement")
        assert abs(fit.coeffs[0] - k_true) / k_true < 0.01
        fitted = render_fitted_fv(fit, gt.width, gt.height)
        both = gt.valid & fitted.valid
        assert np.abs(gt.fv - fitted.fv)[both].max() < 1.0

import numpy as np
import pytest

import xdflow.stepping as stepping
from xdflow.diagnostics import component_mass, discrete_entropy
from xdflow.mesh import Field, build_mesh_1d, build_mesh_2d, project_initial
from xdflow.models import get_model, model_heat, model_surfactant
from xdflow.quadrature import gauss_lobatto_rule, lagrange_basis_matrix
from xdflow.scheme1d import FluxChoice
from xdflow.stepping import (RunReport, SolverBreakdown, StepConfig,
                             auto_rk_order, cell_averages, cfl_bound,
                             euler_step, integrate, scaling_limiter,
                             ssp_rk_step)

LF = FluxChoice(kind="lax_friedrichs")
ALT = FluxChoice(kind="alternating")


def make_1d(k=2, n=6, bc="periodic", a=0.0, b=1.0):
    rule = gauss_lobatto_rule(k)
    return rule, build_mesh_1d(a, b, n, rule, bc)


class TestScalingLimiter:
    def test_worked_example(self):
        # k = 2 cell with values (-0.1, 0.5, 0.8): average 0.45,
        # theta = (0.45 - 1e-13)/0.55, floored minimum at 1e-13
        rule, mesh = make_1d(k=2, n=2)
        vals = np.array([[[-0.1, 0.5, 0.8], [0.5, 0.5, 0.5]]])
        out = scaling_limiter(Field(vals), mesh, rule, StepConfig()).values
        theta = (0.45 - 1e-13) / 0.55
        expect = 0.45 + theta * (vals[0, 0] - 0.45)
        np.testing.assert_allclose(out[0, 0], expect, rtol=1e-12)
        assert abs(out[0, 0, 0] - 1e-13) < 1e-15
        np.testing.assert_allclose(out[0, 0], [1e-13, 0.49090909090909, 0.73636363636364],
                                   rtol=1e-9, atol=1e-15)
        # untouched cell stays bit-identical
        np.testing.assert_array_equal(out[0, 1], vals[0, 1])

    def test_constant_cell_unchanged(self):
        rule, mesh = make_1d(k=3, n=2)
        vals = np.full((2, 2, 4), 0.7)
        out = scaling_limiter(Field(vals), mesh, rule, StepConfig()).values
        np.testing.assert_array_equal(out, vals)

    def test_average_preserved_and_floored(self):
        rule, mesh = make_1d(k=3, n=8)
        rng = np.random.default_rng(1)
        cfg = StepConfig()
        for _ in range(100):
            vals = rng.uniform(-0.5, 1.5, size=(2, 8, 4))
            out = scaling_limiter(Field(vals), mesh, rule, cfg).values
            a0 = cell_averages(vals, rule, 1)
            a1 = cell_averages(out, rule, 1)
            np.testing.assert_allclose(a1, a0, rtol=1e-15, atol=1e-15)
            nonneg = a0 >= 0
            floor = np.minimum(cfg.epsilon_floor, a0)
            assert (out.min(axis=-1) - floor)[nonneg].min() >= -1e-16
            # negative-average cells pass through untouched
            neg = ~nonneg
            if neg.any():
                np.testing.assert_array_equal(out[neg], vals[neg])

    def test_tiny_average_becomes_constant_cell(self):
        rule, mesh = make_1d(k=2, n=2)
        vals = np.array([[[5e-14, -4e-14, 2e-13], [1.0, 1.0, 1.0]]])
        avg = cell_averages(vals, rule, 1)[0, 0]
        assert 0 <= avg < 1e-13
        out = scaling_limiter(Field(vals), mesh, rule, StepConfig()).values
        np.testing.assert_allclose(out[0, 0], avg, rtol=1e-12)

    def test_theta_safety_only_strengthens_active_clips(self):
        rule, mesh = make_1d(k=2, n=2)
        cfg = StepConfig(theta_safety=0.95)
        healthy = np.array([[[0.4, 0.5, 0.6], [1.0, 2.0, 3.0]]])
        out = scaling_limiter(Field(healthy), mesh, rule, cfg).values
        # no clip needed anywhere: the safety factor must not squash cells
        np.testing.assert_array_equal(out, healthy)
        clipped = np.array([[[-0.1, 0.5, 0.8], [1.0, 1.0, 1.0]]])
        out2 = scaling_limiter(Field(clipped), mesh, rule, cfg).values
        assert out2[0, 0, 0] > 0  # stronger clip than the plain theta

    def test_pointwise_sampling_controls_interior_dips(self):
        # parabola through (1.5, 0, 0.5) at nodes (-1, 0, 1) dips below zero
        # inside the cell although all nodal values are nonnegative
        rule, mesh = make_1d(k=2, n=2)
        vals = np.array([[[1.5, 0.0, 0.5], [1.0, 1.0, 1.0]]])
        nodal_cfg = StepConfig()
        point_cfg = StepConfig(pointwise_limiter=True)
        pts = np.linspace(-1, 1, 4 * rule.n_nodes)
        basis = lagrange_basis_matrix(rule, pts)

        out_nodal = scaling_limiter(Field(vals), mesh, rule, nodal_cfg).values
        assert (out_nodal[0, 0] @ basis.T).min() < -1e-3
        out_point = scaling_limiter(Field(vals), mesh, rule, point_cfg).values
        assert (out_point[0, 0] @ basis.T).min() >= 0.0

    def test_2d_average_preservation(self):
        rule = gauss_lobatto_rule(2)
        mesh = build_mesh_2d((0, 1, 0, 1), 3, 3, rule, "periodic")
        rng = np.random.default_rng(3)
        vals = rng.uniform(-0.2, 1.0, size=(2, 3, 3, 3, 3))
        out = scaling_limiter(Field(vals), mesh, rule, StepConfig()).values
        np.testing.assert_allclose(cell_averages(out, rule, 2),
                                   cell_averages(vals, rule, 2),
                                   rtol=1e-15, atol=1e-15)


class TestCflBound:
    def test_face_contribution_arithmetic(self):
        # k = 2 has w1 = 1/3; a face with h = 0.1 and alpha + v = 2
        # contributes tau <= (1/3)(0.1)/2
        from xdflow.stepping import _face_taus
        w = gauss_lobatto_rule(2).weights
        v_m = np.array([[0.0, 0.0]])
        v_p = np.array([[2.0 - 0.0, 0.0]])   # alpha set via alpha_eff below
        alpha = np.array([0.0, 0.0])
        taus = _face_taus(v_m, v_p, alpha, np.array([0.1]), w)
        assert min(taus) == pytest.approx((1 / 3) * 0.1 / 2.0)

    def test_zero_velocity_unconstrained(self):
        rule, mesh = make_1d(k=2, n=6)
        field = Field(np.full((2, 6, 3), 1.4))
        assert cfl_bound(field, mesh, rule, model_heat(), LF) == np.inf

    def test_symmetric_data_symmetric_bound(self):
        rule, mesh = make_1d(k=2, n=8, a=-1.0, b=1.0)
        vals = 2.0 + np.sin(np.pi * mesh.nodes)
        field = Field(np.stack([vals, vals[::-1, ::-1]]))
        tau = cfl_bound(field, mesh, rule, model_heat(), LF)
        mirrored = Field(field.values[:, ::-1, ::-1].copy())
        tau_m = cfl_bound(mirrored, mesh, rule, model_heat(), LF)
        assert tau == pytest.approx(tau_m, rel=1e-12)


class TestWeakPositivity:
    @pytest.mark.parametrize("name", ["heat", "skt", "surfactant", "tumor"])
    def test_euler_under_half_bound_keeps_averages(self, name):
        rule, mesh = make_1d(k=2, n=8)
        model = get_model(name)
        rng = np.random.default_rng(42)
        cfg = StepConfig(limiter_on=False)
        for _ in range(60):
            vals = np.maximum(rng.uniform(-0.3, 1.5, size=(2, 8, 3)), 0.0)
            if name == "tumor":
                vals *= 0.3
            tau = 0.5 * cfl_bound(Field(vals), mesh, rule, model, LF)
            if not np.isfinite(tau):
                continue
            out = euler_step(Field(vals), 0.0, tau, mesh, rule, model, LF, cfg)
            assert out.halvings == 0
            assert cell_averages(out.field.values, rule, 1).min() >= -1e-14

    def test_2d_bound_has_half_factor(self):
        rule = gauss_lobatto_rule(2)
        mesh = build_mesh_2d((0, 1, 0, 1), 4, 4, rule, "periodic")
        rng = np.random.default_rng(7)
        model = get_model("skt")
        cfg = StepConfig(limiter_on=False)
        for _ in range(20):
            vals = np.maximum(rng.uniform(-0.2, 1.2, size=(2, 4, 4, 3, 3)), 0.0)
            tau = 0.5 * cfl_bound(Field(vals), mesh, rule, model, LF)
            if not np.isfinite(tau):
                continue
            out = euler_step(Field(vals), 0.0, tau, mesh, rule, model, LF, cfg)
            assert cell_averages(out.field.values, rule, 2).min() >= -1e-14


class TestSteps:
    def test_steady_state_unchanged(self):
        rule, mesh = make_1d(k=2, n=6)
        field = Field(np.full((2, 6, 3), 1.1))
        out = euler_step(field, 0.0, 1e-4, mesh, rule, model_heat(), LF, StepConfig())
        assert out.halvings == 0
        np.testing.assert_allclose(out.field.values, 1.1, rtol=1e-12)

    def test_rk_amplification_factors(self):
        # spatially constant mode of y' = lam * y: one step multiplies by the
        # stability polynomial of the displayed schemes
        lam = -100.0
        tau = 1e-3
        z = lam * tau
        base = np.full((1, 4, 3), 1.0)
        cfg = StepConfig(limiter_on=False)
        rule = gauss_lobatto_rule(2)

        def rhs(y, t):
            return lam * y

        for order, factor in ((1, 1 + z), (2, 1 + z + z**2 / 2),
                              (3, 1 + z + z**2 / 2 + z**3 / 6)):
            got = stepping._try_step_fn(base, 0.0, tau, order, rhs, rule, 1, cfg)[0]
            np.testing.assert_allclose(got, factor, rtol=1e-13)
        assert abs((1 + z + z**2 / 2) - 0.905) < 1e-12
        assert abs((1 + z + z**2 / 2 + z**3 / 6) - 0.9048333333333333) < 1e-12

    def test_order_selection_rule(self):
        assert auto_rk_order(1) == 1
        assert auto_rk_order(2) == 2
        assert auto_rk_order(3) == 2
        assert auto_rk_order(4) == 3
        assert auto_rk_order(5) == 3

    def test_ssp_rk_step_validates_order(self):
        rule, mesh = make_1d()
        field = Field(np.full((2, 6, 3), 1.0))
        with pytest.raises(ValueError):
            ssp_rk_step(field, 0.0, 1e-5, 4, mesh, rule, model_heat(), LF, StepConfig())

    def test_oversized_step_halves_and_recovers(self):
        # steep front: an oversized step makes a cell average negative, the
        # halving protocol must retry and land nonnegative
        rule, mesh = make_1d(k=2, n=10, bc="zero_flux", a=0.0, b=3.0)
        model = model_surfactant(g=0.02)
        f0 = project_initial(mesh, rule, model.initial[1])
        bound = cfl_bound(f0, mesh, rule, model, LF)
        cfg = StepConfig(max_halvings=60)
        out = euler_step(f0, 0.0, 2000.0 * bound, mesh, rule, model, LF, cfg)
        assert out.accepted
        assert out.halvings >= 1
        assert cell_averages(out.field.values, rule, 1).min() >= 0.0

    def test_halving_limit_aborts_with_diagnostic(self):
        rule, mesh = make_1d(k=2, n=10, bc="zero_flux", a=0.0, b=3.0)
        model = model_surfactant(g=0.02)
        f0 = project_initial(mesh, rule, model.initial[1])
        bound = cfl_bound(f0, mesh, rule, model, LF)
        cfg = StepConfig(max_halvings=2)
        with pytest.raises(SolverBreakdown, match="halved 2 times"):
            euler_step(f0, 0.0, 5000.0 * bound, mesh, rule, model, LF, cfg)

    def test_alternating_negative_average_aborts(self):
        rule, mesh = make_1d(k=2, n=10, bc="zero_flux", a=0.0, b=3.0)
        model = model_surfactant(g=0.02)
        f0 = project_initial(mesh, rule, model.initial[1])
        cfg = StepConfig()
        with pytest.raises(SolverBreakdown, match="alternating"):
            euler_step(f0, 0.0, 1.0, mesh, rule, model, ALT, cfg)


class TestIntegrate:
    def test_single_step_when_t_end_equals_tau(self):
        rule, mesh = make_1d(k=2, n=4)
        field = Field(np.full((2, 4, 3), 1.0))
        cfg = StepConfig(mu_diff=1e-3, sample_dt=0.0)
        tau = cfg.mu_diff * float(mesh.h.min()) ** 2
        _, rep = integrate(field, tau, cfg, mesh, rule, model_heat(), LF)
        assert rep.accepted_steps == 1
        assert rep.times[-1] == pytest.approx(tau)

    def test_final_partial_step_lands_exactly(self):
        rule, mesh = make_1d(k=2, n=4)
        field = Field(np.full((2, 4, 3), 1.0))
        cfg = StepConfig(mu_diff=1e-3, sample_dt=0.0)
        tau = cfg.mu_diff * float(mesh.h.min()) ** 2
        t_end = 2.5 * tau
        _, rep = integrate(field, t_end, cfg, mesh, rule, model_heat(), LF)
        assert rep.accepted_steps == 3
        assert rep.times[-1] == pytest.approx(t_end, rel=1e-12)

    def test_heat_run_entropy_and_mass(self):
        rule, mesh = make_1d(k=2, n=20, a=-1.0, b=1.0)
        model = model_heat()
        f0 = project_initial(mesh, rule, model.initial[1])
        cfg = StepConfig(mu_diff=1e-3, limiter_on=False, sample_dt=0.0)
        state, rep = integrate(f0, 5e-4, cfg, mesh, rule, model, ALT)
        e = rep.entropy_array()
        assert (np.diff(e) <= 1e-12).all()
        mass = rep.mass_array()
        assert np.abs(mass - mass[0]).max() <= 1e-12 * np.abs(mass[0]).max()
        assert rep.times == sorted(rep.times)

    def test_abort_reports_last_good_time(self):
        import dataclasses
        rule, mesh = make_1d(k=2, n=4)
        model = model_heat()
        poison = dataclasses.replace(
            model, source=lambda pos, t: np.full((2,) + pos[0].shape,
                                                 np.nan if t > 1e-6 else 0.0))
        field = Field(np.full((2, 4, 3), 1.0))
        cfg = StepConfig(mu_diff=1e-2, sample_dt=0.0)
        with pytest.raises(SolverBreakdown, match="last good time"):
            integrate(field, 1.0, cfg, mesh, rule, poison, LF)

    def test_sampling_stride(self):
        rule, mesh = make_1d(k=2, n=4)
        field = Field(np.full((2, 4, 3), 1.0))
        cfg = StepConfig(mu_diff=1e-3, sample_dt=1.0)
        tau = cfg.mu_diff * float(mesh.h.min()) ** 2
        _, rep = integrate(field, 10 * tau, cfg, mesh, rule, model_heat(), LF)
        assert len(rep.times) == 2        # initial plus final only


class TestConfigValidation:
    def test_step_config_ranges(self):
        with pytest.raises(ValueError):
            StepConfig(mu_diff=0.0)
        with pytest.raises(ValueError):
            StepConfig(theta_safety=0.0)
        with pytest.raises(ValueError):
            StepConfig(theta_safety=1.5)
        with pytest.raises(ValueError):
            StepConfig(rk_order=4)
        with pytest.raises(ValueError):
            StepConfig(max_halvings=-1)

import numpy as np
import pytest

from gyrokin.fields import PhaseState, constant_field, momentum_gamma
from gyrokin.straighten import RotationField
from gyrokin.characteristics import (IntegratorConfig, Trajectory,
                                     backward_flow, batch_full_flow,
                                     batch_linear_flow,
                                     batch_straightened_flow, flow_jacobian,
                                     integrate_full, integrate_linear,
                                     integrate_straightened,
                                     support_radius_bound)


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(scheme="leapfrog")
    with pytest.raises(ValueError):
        IntegratorConfig(scheme="rk4-reference", steps_per_gyroperiod=8)
    with pytest.raises(ValueError):
        IntegratorConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(epsilon=1.5)


class TestLinearFlow:
    def test_full_gyration_returns_momentum(self, const_model):
        eps = 0.1
        xi = np.array([1.0, 0.0, 0.0])
        gam = float(momentum_gamma(xi))
        period = 2 * np.pi * eps * gam
        cfg = IntegratorConfig(t_final=period, epsilon=eps)
        tr = integrate_linear(const_model, PhaseState(np.zeros(3), xi), cfg,
                              t_grid=[period / 2, period])
        assert np.max(np.abs(tr.xis[-1] - xi)) < 1e-12
        # displacement stays within the gyroradius circle
        radius = eps * gam * np.linalg.norm(xi) / 1.0
        assert np.all(np.linalg.norm(tr.xs[1:] - tr.xs[0], axis=1)
                      <= 2 * radius + 1e-12)

    def test_axial_momentum_moves_straight(self, fixed_model):
        z = 0.8
        xi = np.array([0.0, 0.0, z])
        gam = float(momentum_gamma(xi))
        cfg = IntegratorConfig(t_final=1.0, epsilon=1e-2)
        tr = integrate_linear(fixed_model, PhaseState(np.zeros(3), xi), cfg)
        for t, x, v in zip(tr.times, tr.xs, tr.xis):
            assert np.allclose(v, xi, atol=1e-14)
            assert np.allclose(x, [0, 0, t * z / gam], atol=1e-12)

    def test_norm_drift_small_and_matches_reference(self, fixed_model):
        eps = 1e-3
        state = PhaseState([0.1, 0.2, 0.0], [0.7, -0.1, 0.4])
        cfg = IntegratorConfig(t_final=0.2, epsilon=eps)
        tr = integrate_linear(fixed_model, state, cfg)
        assert tr.invariant_drift <= 1e-10

        ref_cfg = IntegratorConfig(scheme="rk4-reference",
                                   steps_per_gyroperiod=512,
                                   t_final=0.2, epsilon=eps)
        xs_ref, xis_ref = batch_linear_flow(fixed_model, state.x[None],
                                            state.xi[None], tr.times[1:],
                                            ref_cfg)
        assert np.max(np.abs(tr.xs[1:] - xs_ref[:, 0])) < 1e-6
        assert np.max(np.abs(tr.xis[1:] - xis_ref[:, 0])) < 1e-6

    def test_displacement_bounded_by_time(self, fixed_model, rng):
        cfg = IntegratorConfig(t_final=0.7, epsilon=1e-2)
        X0 = rng.uniform(-0.3, 0.3, size=(20, 3))
        Xi0 = rng.normal(size=(20, 3))
        xs, _ = batch_linear_flow(fixed_model, X0, Xi0, [0.7], cfg)
        assert np.max(np.linalg.norm(xs[-1] - X0, axis=1)) <= 0.7 + 1e-12


class TestStraightenedFlow:
    def test_reduces_to_linear_for_fixed_direction(self, fixed_model):
        rot = RotationField(fixed_model)
        state = PhaseState([0.2, -0.1, 0.3], [0.5, 0.4, -0.2])
        cfg = IntegratorConfig(t_final=0.5, epsilon=1e-2)
        tr_s = integrate_straightened(fixed_model, rot, None, state, cfg)
        tr_l = integrate_linear(fixed_model, state, cfg)
        assert np.max(np.abs(tr_s.xs - tr_l.xs)) < 1e-10
        assert np.max(np.abs(tr_s.xis - tr_l.xis)) < 1e-10

    def test_general_field_conserves_norm(self, general_model,
                                          general_rotation):
        state = PhaseState([0.2, -0.1, 0.0], [0.6, 0.3, 0.4])
        cfg = IntegratorConfig(t_final=0.5, epsilon=1e-2)
        tr = integrate_straightened(general_model, general_rotation, None,
                                    state, cfg)
        assert tr.invariant_drift <= 1e-8

    def test_scaled_field_growth_obeys_bound(self, general_model,
                                             general_rotation):
        E0 = np.array([0.3, -0.2, 0.5])
        fields = (lambda t, X: np.broadcast_to(E0, X.shape).copy(),
                  lambda t, X: np.zeros_like(X))
        eps, t = 1e-2, 0.5
        state = PhaseState([0.1, 0.0, 0.0], [0.5, 0.2, -0.3])
        cfg = IntegratorConfig(t_final=t, epsilon=eps)
        tr = integrate_straightened(general_model, general_rotation, None,
                                    state, cfg, fields=fields)
        norm0 = np.linalg.norm(state.xi)
        growth = abs(np.linalg.norm(tr.xis[-1]) ** 2 - norm0 ** 2)
        e_sup = np.linalg.norm(E0)
        bound = 2 * eps * t * e_sup * (norm0 + eps * t * e_sup)
        assert growth <= bound * (1 + 1e-6)

    def test_nonfinite_field_aborts_with_time(self, general_model,
                                              general_rotation):
        from gyrokin.characteristics import IntegrationAbort

        def bad_E(t, X):
            out = np.zeros_like(X)
            if t > 0.05:
                out[..., 0] = np.nan
            return out

        fields = (bad_E, lambda t, X: np.zeros_like(X))
        cfg = IntegratorConfig(t_final=0.2, epsilon=1e-2)
        state = PhaseState([0.0, 0.0, 0.0], [0.4, 0.1, 0.2])
        with pytest.raises(IntegrationAbort) as err:
            integrate_straightened(general_model, general_rotation, None,
                                   state, cfg, fields=fields)
        assert err.value.t > 0.0


class TestFullFlow:
    def test_reduces_to_linear_when_field_free(self, fixed_model):
        state = PhaseState([0.1, 0.1, 0.0], [0.6, -0.3, 0.2])
        cfg = IntegratorConfig(t_final=0.4, epsilon=1e-2)
        tr_f = integrate_full(fixed_model, state, cfg)
        tr_l = integrate_linear(fixed_model, state, cfg)
        assert np.max(np.abs(tr_f.xs - tr_l.xs)) < 1e-10
        assert np.max(np.abs(tr_f.xis - tr_l.xis)) < 1e-10

    def test_exb_drift_against_reference(self, const_model):
        # small constant E perpendicular to B: the gyro-center drifts at
        # eps^2 E x B_e / b^2; sampling at whole gyration periods removes
        # the much larger gyro-circle displacement. Verified against the
        # rk4 reference, not a closed form.
        eps = 1e-2
        E0 = np.array([0.5, 0.0, 0.0])
        fields = (lambda tt, X: np.broadcast_to(E0, X.shape).copy(),
                  lambda tt, X: np.zeros_like(X))
        xi0 = np.array([0.4, 0.0, 0.0])
        gam = float(momentum_gamma(xi0))
        period = 2 * np.pi * eps * gam
        n_periods = 14
        t = n_periods * period
        state = PhaseState(np.zeros(3), xi0)
        cfg = IntegratorConfig(t_final=t, epsilon=eps,
                               steps_per_gyroperiod=256)
        ref = IntegratorConfig(scheme="rk4-reference", t_final=t, epsilon=eps,
                               steps_per_gyroperiod=1024)
        grid = period * np.arange(1, n_periods + 1)
        tr = integrate_full(const_model, state, cfg, fields=fields, t_grid=grid)
        xs_ref, xis_ref = batch_full_flow(const_model, state.x[None],
                                          state.xi[None], grid, ref,
                                          fields=fields)
        assert np.max(np.abs(tr.xs[1:] - xs_ref[:, 0])) < 1e-6
        assert np.max(np.abs(tr.xis[1:] - xis_ref[:, 0])) < 1e-6
        drift_speed = (tr.xs[-1, 1] - tr.xs[0, 1]) / t
        expected = -(eps ** 2) * E0[0]          # (eps^2 E x B_e / b^2)_y
        assert abs(drift_speed - expected) < 0.3 * abs(expected)

    def test_stationary_point(self, general_model):
        cfg = IntegratorConfig(t_final=0.5, epsilon=1e-2)
        tr = integrate_full(general_model, PhaseState(np.zeros(3), np.zeros(3)),
                            cfg)
        assert np.max(np.abs(tr.xs)) == 0.0
        assert np.max(np.abs(tr.xis)) == 0.0


class TestBackwardFlow:
    def test_zero_time_is_identity(self, fixed_model):
        cfg = IntegratorConfig(t_final=1.0, epsilon=1e-2)
        st = PhaseState([0.1, 0.2, 0.3], [0.4, 0.5, 0.6])
        out = backward_flow(fixed_model, st, 0.0, cfg)
        assert out is st

    def test_roundtrip_many_states(self, fixed_model, rng):
        cfg = IntegratorConfig(t_final=1.0, epsilon=1e-2)
        X0 = rng.uniform(-0.3, 0.3, size=(100, 3))
        Xi0 = rng.normal(size=(100, 3)) * 0.5
        xs, xis = batch_linear_flow(fixed_model, X0, Xi0, [1.0], cfg)
        xb, xib = batch_linear_flow(fixed_model, xs[-1], xis[-1], [-1.0], cfg)
        assert np.max(np.abs(xb[-1] - X0)) < 1e-8
        assert np.max(np.abs(xib[-1] - Xi0)) < 1e-8

    def test_constant_field_backward_is_reverse_rotation(self, const_model):
        eps, t = 1e-2, 0.37
        xi = np.array([0.5, 0.2, -0.1])
        gam = float(momentum_gamma(xi))
        cfg = IntegratorConfig(t_final=t, epsilon=eps)
        out = backward_flow(const_model, PhaseState(np.zeros(3), xi), t, cfg)
        ang = -t / (eps * gam)
        c, s = np.cos(ang), np.sin(ang)
        expected = np.array([c * xi[0] - s * xi[1], s * xi[0] + c * xi[1],
                             xi[2]])
        assert np.max(np.abs(out.xi - expected)) < 1e-10

    def test_general_model_roundtrip(self, general_model, general_rotation):
        cfg = IntegratorConfig(t_final=0.4, epsilon=1e-2)
        st = PhaseState([0.1, -0.2, 0.05], [0.5, 0.1, 0.3])
        tr = integrate_straightened(general_model, general_rotation, None,
                                    st, cfg, t_grid=[0.4])
        back = backward_flow(general_model, tr.final_state(), 0.4, cfg,
                             rotation=general_rotation)
        assert np.max(np.abs(back.x - st.x)) < 1e-8
        assert np.max(np.abs(back.xi - st.xi)) < 1e-8


class TestFlowJacobian:
    def test_zero_time_identity(self, fixed_model):
        cfg = IntegratorConfig(t_final=1.0, epsilon=1e-2)
        J, det = flow_jacobian(fixed_model, PhaseState(np.zeros(3),
                                                       [0.5, 0, 0]), 0.0, cfg)
        assert np.array_equal(J, np.eye(6))
        assert det == 1.0

    def test_volume_preserved(self, fixed_model):
        cfg = IntegratorConfig(t_final=1.0, epsilon=1e-2)
        st = PhaseState([0.2, -0.1, 0.0], [0.6, 0.3, 0.4])
        J, det = flow_jacobian(fixed_model, st, 1.0, cfg)
        assert abs(det - 1.0) <= 1e-6

    def test_tangent_matches_flow_differences(self, fixed_model):
        # moderate epsilon so finite differences of the flow are trustworthy
        eps, t = 0.1, 0.3
        cfg = IntegratorConfig(t_final=t, epsilon=eps)
        st = PhaseState([0.1, 0.0, 0.0], [0.5, 0.2, 0.1])
        J, _ = flow_jacobian(fixed_model, st, t, cfg)
        h = 1e-6
        for k in range(6):
            dz = np.zeros(6)
            dz[k] = h
            plus = batch_linear_flow(fixed_model, (st.x + dz[:3])[None],
                                     (st.xi + dz[3:])[None], [t], cfg)
            minus = batch_linear_flow(fixed_model, (st.x - dz[:3])[None],
                                      (st.xi - dz[3:])[None], [t], cfg)
            col = np.concatenate([(plus[0][-1, 0] - minus[0][-1, 0]),
                                  (plus[1][-1, 0] - minus[1][-1, 0])]) / (2 * h)
            assert np.max(np.abs(J[:, k] - col)) < 1e-5

    def test_position_block_below_one(self, fixed_model):
        cfg = IntegratorConfig(t_final=1.0, epsilon=1e-2)
        st = PhaseState([0.2, 0.1, 0.0], [0.7, -0.2, 0.3])
        J, _ = flow_jacobian(fixed_model, st, 1.0, cfg)
        assert np.linalg.norm(J[:3, :3] - np.eye(3), ord=2) < 1.0


class TestSupportRadiusBound:
    def test_zero_history(self):
        assert support_radius_bound(0.7, [], [], 1e-2) == 0.7

    def test_formula_value(self):
        val = support_radius_bound(0.7, [0.0, 1.0], [1.0, 1.0], 0.1,
                                   constant=2.0)
        assert abs(val - (0.7 + 0.1 * 2.0 * 1.0)) < 1e-14

    def test_monotone(self):
        base = support_radius_bound(0.5, [0, 1], [1, 1], 0.1)
        assert support_radius_bound(0.6, [0, 1], [1, 1], 0.1) > base
        assert support_radius_bound(0.5, [0, 1], [2, 2], 0.1) > base

    def test_negative_inputs_rejected(self):
        with pytest.raises(ValueError):
            support_radius_bound(-0.1, [0, 1], [1, 1], 0.1)
        with pytest.raises(ValueError):
            support_radius_bound(0.5, [0, 1], [-1, 1], 0.1)

    def test_trajectory_consistency(self, general_model, general_rotation):
        E0 = np.array([0.4, 0.1, -0.2])
        e_sup = np.linalg.norm(E0)
        fields = (lambda t, X: np.broadcast_to(E0, X.shape).copy(),
                  lambda t, X: np.zeros_like(X))
        eps, t = 1e-2, 0.5
        cfg = IntegratorConfig(t_final=t, epsilon=eps)
        st = PhaseState([0.0, 0.1, 0.0], [0.5, 0.3, -0.2])
        tr = integrate_straightened(general_model, general_rotation, None,
                                    st, cfg, fields=fields)
        measured = np.max(np.linalg.norm(tr.xis, axis=1))
        times = np.linspace(0, t, 9)
        bound = support_radius_bound(np.linalg.norm(st.xi), times,
                                     np.full(9, e_sup), eps)
        assert measured <= bound + 1e-10


class TestAgreementInvariant:
    def test_splitting_vs_rk4_matched_resolution(self, fixed_model):
        eps = 1e-2
        state = PhaseState([0.15, -0.2, 0.1], [0.6, 0.2, -0.3])
        grid = np.linspace(0.0, 1.0, 5)[1:]
        split = IntegratorConfig(steps_per_gyroperiod=512, t_final=1.0,
                                 epsilon=eps)
        rk4 = IntegratorConfig(scheme="rk4-reference",
                               steps_per_gyroperiod=512, t_final=1.0,
                               epsilon=eps)
        xs_a, xis_a = batch_linear_flow(fixed_model, state.x[None],
                                        state.xi[None], grid, split)
        xs_b, xis_b = batch_linear_flow(fixed_model, state.x[None],
                                        state.xi[None], grid, rk4)
        assert np.max(np.abs(xs_a - xs_b)) < 1e-6
        assert np.max(np.abs(xis_a - xis_b)) < 1e-6


def test_trajectory_requires_increasing_times():
    cfg = IntegratorConfig()
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.0]), np.zeros((2, 3)), np.zeros((2, 3)),
                   0.0, cfg)


def test_trajectory_csv_dump(tmp_path, fixed_model):
    cfg = IntegratorConfig(t_final=0.1, epsilon=1e-1)
    tr = integrate_linear(fixed_model, PhaseState(np.zeros(3), [0.5, 0, 0.2]),
                          cfg)
    path = tmp_path / "traj.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x1,x2,x3,xi1,xi2,xi3,norm_drift"
    assert len(lines) == len(tr.times) + 1

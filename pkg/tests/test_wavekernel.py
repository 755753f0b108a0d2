import numpy as np
import pytest

from gyrokin.quadrature import (MomentumBallGrid, SphericalQuadrature,
                                sphere_monomial_integral)
from gyrokin.straighten import RotationField
from gyrokin.transport import CylindricalDensity
from gyrokin.wavekernel import (NearConeError, angular_derivative_p,
                                grad_p_momentum, kirchhoff_terms,
                                shell_convolution, symbol_bound_p,
                                symbol_bound_q, symbol_p, symbol_q,
                                symbol_sup_on_sphere,
                                time_derivative_identity_residual,
                                transfer_identity_residual)


class TestSphericalQuadrature:
    def test_weights_positive_and_sum(self, sphere_quad):
        assert np.all(sphere_quad.weights > 0)
        assert abs(np.sum(sphere_quad.weights) - 4 * np.pi) < 1e-12

    def test_nodes_unit(self, sphere_quad):
        assert np.max(np.abs(np.linalg.norm(sphere_quad.nodes, axis=1) - 1)) < 1e-14

    @pytest.mark.parametrize("abc", [(2, 0, 0), (0, 2, 2), (4, 2, 0),
                                     (1, 0, 0), (3, 1, 2), (0, 0, 6)])
    def test_monomial_exactness(self, sphere_quad, abc):
        a, b, c = abc
        vals = (sphere_quad.nodes[:, 0] ** a * sphere_quad.nodes[:, 1] ** b
                * sphere_quad.nodes[:, 2] ** c)
        assert abs(float(sphere_quad.integrate(vals))
                   - sphere_monomial_integral(a, b, c)) < 1e-12


class TestSymbols:
    def test_zero_momentum_values(self):
        w = np.array([0.0, 0.6, 0.8])
        assert np.allclose(symbol_p(1.0, w, np.zeros(3)), w)
        assert np.allclose(symbol_q(1.0, w, np.zeros(3)), -w)
        assert abs(np.linalg.norm(symbol_p(1.0, w, np.zeros(3))) - 1.0) < 1e-15

    def test_homogeneity_random(self, rng):
        xi = rng.normal(size=(1000, 3))
        x = rng.normal(size=(1000, 3)) * 0.3
        t = 1.0 + rng.random(1000)
        alpha = 0.5 + 2.0 * rng.random(1000)
        p0 = symbol_p(t, x, xi)
        q0 = symbol_q(t, x, xi)
        rel_p = np.abs(symbol_p(alpha * t, alpha[:, None] * x, xi) - p0)
        rel_q = np.abs(symbol_q(alpha * t, alpha[:, None] * x, xi)
                       - q0 / alpha[:, None])
        assert np.max(rel_p / np.maximum(np.abs(p0), 1e-3)) < 1e-12
        assert np.max(rel_q / np.maximum(np.abs(q0), 1e-3)) < 1e-12

    def test_near_cone_guard(self):
        xi = np.array([50.0, 0.0, 0.0])
        v = float(50.0 / np.sqrt(1 + 2500.0))
        with pytest.raises(NearConeError):
            symbol_p(v, np.array([1.0, 0.0, 0.0]), xi)

    def test_sup_equals_gamma(self):
        for R in (0.5, 1.0, 2.0):
            xi = np.array([0.0, R, 0.0])
            sup = symbol_sup_on_sphere("p", xi)
            assert abs(sup - np.sqrt(1 + R * R)) < 1e-10

    def test_sups_below_bounds(self):
        for R in (0.5, 1.0, 2.0):
            xi = np.array([R, 0.0, 0.0])
            assert symbol_sup_on_sphere("p", xi) <= symbol_bound_p(R)
            assert symbol_sup_on_sphere("q", xi) <= symbol_bound_q(R)

    def test_bound_values(self):
        assert symbol_bound_p(0.0) == 2.0
        assert symbol_bound_q(0.0) == 2.0
        assert abs(symbol_bound_p(1.0) - (4 + 2 * np.sqrt(2))) < 1e-12
        assert abs(symbol_bound_q(1.0) - 0.5 * (4 + 2 * np.sqrt(2)) ** 2) < 1e-12
        radii = np.linspace(0, 3, 31)
        vals_p = [symbol_bound_p(R) for R in radii]
        vals_q = [symbol_bound_q(R) for R in radii]
        assert all(a < b for a, b in zip(vals_p, vals_p[1:]))
        assert all(a < b for a, b in zip(vals_q, vals_q[1:]))

    def test_sup_numeric_vs_spherical_grid(self, sphere_quad):
        xi = np.array([0.3, -0.8, 0.5])
        vals = np.linalg.norm(
            symbol_p(np.ones(len(sphere_quad.nodes)), sphere_quad.nodes,
                     np.broadcast_to(xi, sphere_quad.nodes.shape)), axis=1)
        assert np.max(vals) <= symbol_sup_on_sphere("p", xi) + 1e-12

    def test_gradient_matches_finite_differences(self):
        omega = np.array([0.2, -0.4, 0.6])
        omega /= np.linalg.norm(omega)
        xi = np.array([0.5, 0.3, -0.7])
        G = grad_p_momentum(omega, xi)
        h = 1e-6
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            fd = (symbol_p(1.0, omega, xi + e) - symbol_p(1.0, omega, xi - e)) / (2 * h)
            assert np.max(np.abs(G[:, j] - fd)) < 1e-8

    def test_angular_derivative_matches_theta_difference(self):
        omega = np.array([0.0, 0.6, 0.8])
        xi = np.array([0.5, 0.2, -0.3])
        val = angular_derivative_p(omega, xi)
        r = np.hypot(xi[0], xi[1])
        th = np.arctan2(xi[1], xi[0])
        h = 1e-6

        def p_at(theta):
            return symbol_p(1.0, omega, np.array([r * np.cos(theta),
                                                  r * np.sin(theta), xi[2]]))

        fd = (p_at(th + h) - p_at(th - h)) / (2 * h)
        # the library operator is xi_perp . grad = d/d(-theta)
        assert np.max(np.abs(val + fd)) < 1e-8


class TestShellConvolution:
    def test_constant_case(self, sphere_quad):
        val = shell_convolution(lambda n: np.ones(len(n)),
                                lambda t, p: np.ones(len(p)), 1.3,
                                np.zeros(3), sphere_quad)
        assert abs(val - 1.3 ** 2 / 2) < 1e-6 * 1.3 ** 2 / 2

    def test_odd_weight_cancels(self, sphere_quad):
        val = shell_convolution(lambda n: n, lambda t, p: np.ones(len(p)),
                                1.0, np.zeros(3), sphere_quad)
        assert np.max(np.abs(val)) < 1e-10

    def test_degree_weighting(self, sphere_quad):
        # weight of degree -1: value integrates s^0, giving t
        val = shell_convolution(lambda n: np.ones(len(n)),
                                lambda t, p: np.ones(len(p)), 0.9,
                                np.zeros(3), sphere_quad, degree=-1)
        assert abs(val - 0.9) < 1e-9

    def test_refinement_oracle_gaussian(self, sphere_quad):
        xi = np.array([0.4, 0.2, -0.3])
        f = lambda t, p: np.exp(-2.0 * np.sum((p - 0.1) ** 2, axis=-1))
        g = lambda n: symbol_p(np.ones(len(n)), n,
                               np.broadcast_to(xi, n.shape))
        v = shell_convolution(g, f, 1.0, np.zeros(3), sphere_quad, 24)
        v_ref = shell_convolution(g, f, 1.0, np.zeros(3),
                                  sphere_quad.refine(2), 48)
        assert np.linalg.norm(v - v_ref) < 1e-6 * np.linalg.norm(v_ref)

    def test_nonfinite_source_reports_node(self, sphere_quad):
        def f(t, p):
            out = np.ones(len(p))
            out[0] = np.inf
            return out

        with pytest.raises(ValueError, match="non-finite"):
            shell_convolution(lambda n: np.ones(len(n)), f, 1.0, np.zeros(3),
                              sphere_quad)

    def test_shell_bound(self, sphere_quad, rng):
        # |value| <= t^{1+m} sup|g| int_0^t sup|f|
        xi = np.array([0.3, 0.1, 0.2])
        g = lambda n: symbol_p(np.ones(len(n)), n, np.broadcast_to(xi, n.shape))
        f = lambda t, p: np.cos(3 * p[:, 0]) * np.exp(-t)
        t = 1.1
        val = shell_convolution(g, f, t, np.zeros(3), sphere_quad)
        sup_g = symbol_sup_on_sphere("p", xi)
        bound = t * sup_g * (1.0 - np.exp(-t))
        assert np.linalg.norm(val) <= bound


class TestKirchhoff:
    def test_zero_data_zero_terms(self, sphere_quad):
        K1, K2 = kirchhoff_terms(None, None, 0.5, np.zeros(3), sphere_quad)
        assert np.allclose(K1, 0) and np.allclose(K2, 0)

    def test_constant_electric_field(self, sphere_quad):
        E = lambda p: np.broadcast_to([1.0, 2.0, 3.0], p.shape).copy()
        K1, K2 = kirchhoff_terms(E, None, 0.7, np.array([0.1, 0, 0]),
                                 sphere_quad)
        assert np.allclose(K1, [1.0, 2.0, 3.0], atol=1e-10)
        assert np.allclose(K2, 0.0, atol=1e-10)

    def test_smooth_field_refinement_oracle(self, sphere_quad):
        E = lambda p: np.stack([np.exp(-np.sum(p ** 2, -1)),
                                np.sin(p[..., 0]),
                                p[..., 1] ** 2], axis=-1)
        B = lambda p: np.stack([np.cos(p[..., 2]),
                                np.zeros(p.shape[:-1]),
                                np.exp(-p[..., 0] ** 2)], axis=-1)
        args = (0.6, np.array([0.2, -0.1, 0.3]))
        K1, K2 = kirchhoff_terms(E, B, *args, sphere_quad)
        K1r, K2r = kirchhoff_terms(E, B, *args, sphere_quad.refine(2))
        assert np.linalg.norm(K1 - K1r) < 1e-6 * max(np.linalg.norm(K1r), 1)
        assert np.linalg.norm(K2 - K2r) < 1e-6 * max(np.linalg.norm(K2r), 1)


class TestTimeDerivativeIdentity:
    def test_time_independent_source(self, sphere_quad):
        f = lambda t, p: np.exp(-np.sum(p ** 2, axis=-1))
        ft = lambda t, p: np.zeros(len(p))
        res = time_derivative_identity_residual(f, 0.8, np.array([0.2, 0, 0]),
                                                sphere_quad, f_t=ft)
        assert res < 1e-6

    def test_linear_in_time_source(self, sphere_quad):
        g = lambda p: np.exp(-np.sum((p - 0.1) ** 2, axis=-1))
        f = lambda t, p: t * g(p)
        ft = lambda t, p: g(p)
        res = time_derivative_identity_residual(f, 0.7, np.zeros(3),
                                                sphere_quad, f_t=ft)
        assert res < 1e-6

    def test_zero_source(self, sphere_quad):
        f = lambda t, p: np.zeros(len(p))
        res = time_derivative_identity_residual(f, 0.5, np.zeros(3),
                                                sphere_quad)
        assert res < 1e-14


class TestTransferIdentity:
    def test_single_angle_mode(self, fixed_model, sphere_quad):
        rot = RotationField(fixed_model)
        ball = MomentumBallGrid.build(1.0, n_r=6, n_theta=32, n_z=6)
        dens = CylindricalDensity(mode=1, harmonic="cos")
        lhs, rhs, rel = transfer_identity_residual(
            fixed_model, rot, dens, 0.8, np.zeros(3),
            SphericalQuadrature.build(12, 24), ball, time_steps=16)
        assert np.linalg.norm(lhs) > 1e-6
        assert rel <= 1e-4

    def test_angle_free_density_vanishes(self, fixed_model):
        rot = RotationField(fixed_model)
        ball = MomentumBallGrid.build(1.0, n_r=6, n_theta=32, n_z=6)
        dens = CylindricalDensity(mode=0)
        lhs, rhs, _ = transfer_identity_residual(
            fixed_model, rot, dens, 0.8, np.zeros(3),
            SphericalQuadrature.build(12, 24), ball, time_steps=16)
        assert max(np.linalg.norm(lhs), np.linalg.norm(rhs)) <= 1e-10

    def test_general_direction_model(self, general_model, general_rotation):
        ball = MomentumBallGrid.build(1.0, n_r=5, n_theta=24, n_z=5)
        dens = CylindricalDensity(mode=1, harmonic="sin")
        lhs, rhs, rel = transfer_identity_residual(
            general_model, general_rotation, dens, 0.6, np.zeros(3),
            SphericalQuadrature.build(10, 20), ball, time_steps=12)
        assert np.linalg.norm(lhs) > 1e-8
        assert rel <= 1e-3

"""Density transport along the characteristic flows: preparedness
diagnostics, backward-flow evaluation with the equilibrium-gradient
source, the explicit rotating-mode solution used as a nonlinear test
vector, the dilute source bound, and growth probes contrasting prepared
and ill-prepared data.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fields import (EquilibriumProfile, MagneticFieldModel, PhaseState,
                     momentum_gamma, relativistic_velocity)
from .characteristics import IntegratorConfig, batch_linear_flow
from .quadrature import gauss_legendre


# --- smooth compactly supported test densities ------------------------------

def _poly_bump(u):
    """(1 - u)^4 on u < 1, zero beyond; u is the squared relative radius."""
    w = 1.0 - u
    return np.where(w > 0.0, w, 0.0) ** 4


def _poly_bump_prime(u):
    w = 1.0 - u
    return np.where(w > 0.0, -4.0 * w ** 3, 0.0)


@dataclass(frozen=True)
class CylindricalDensity:
    """f(x, xi) = phi(|x|) chi(|xi|) * angular(theta) with polynomial bumps.

    theta is the gyro angle of (xi1, xi2); mode n = 0 gives angle-free
    (prepared) data, nonzero modes are ill prepared. Gradients are
    analytic, which the transport probes rely on (finite differences
    across the fast phase would cancel catastrophically).
    """

    mode: int = 0
    harmonic: str = "cos"           # cos(n theta) or sin(n theta)
    support_x: float = 4.0
    support_xi: float = 1.0
    amplitude: float = 1.0

    def _spatial(self, x):
        u = np.sum(x * x, axis=-1) / self.support_x ** 2
        return _poly_bump(u)

    def _spatial_grad(self, x):
        u = np.sum(x * x, axis=-1) / self.support_x ** 2
        return _poly_bump_prime(u)[..., None] * 2.0 * x / self.support_x ** 2

    def _radial(self, xi):
        u = np.sum(xi * xi, axis=-1) / self.support_xi ** 2
        return _poly_bump(u)

    def _radial_grad(self, xi):
        u = np.sum(xi * xi, axis=-1) / self.support_xi ** 2
        return _poly_bump_prime(u)[..., None] * 2.0 * xi / self.support_xi ** 2

    def _angular(self, xi):
        if self.mode == 0:
            return np.ones(xi.shape[:-1])
        theta = np.arctan2(xi[..., 1], xi[..., 0])
        fun = np.cos if self.harmonic == "cos" else np.sin
        return fun(self.mode * theta)

    def _angular_grad(self, xi):
        """Gradient of angular(theta(xi)); zero third component."""
        out = np.zeros_like(xi)
        if self.mode == 0:
            return out
        theta = np.arctan2(xi[..., 1], xi[..., 0])
        r2 = xi[..., 0] ** 2 + xi[..., 1] ** 2
        dfun = np.sin if self.harmonic == "cos" else np.cos
        sign = -self.mode if self.harmonic == "cos" else self.mode
        d_dtheta = sign * dfun(self.mode * theta)
        out[..., 0] = d_dtheta * (-xi[..., 1] / r2)
        out[..., 1] = d_dtheta * (xi[..., 0] / r2)
        return out

    def __call__(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        return self.amplitude * self._spatial(x) * self._radial(xi) \
            * self._angular(xi)

    def grad_xi(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        s = self.amplitude * self._spatial(x)
        return s[..., None] * (self._radial_grad(xi) * self._angular(xi)[..., None]
                               + self._radial(xi)[..., None] * self._angular_grad(xi))

    def grad_x(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        amp = self.amplitude * self._radial(xi) * self._angular(xi)
        return amp[..., None] * self._spatial_grad(x)

    # batched (points x momenta) evaluations for the kernel quadratures
    def value_batch(self, y, eta):
        return self.__call__(y[:, None, :], eta[None, :, :])

    def grad_xi_batch(self, y, eta):
        return self.grad_xi(y[:, None, :], eta[None, :, :])


@dataclass(frozen=True)
class InitialData:
    """Initial density and fields with declared support radii."""

    f_in: Callable
    E_in: Optional[Callable]
    B_in: Optional[Callable]
    R_x0: float
    R_xi0: float

    def compatibility_residuals(self, x_points, ball, fd_step: float = 1e-4):
        """Report (not assert) the constraint residuals at sample points.

        Returns max |div E - rho|, max |div E + rho| and max |div B|; the
        charge-density sign is reported both ways because the two source
        conventions appear side by side in the underlying model.
        """
        x_points = np.atleast_2d(np.asarray(x_points, dtype=float))
        eye = np.eye(3)

        def div(fun, pts):
            if fun is None:
                return np.zeros(len(pts))
            out = np.zeros(len(pts))
            for j in range(3):
                e = eye[j] * fd_step
                out += (-np.asarray(fun(pts + 2 * e))[:, j]
                        + 8 * np.asarray(fun(pts + e))[:, j]
                        - 8 * np.asarray(fun(pts - e))[:, j]
                        + np.asarray(fun(pts - 2 * e))[:, j]) / (12 * fd_step)
            return out

        div_E = div(self.E_in, x_points)
        div_B = div(self.B_in, x_points)
        rho = np.array([float(ball.integrate(self.f_in(x, ball.xi)))
                        for x in x_points])
        return {
            "max_div_E_minus_rho": float(np.max(np.abs(div_E - rho))),
            "max_div_E_plus_rho": float(np.max(np.abs(div_E + rho))),
            "max_div_B": float(np.max(np.abs(div_B))),
        }


@dataclass(frozen=True)
class PreparednessReport:
    sup_norm: float
    epsilon_ref: float

    def __post_init__(self):
        if self.sup_norm < 0:
            raise ValueError("sup norm cannot be negative")

    def prepared(self, constant: float = 1.0) -> bool:
        return self.sup_norm <= constant * self.epsilon_ref


def preparedness_norm(model: MagneticFieldModel, f_in, x_points, ball) -> float:
    """Grid sup of |[v x B_e] . grad_xi f_in|.

    In the straightened frame this is the magnitude of b_e/<xi> times the
    gyro-angle derivative of the data, the quantity whose smallness keeps
    the initial time derivative bounded.
    """
    x_points = np.atleast_2d(np.asarray(x_points, dtype=float))
    v = relativistic_velocity(ball.xi)
    worst = 0.0
    for x in x_points:
        B = model.B_e(x)
        cross = np.cross(v, np.broadcast_to(B, v.shape))
        grad = f_in.grad_xi(x, ball.xi) if hasattr(f_in, "grad_xi") \
            else _fd_grad_xi(f_in, x, ball.xi)
        worst = max(worst, float(np.max(np.abs(np.sum(cross * grad, axis=-1)))))
    return worst


def _fd_grad_xi(f_in, x, xi, h: float = 1e-6):
    out = np.zeros_like(xi)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        out[..., j] = (np.asarray(f_in(x, xi + e)) - np.asarray(f_in(x, xi - e))) / (2 * h)
    return out


def duhamel_linear_density(model, f_in, profile: EquilibriumProfile,
                           E_field, t: float, states,
                           config: IntegratorConfig,
                           source_nodes: int = 64) -> np.ndarray:
    """Density values along backward characteristics plus the dilute source.

    f(t, x, xi) = f_in(flow(-t)) + eps int_0^t [M'(|xi'|) xi'/|xi'| . E(s, x')]
    evaluated at (x', xi') = flow(-(t - s), x, xi). With E = 0 (or a zero
    profile) this is pure transport.
    """
    X0 = np.array([s.x for s in states], dtype=float)
    Xi0 = np.array([s.xi for s in states], dtype=float)
    eps = config.epsilon

    xs_b, xis_b = batch_linear_flow(model, X0, Xi0, [-t], config)
    values = np.asarray(f_in(xs_b[-1], xis_b[-1]), dtype=float)

    if E_field is not None:
        s_nodes, s_weights = gauss_legendre(0.0, t, source_nodes)
        # backward times -(t - s) walked monotonically away from zero so a
        # single batched integration visits every source node
        idx = np.argsort(s_nodes)[::-1]
        taus = -(t - s_nodes[idx])
        xs_all, xis_all = batch_linear_flow(model, X0, Xi0, taus, config)
        source = np.zeros(len(states))
        for i, k in enumerate(idx):
            s, w = s_nodes[k], s_weights[k]
            Xs, Xis = xs_all[i], xis_all[i]
            norms = np.linalg.norm(Xis, axis=1)
            safe = np.where(norms > 0, norms, 1.0)
            Ev = np.asarray(E_field(s, Xs), dtype=float)
            mprime = profile.M_prime(norms)
            source += w * mprime * np.sum(Xis * Ev, axis=1) / safe
        values = values + eps * source
    return values


@dataclass
class ClosedFormResult:
    value: np.ndarray
    residual: float
    rho: float
    current: np.ndarray
    sup_dt: float


def example_closed_form(chi, eps: float, t: float, x, xi,
                        ball=None) -> ClosedFormResult:
    """Rotating pure-mode solution f = chi(r, z) cos(2 (theta + t / (eps <xi>))).

    With a vanishing equilibrium profile and unit field magnitude this
    solves the full nonlinear system with zero internal fields: its charge
    and current densities vanish identically because of the doubled angle.
    The returned residual applies the transport operator with analytic
    derivatives; sup_dt records the stiff time derivative (order 1/eps,
    the ill-prepared signature).
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    r = np.hypot(xi[:, 0], xi[:, 1])
    z = xi[:, 2]
    theta = np.arctan2(xi[:, 1], xi[:, 0])
    gamma = momentum_gamma(xi)
    phase = 2.0 * (theta + t / (eps * gamma))
    chi_v = np.asarray(chi(r, z), dtype=float)
    f = chi_v * np.cos(phase)

    # d_t f + v . grad_x f - (1/(eps <xi>)) d_theta f, all analytic
    df_dt = -2.0 * chi_v * np.sin(phase) / (eps * gamma)
    df_dtheta = -2.0 * chi_v * np.sin(phase)
    residual = float(np.max(np.abs(df_dt - df_dtheta / (eps * gamma))))
    sup_dt = float(np.max(np.abs(df_dt)))

    rho = 0.0
    current = np.zeros(3)
    if ball is not None:
        rb = np.hypot(ball.xi[:, 0], ball.xi[:, 1])
        zb = ball.xi[:, 2]
        thb = np.arctan2(ball.xi[:, 1], ball.xi[:, 0])
        gb = momentum_gamma(ball.xi)
        fb = np.asarray(chi(rb, zb), dtype=float) * np.cos(
            2.0 * (thb + t / (eps * gb)))
        rho = float(ball.integrate(fb))
        current = ball.integrate(relativistic_velocity(ball.xi) * fb[:, None])
    return ClosedFormResult(value=f, residual=residual, rho=rho,
                            current=np.asarray(current), sup_dt=sup_dt)


def dilute_source_bound(model, profile: EquilibriumProfile, times, e_sups,
                        t: float, r_xi: float, ball, quadrature) -> float:
    """Bound value C_T * int_0^t sup_{s' <= s} |E| ds with

    C_T = (t^2 / 3) sup|b_e| int (|M'(|xi|)| / <xi>)
                                 sup_omega |dtheta_p(1, omega, xi)| dxi,

    the constant assembled from the shell estimate applied to the
    equilibrium-gradient source term.
    """
    from .wavekernel import angular_derivative_p
    times = np.asarray(times, dtype=float)
    e_sups = np.asarray(e_sups, dtype=float)
    if np.any(e_sups < 0):
        raise ValueError("field history must be nonnegative")
    norms = np.linalg.norm(ball.xi, axis=1)
    mask = norms <= r_xi
    mprime = np.abs(profile.M_prime(norms))
    if not np.any(mprime[mask] > 0):
        return 0.0
    dth = angular_derivative_p(quadrature.nodes[:, None, :],
                               ball.xi[None, :, :])
    sup_dth = np.max(np.linalg.norm(dth, axis=-1), axis=0)      # (nb,)
    gamma = momentum_gamma(ball.xi)
    integrand = np.where(mask, mprime / gamma * sup_dth, 0.0)
    xi_integral = float(np.sum(ball.weights * integrand))
    b_sup = float(np.max(model.b_e(model.region.grid(5))))
    c_t = (t ** 2 / 3.0) * b_sup * xi_integral
    if times.size < 2:
        return 0.0
    running = np.maximum.accumulate(e_sups)
    return float(c_t * np.trapezoid(running, times))


def lipschitz_growth_probe(model, f_in, eps_list, t: float,
                           steps_per_gyroperiod: int = 64,
                           probe_states=None):
    """Sup of |d_t f| and |grad_xi f| for transported data across epsilon.

    The time derivative is the chain rule through the backward flow
    (gradient of the data times the frozen vector field); the momentum
    gradient contracts the data gradient with the variational tangent of
    the backward flow. Both avoid finite differences across the phase.
    """
    if probe_states is None:
        probe_states = _default_probe_states()
    X0 = np.array([s.x for s in probe_states], dtype=float)
    Xi0 = np.array([s.xi for s in probe_states], dtype=float)
    rows = []
    for eps in eps_list:
        cfg = IntegratorConfig(steps_per_gyroperiod=steps_per_gyroperiod,
                               t_final=max(t, 1e-9), epsilon=eps)
        xs, xis, js = batch_linear_flow(model, X0, Xi0, [-t], cfg,
                                        variational=True)
        P_x, P_xi, J = xs[-1], xis[-1], js[-1]
        gx = np.asarray(f_in.grad_x(P_x, P_xi), dtype=float)
        gxi = np.asarray(f_in.grad_xi(P_x, P_xi), dtype=float)

        gamma = momentum_gamma(P_xi)
        V_x = P_xi / gamma[:, None]
        coef = model.b_e(P_x) / (eps * gamma)
        V_xi = np.stack([-coef * P_xi[:, 1], coef * P_xi[:, 0],
                         np.zeros(len(P_x))], axis=1)
        ddt = -(np.sum(gx * V_x, axis=1) + np.sum(gxi * V_xi, axis=1))

        grad6 = np.concatenate([gx, gxi], axis=1)      # (B, 6)
        # gradient in the initial xi: columns 3:6 of J^T grad
        dxi = np.einsum("bi,bik->bk", grad6, J[:, :, 3:6])
        rows.append((float(eps), float(np.max(np.abs(ddt))),
                     float(np.max(np.linalg.norm(dxi, axis=1)))))
    return rows


def _default_probe_states():
    """Probe states covering the gyro-angle densely; the sampled sup of
    phase-dependent quantities is then stable across epsilon."""
    pts = []
    angles = 2.0 * np.pi * np.arange(16) / 16.0
    for k, ang in enumerate(angles):
        for rad, zc in ((0.5, 0.2), (0.8, -0.3)):
            xc = 0.15 * np.array([np.cos(3 * ang), np.sin(2 * ang), 0.1 * k - 0.8])
            pts.append(PhaseState(
                xc, [rad * np.cos(ang), rad * np.sin(ang), zc]))
    return pts


def transported_support_check(model, f_in, r_x0: float, r_xi0: float,
                              t: float, config: IntegratorConfig,
                              n_probe: int = 64, seed: int = 7) -> float:
    """Max |f(t)| sampled outside the slab |xi| <= R_xi0, |x| <= R_x0 + t."""
    rng = np.random.default_rng(seed)
    xs = rng.normal(size=(n_probe, 3))
    xs /= np.linalg.norm(xs, axis=1, keepdims=True)
    xs *= (r_x0 + t) * (1.05 + rng.random((n_probe, 1)))
    xis = rng.normal(size=(n_probe, 3))
    xis /= np.linalg.norm(xis, axis=1, keepdims=True)
    xis *= r_xi0 * (1.05 + rng.random((n_probe, 1)))
    xb, xib = batch_linear_flow(model, xs, xis, [-t], config)
    return float(np.max(np.abs(f_in(xb[-1], xib[-1]))))

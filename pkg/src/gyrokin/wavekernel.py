"""Homogeneous kernel symbols of the wave-equation division identity,
their sup-norm bounds, spherical-shell convolutions against the forward
fundamental solution, Kirchhoff initial-data terms, and the derivative
transfer identities used to trade field derivatives for momentum ones.

The symbols

    p(t, x, xi) = (v(xi) t - x) / (v(xi) . x - t)          degree  0
    q(t, x, xi) = (v t - x) / (<xi>^2 (v . x - t)^2)        degree -1

are finite strictly inside the light cone because particle speeds stay
below the wave speed.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .fields import momentum_gamma, relativistic_velocity
from .quadrature import SphericalQuadrature, gauss_legendre


class NearConeError(ValueError):
    """Symbol evaluated too close to the light cone."""


def _denominator(t, x, xi):
    v = relativistic_velocity(xi)
    return np.sum(v * np.asarray(x, dtype=float), axis=-1) - np.asarray(t, dtype=float)


def symbol_p(t, x, xi):
    """Degree-0 kernel symbol; 3-vector valued."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    v = relativistic_velocity(xi)
    den = np.sum(v * x, axis=-1) - t
    if np.any(np.abs(den) < 1e-14):
        raise NearConeError("v(xi) . x - t vanishes; point is on the light cone")
    return (v * t[..., None] - x) / den[..., None]


def symbol_q(t, x, xi):
    """Degree -1 kernel symbol; 3-vector valued."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    v = relativistic_velocity(xi)
    den = np.sum(v * x, axis=-1) - t
    if np.any(np.abs(den) < 1e-14):
        raise NearConeError("v(xi) . x - t vanishes; point is on the light cone")
    gamma2 = 1.0 + np.sum(np.asarray(xi, dtype=float) ** 2, axis=-1)
    return (v * t[..., None] - x) / (gamma2 * den ** 2)[..., None]


def symbol_bound_p(R: float) -> float:
    """Closed-form sup bound of |p(1, ., xi)| over the sphere, |xi| <= R."""
    if R < 0:
        raise ValueError("momentum radius must be nonnegative")
    root = np.sqrt(1.0 + R * R)
    return float(2.0 * (1.0 + R * R + R * root))


def symbol_bound_q(R: float) -> float:
    """Closed-form sup bound of |q(1, ., xi)|; the square of the p bound / 2."""
    return float(0.5 * symbol_bound_p(R) ** 2)


def _sup_profile(xi, kernel: str) -> Callable[[float], float]:
    """|symbol(1, omega, xi)| as a function of c = cos(angle(omega, v))."""
    beta = float(np.linalg.norm(relativistic_velocity(xi)))
    gamma2 = float(1.0 + np.sum(np.asarray(xi, dtype=float) ** 2))

    def profile(c):
        num = beta * beta - 2.0 * beta * c + 1.0
        den = 1.0 - beta * c
        if kernel == "p":
            return np.sqrt(num) / den
        return np.sqrt(num) / (gamma2 * den * den)

    return profile


def symbol_sup_on_sphere(kernel: str, xi, grid: int = 4001) -> float:
    """Numerically maximized sup over the unit sphere of |symbol(1, ., xi)|.

    The modulus depends on omega only through its angle against v(xi), so
    the search runs over that cosine: a dense grid bracket refined by a
    bounded scalar maximization.
    """
    profile = _sup_profile(xi, kernel)
    cs = np.linspace(-1.0, 1.0, grid)
    vals = profile(cs)
    k = int(np.argmax(vals))
    lo, hi = cs[max(0, k - 1)], cs[min(grid - 1, k + 1)]
    res = minimize_scalar(lambda c: -profile(c), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-14})
    return float(max(np.max(vals), -res.fun))


def grad_p_momentum(omega, xi):
    """d p(1, omega, zeta) / d zeta, shape (..., 3, 3); rows = p component.

    Needed for the angular derivative of p in the transfer identities.
    """
    omega = np.asarray(omega, dtype=float)
    xi = np.asarray(xi, dtype=float)
    v = relativistic_velocity(xi)
    gamma = momentum_gamma(xi)
    den = np.sum(v * omega, axis=-1) - 1.0
    # dv_i/dzeta_j = (delta_ij - v_i v_j) / gamma
    dv = (np.eye(3) - v[..., :, None] * v[..., None, :]) / gamma[..., None, None]
    omega_dv = np.einsum("...k,...kj->...j", omega, dv)
    num = v - omega
    return dv / den[..., None, None] \
        - num[..., :, None] * omega_dv[..., None, :] / (den ** 2)[..., None, None]


def angular_derivative_p(omega, eta, O=None):
    """Total angular derivative of p(1, omega, O eta) in the rotated
    momentum: eta_perp . grad_eta, returned as a 3-vector.

    With O = identity this is the plain gyro-angle derivative of p.
    """
    eta = np.asarray(eta, dtype=float)
    perp = np.zeros_like(eta)
    perp[..., 0] = eta[..., 1]
    perp[..., 1] = -eta[..., 0]
    if O is None:
        zeta = eta
        direction = perp
    else:
        zeta = np.einsum("...ij,...j->...i", O, eta)
        direction = np.einsum("...ij,...j->...i", O, perp)
    G = grad_p_momentum(omega, zeta)
    return np.einsum("...ij,...j->...i", G, direction)


def shell_convolution(g, f, t: float, x, quadrature: SphericalQuadrature,
                      time_steps: int = 24, degree: int = 0):
    """Forward-cone shell average of f against a homogeneous weight g.

    Computes the convolution of g Y against f 1_{t>0} where Y is the
    forward wave fundamental solution:

        (1 / 4 pi) int_0^t int_{S^2} g(1, omega) f(t - s, x - s omega)
                                     s^{1 + degree} domega ds.

    g maps sphere nodes (n, 3) to scalars or vectors; f maps (t', points)
    with points (n, 3) to scalars. Values must stay finite.
    """
    x = np.asarray(x, dtype=float)
    s_nodes, s_weights = gauss_legendre(0.0, t, time_steps)
    gw = np.asarray(g(quadrature.nodes), dtype=float)
    acc = None
    for s, w in zip(s_nodes, s_weights):
        pts = x[None, :] - s * quadrature.nodes
        fv = np.asarray(f(t - s, pts), dtype=float)
        if not np.all(np.isfinite(fv)):
            bad = quadrature.nodes[~np.isfinite(fv)][0]
            raise ValueError(f"source returned non-finite value at s = {s:.6g}, "
                             f"omega = {bad!r}")
        contrib = quadrature.integrate(gw * fv[:, None] if gw.ndim == 2
                                       else gw * fv)
        if acc is None:
            acc = np.zeros_like(contrib, dtype=float)
        acc += w * s ** (1 + degree) * contrib
    return acc / (4.0 * np.pi)


def _directional_derivative(fun, pts, direction, h):
    return (-fun(pts + 2 * h * direction) + 8 * fun(pts + h * direction)
            - 8 * fun(pts - h * direction) + fun(pts - 2 * h * direction)) / (12 * h)


def _curl(fun, pts, h):
    eye = np.eye(3)
    d = [_directional_derivative(fun, pts, eye[j], h) for j in range(3)]
    return np.stack([
        d[1][:, 2] - d[2][:, 1],
        d[2][:, 0] - d[0][:, 2],
        d[0][:, 1] - d[1][:, 0],
    ], axis=-1)


def kirchhoff_terms(E_in, B_in, t: float, x, quadrature: SphericalQuadrature,
                    J_in=None, fd_step: float = 1e-4):
    """Initial-data sphere averages driving the field representation.

    Returns (K1, K2), the electric and magnetic contributions. The initial
    time derivatives are eliminated through the first-order system:
    d_t E|_0 = J(f_in) + curl B_in and d_t B|_0 = -curl E_in. J_in is the
    current density of the initial particle distribution (may be None for
    zero initial current).
    """
    x = np.asarray(x, dtype=float)
    pts = x[None, :] + t * quadrature.nodes

    def as_field(fun):
        if fun is None:
            return lambda p: np.zeros_like(p)
        return lambda p: np.asarray(fun(p), dtype=float)

    Ef, Bf, Jf = as_field(E_in), as_field(B_in), as_field(J_in)

    curl_B = _curl(Bf, pts, fd_step)
    curl_E = _curl(Ef, pts, fd_step)
    omega_grad_E = np.stack([
        _directional_derivative(Ef, pts[k:k + 1], quadrature.nodes[k], fd_step)[0]
        for k in range(len(pts))], axis=0)
    omega_grad_B = np.stack([
        _directional_derivative(Bf, pts[k:k + 1], quadrature.nodes[k], fd_step)[0]
        for k in range(len(pts))], axis=0)

    K1 = quadrature.integrate(t * (Jf(pts) + curl_B) + Ef(pts)
                              + t * omega_grad_E) / (4.0 * np.pi)
    K2 = quadrature.integrate(t * (-curl_E) + Bf(pts)
                              + t * omega_grad_B) / (4.0 * np.pi)
    return K1, K2


def time_derivative_identity_residual(f, t: float, x,
                                      quadrature: SphericalQuadrature,
                                      time_steps: int = 24,
                                      dt: float = 1e-5,
                                      f_t=None) -> float:
    """Residual of the derivative-commutation identity

        d_t (Y * 1_{t>0} f) = Y * 1_{t>0} d_t f
                              + (t / 4 pi) int_{S^2} f(0, x - t w) dw.

    The left side is a centered difference of the shell convolution; the
    right side uses d_t f (analytic when given, centered difference
    otherwise) plus the boundary sphere average.
    """
    ones = lambda nodes: np.ones(len(nodes))
    lhs = (shell_convolution(ones, f, t + dt, x, quadrature, time_steps)
           - shell_convolution(ones, f, t - dt, x, quadrature, time_steps)) / (2 * dt)
    if f_t is None:
        f_t = lambda s, pts: (f(s + dt, pts) - f(s - dt, pts)) / (2 * dt)
    rhs = shell_convolution(ones, f_t, t, x, quadrature, time_steps)
    pts = np.asarray(x, dtype=float)[None, :] - t * quadrature.nodes
    boundary = t / (4.0 * np.pi) * quadrature.integrate(
        np.asarray(f(0.0, pts), dtype=float))
    return float(np.abs(lhs - (rhs + boundary)))


def transfer_identity_residual(model, rotation, density, t: float, x,
                               quadrature: SphericalQuadrature,
                               ball, time_steps: int = 24):
    """Relative gap between the two sides of the straightening transfer.

    Left side: the shell convolution of p against the momentum divergence
    of the magnetic rotation term applied to the density (the divergence
    collapses to (v x B_e) . grad_xi since v is curl free in momentum).
    Right side: the same convolution expressed through the angular
    derivative of p in the rotated momentum. Both sides drop the common
    1/eps prefactor, so the comparison is epsilon free by construction.

    Returns (lhs, rhs, relative_difference); `density` supplies value and
    momentum gradient in the rotated (straightened) variable.
    """
    x = np.asarray(x, dtype=float)
    s_nodes, s_weights = gauss_legendre(0.0, t, time_steps)
    eta = ball.xi                                     # (nb, 3)
    wb = ball.weights
    nodes = quadrature.nodes                          # (ns, 3)
    ws = quadrature.weights
    general = model.kind == "general-direction"

    lhs = np.zeros(3)
    rhs = np.zeros(3)
    for s, w_s in zip(s_nodes, s_weights):
        y = x[None, :] - s * nodes                    # (ns, 3)
        b_y = model.b_e(y)                            # (ns,)
        B_y = model.B_e(y)                            # (ns, 3)
        if general:
            Ot = rotation.transpose_at(y)             # (ns, 3, 3)
            O = np.swapaxes(Ot, -1, -2)
            xi = np.einsum("sij,bj->sbi", O, eta)     # unrotated momentum
            grad_eta = density.grad_xi_batch(y, eta)  # (ns, nb, 3) in eta
            grad_xi = np.einsum("sij,sbj->sbi", O, grad_eta)
            dth_p = angular_derivative_p(
                nodes[:, None, :], eta[None, :, :],
                O=O[:, None, :, :])
        else:
            xi = np.broadcast_to(eta[None, :, :], (len(nodes),) + eta.shape)
            grad_xi = density.grad_xi_batch(y, eta)
            dth_p = angular_derivative_p(nodes[:, None, :], eta[None, :, :])

        v = relativistic_velocity(xi)                 # (ns, nb, 3)
        cross = np.cross(v, B_y[:, None, :])
        lhs_scal = np.sum(cross * grad_xi, axis=-1)   # (ns, nb)
        p_val = symbol_p(np.ones((len(nodes), 1)), nodes[:, None, :],
                         xi)                          # (ns, nb, 3)
        lhs_inner = np.einsum("sb,sbk,b->sk", lhs_scal, p_val, wb)
        lhs += w_s * s * np.einsum("s,sk->k", ws, lhs_inner)

        gamma = momentum_gamma(eta)
        g_val = density.value_batch(y, eta)           # (ns, nb)
        rhs_scal = (b_y[:, None] / gamma[None, :]) * g_val
        rhs_inner = np.einsum("sb,sbk,b->sk", rhs_scal, dth_p, wb)
        rhs += -w_s * s * np.einsum("s,sk->k", ws, rhs_inner)

    lhs /= 4.0 * np.pi
    rhs /= 4.0 * np.pi
    scale = max(np.linalg.norm(lhs), np.linalg.norm(rhs), 1e-30)
    return lhs, rhs, float(np.linalg.norm(lhs - rhs) / scale)

"""Closed-form flow approximations and gyro-angle averaging.

Fixed-direction fields get an explicit approximation: the momentum rotates
by a slow phase Phi / (eps <xi>) and the position picks up a gyroradius
remainder R_eps, accurate to O(eps) and O(eps^2) respectively. For fields
with varying direction the straightened system is split into its angular
Fourier modes (a trigonometric polynomial of degree <= 2), the mean system
is integrated, and mode-wise filters produce a second-order trajectory
plus a first-order phase.

Convention: the horizontal momentum angle increases along the flow, i.e.
Theta(t) ~ theta + Phi / (eps <xi>). The sign of the t-linear drift in
R_eps is fixed by requiring second-order convergence; it is the gradient
drift (r^2 / (2 <xi> b^2)) (d2 b, -d1 b, 0) per unit time.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .fields import MagneticFieldModel, momentum_gamma
from .straighten import RotationField, quadratic_drift
from .characteristics import IntegratorConfig, batch_linear_flow

_EIGHT_ANGLES = 2.0 * np.pi * np.arange(8) / 8.0
_MODES = np.array([-2, -1, 0, 1, 2])


def _split_xi(xi):
    xi = np.asarray(xi, dtype=float)
    bar = xi.copy()
    bar[..., 2] = 0.0
    perp = np.zeros_like(xi)
    perp[..., 0] = xi[..., 1]
    perp[..., 1] = -xi[..., 0]
    return bar, perp


def phase_phi(model: MagneticFieldModel, t, x, xi, eps: float):
    """Slow gyration phase for a fixed-direction field.

    Evaluated term by term as the magnitude times t minus eps times the
    gradient dotted with the linear-and-quadratic-in-t correction vector.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    bar, perp = _split_xi(xi)
    b = model.b_e(x)
    g = model.grad_b(x)
    gamma = momentum_gamma(xi)
    A = np.sum(g * perp, axis=-1)
    Bc = np.sum(g * bar, axis=-1)
    correction = (t / b)[..., None] * perp \
        - (t * t * A / (4.0 * gamma * b * b))[..., None] * bar \
        + (t * t * Bc / (4.0 * gamma * b * b))[..., None] * perp
    return b * t - eps * np.sum(g * correction, axis=-1)


def drift_remainder(model: MagneticFieldModel, t, x, xi, eps: float):
    """Position remainder R_eps: gyroradius oscillation plus secular drift."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    bar, perp = _split_xi(xi)
    b = model.b_e(x)
    g = model.grad_b(x)
    gamma = momentum_gamma(xi)
    A = np.sum(g * perp, axis=-1)
    Bc = np.sum(g * bar, axis=-1)
    phase = phase_phi(model, t, x, xi, eps) / (eps * gamma)
    osc = (np.sin(phase)[..., None] * bar
           + (np.cos(phase) - 1.0)[..., None] * perp) / b[..., None]
    drift = -(t * A / (2.0 * gamma * b * b))[..., None] * bar \
        + (t * Bc / (2.0 * gamma * b * b))[..., None] * perp
    return osc + drift


@dataclass(frozen=True)
class FixedDirectionApprox:
    """Bundled closed-form approximations for a fixed-direction model."""

    model: MagneticFieldModel
    eps: float

    def phi(self, t, x, xi):
        return phase_phi(self.model, t, x, xi, self.eps)

    def r_eps(self, t, x, xi):
        return drift_remainder(self.model, t, x, xi, self.eps)

    def x_approx(self, t, x, xi):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        gamma = momentum_gamma(xi)
        out = np.array(x + self.eps * self.r_eps(t, x, xi))
        out[..., 2] = out[..., 2] + t * xi[..., 2] / gamma
        return out

    def xi_approx(self, t, x, xi):
        xi = np.asarray(xi, dtype=float)
        bar, perp = _split_xi(xi)
        gamma = momentum_gamma(xi)
        phase = self.phi(t, x, xi) / (self.eps * gamma)
        out = np.cos(phase)[..., None] * bar - np.sin(phase)[..., None] * perp
        out[..., 2] += xi[..., 2]
        return out


def phase_speed_fixed(model, t, x, xi, omega, eps):
    """(d_t - omega . grad_x) of the fixed-direction phase, analytic.

    Uses the collapsed form Phi = b t - eps t (grad b . xi_perp) / b, which
    equals the term-by-term expression identically (its quadratic-in-t
    corrections cancel when contracted with grad b).
    """
    x = np.asarray(x, dtype=float)
    omega = np.asarray(omega, dtype=float)
    _, perp = _split_xi(xi)
    b = model.b_e(x)
    g = model.grad_b(x)
    H = model.hess_b(x)
    A = np.sum(g * perp, axis=-1)
    dt_phi = b - eps * A / b
    # grad_x Phi = t grad b - eps t [H xi_perp / b - A grad b / b^2]
    Hperp = np.einsum("...ij,...j->...i", H, perp)
    grad_phi = np.asarray(t)[..., None] * (
        g - eps * (Hperp / b[..., None] - (A / b ** 2)[..., None] * g))
    return dt_phi - np.sum(omega * grad_phi, axis=-1)


def approx_error_fixed(model, states, eps, t_grid,
                       steps_per_gyroperiod: int = 64,
                       reference_factor: int = 8):
    """Sup-norm gap between the integrated linear flow and the closed form.

    The reference is the splitting integrator at ``reference_factor`` times
    the given angular resolution.
    """
    X0 = np.array([s.x for s in states], dtype=float)
    Xi0 = np.array([s.xi for s in states], dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    cfg = IntegratorConfig(
        steps_per_gyroperiod=steps_per_gyroperiod * reference_factor,
        t_final=float(t_grid[-1]), epsilon=eps)
    xs, xis = batch_linear_flow(model, X0, Xi0, t_grid, cfg)

    approx = FixedDirectionApprox(model, eps)
    err_x = 0.0
    err_xi = 0.0
    for k, t in enumerate(t_grid):
        xa = approx.x_approx(t, X0, Xi0)
        xia = approx.xi_approx(t, X0, Xi0)
        err_x = max(err_x, float(np.max(np.linalg.norm(xs[k] - xa, axis=-1))))
        err_xi = max(err_xi, float(np.max(np.linalg.norm(xis[k] - xia, axis=-1))))
    return err_x, err_xi


def convergence_order(pairs) -> float:
    """Least-squares slope of log(error) against log(eps)."""
    pairs = [(float(e), float(v)) for e, v in pairs]
    if len(pairs) < 3:
        raise ValueError("need at least three (eps, error) points")
    if any(e <= 0 or v <= 0 for e, v in pairs):
        raise ValueError("eps and error values must be positive")
    le = np.log([e for e, _ in pairs])
    lv = np.log([v for _, v in pairs])
    return float(np.polyfit(le, lv, 1)[0])


# --- gyro-angle mode decomposition of the straightened system --------------

def polar_rhs(model, rotation, U, theta, gamma):
    """Slow part of the straightened system in polar momentum variables.

    U = (x1, x2, x3, r, z); returns the six slow components
    (dX(3), dR, dZ, dTheta_slow); the fast angular speed b_e/(eps gamma)
    is handled separately. theta may be an array, in which case the
    output has shape (len(theta), 6).
    """
    U = np.asarray(U, dtype=float)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x = np.broadcast_to(U[:3], (theta.size, 3))
    r, z = U[3], U[4]
    xi = np.stack([r * np.cos(theta), r * np.sin(theta),
                   np.full(theta.size, z)], axis=-1)
    Ot = rotation.transpose_at(x)
    O = np.swapaxes(Ot, -1, -2)
    dX = np.einsum("bij,bj->bi", O, xi) / gamma
    Q = quadratic_drift(model, x, xi, rotation)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    dR = (cos_t * Q[:, 0] + sin_t * Q[:, 1]) / gamma
    dZ = Q[:, 2] / gamma
    dTheta = (-sin_t * Q[:, 0] + cos_t * Q[:, 1]) / (r * gamma)
    return np.concatenate([dX, dR[:, None], dZ[:, None], dTheta[:, None]], axis=1)


@dataclass(frozen=True)
class ModeDecomposition:
    """Angular Fourier modes n in {-2..2} of the six slow components."""

    coeffs: np.ndarray          # complex, shape (5, 6); row order n = -2..2

    @property
    def mean(self) -> np.ndarray:
        return self.coeffs[2].real.copy()

    def coefficient(self, n: int) -> np.ndarray:
        return self.coeffs[2 + n].copy()

    def reconstruct(self, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        phases = np.exp(1j * np.outer(theta, _MODES))
        return np.real(phases @ self.coeffs)


def fourier_split_rhs(model, rotation, U, gamma=None) -> ModeDecomposition:
    """Exact mode extraction by 8-point angular quadrature.

    The slow right-hand side is a trigonometric polynomial of degree <= 2
    in the angle (the rotated momentum is degree 1 and the quadratic drift
    contracted against the polar frame is degree 2), so eight uniform
    angles determine the modes exactly.
    """
    U = np.asarray(U, dtype=float)
    if gamma is None:
        gamma = float(np.sqrt(1.0 + U[3] ** 2 + U[4] ** 2))
    samples = polar_rhs(model, rotation, U, _EIGHT_ANGLES, gamma)   # (8, 6)
    phases = np.exp(-1j * np.outer(_MODES, _EIGHT_ANGLES)) / 8.0    # (5, 8)
    return ModeDecomposition(coeffs=phases @ samples)


def _gyro_frequency(model, U, gamma):
    return float(model.b_e(np.asarray(U[:3], dtype=float))) / gamma


def _filter_A1(dec: ModeDecomposition, omega: float, theta):
    """First-order mode filter: sum over n != 0 of c_n e^{i n theta}/(i n w)."""
    out = np.zeros(5)
    for n in (1, 2):
        cn = dec.coeffs[2 + n, :5]
        out += 2.0 * np.real(cn * np.exp(1j * n * theta) / (1j * n * omega))
    return out


class _AveragedSystem:
    """Assembles the mean flow, the A1 filter, and its secular correction."""

    def __init__(self, model, rotation, gamma, fd_step=1e-6):
        self.model = model
        self.rotation = rotation
        self.gamma = gamma
        self.fd_step = fd_step

    def modes(self, U) -> ModeDecomposition:
        return fourier_split_rhs(self.model, self.rotation, U, self.gamma)

    def omega(self, U) -> float:
        return _gyro_frequency(self.model, U, self.gamma)

    def mean(self, U):
        return self.modes(U).mean

    def A1(self, U, theta):
        return _filter_A1(self.modes(U), self.omega(U), theta)

    def A1_jacobian(self, U, theta):
        """dA1/dU (5 x 5) by central differences on the mode data."""
        J = np.empty((5, 5))
        for k in range(5):
            d = self.fd_step * (1.0 + abs(U[k]))
            up = np.array(U, dtype=float)
            dn = np.array(U, dtype=float)
            up[k] += d
            dn[k] -= d
            J[:, k] = (_filter_A1(self.modes(up), self.omega(up), theta)
                       - _filter_A1(self.modes(dn), self.omega(dn), theta)) / (2 * d)
        return J

    def secular_correction(self, U, n_angle: int = 16):
        """Mean over the angle of dA1/dU . F + g_theta dA1/dTheta.

        This is the order-eps secular term left behind once the
        oscillating part of the right-hand side is written as a total
        time derivative of the filter.
        """
        dec = self.modes(U)
        omega = self.omega(U)
        mean6 = dec.mean
        thetas = 2.0 * np.pi * np.arange(n_angle) / n_angle
        full = polar_rhs(self.model, self.rotation, U, thetas, self.gamma)
        acc = np.zeros(5)
        for idx, th in enumerate(thetas):
            F = full[idx, :5]
            g_theta = full[idx, 5]
            dA1_dtheta = (F - mean6[:5]) / omega
            acc += self.A1_jacobian(U, th) @ F + g_theta * dA1_dtheta
        return acc / n_angle


@dataclass
class GeneralDirectionApprox:
    """Averaged trajectories of the straightened polar system."""

    times: np.ndarray
    u1: np.ndarray          # (T, 5) mean flow
    u2_tilde: np.ndarray    # (T, 5) second-order averaged flow
    u2: np.ndarray          # (T, 5) corrected trajectory
    theta1: np.ndarray      # (T,) first-order phase
    eps: float
    gamma: float


def averaged_flow_general(model, state, eps, t_grid,
                          rotation: RotationField | None = None,
                          rtol: float = 1e-10, atol: float = 1e-12):
    """First- and second-order averaged flows plus the slow phase.

    The second-order path integrates the mean field corrected by the
    secular term, from initial data shifted by the filter at the initial
    angle; the full trajectory is recovered by adding the filter back at
    the first-order phase. The phase integrates the gyro-frequency along
    the second-order path (a first-order path would leak an O(1) phase
    error) plus the mean angular drift along the first-order path.
    """
    xi = np.asarray(state.xi, dtype=float)
    r = float(np.hypot(xi[0], xi[1]))
    z = float(xi[2])
    if r == 0.0 and z == 0.0:
        raise ValueError("averaging needs a nonzero initial momentum")
    theta0 = float(np.arctan2(xi[1], xi[0]))
    gamma = float(momentum_gamma(xi))
    rot = rotation if rotation is not None else RotationField(model)
    sys = _AveragedSystem(model, rot, gamma)

    u0 = np.concatenate([np.asarray(state.x, dtype=float), [r, z]])
    u2t0 = u0 - eps * sys.A1(u0, theta0)
    y0 = np.concatenate([u0, u2t0, [theta0]])

    def rhs(_t, y):
        u1, u2t, _ = y[:5], y[5:10], y[10]
        du1 = sys.mean(u1)[:5]
        du2t = sys.mean(u2t)[:5] - eps * sys.secular_correction(u2t)
        dtheta = sys.omega(u2t) / eps + sys.mean(u1)[5]
        return np.concatenate([du1, du2t, [dtheta]])

    t_grid = np.asarray(t_grid, dtype=float)
    sol = solve_ivp(rhs, (0.0, float(t_grid[-1])), y0, t_eval=t_grid,
                    method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"averaged system failed: {sol.message}")
    u1 = sol.y[:5].T
    u2t = sol.y[5:10].T
    theta1 = sol.y[10]
    u2 = np.array([u2t[k] + eps * sys.A1(u2t[k], theta1[k])
                   for k in range(len(t_grid))])
    return GeneralDirectionApprox(times=t_grid, u1=u1, u2_tilde=u2t, u2=u2,
                                  theta1=theta1, eps=eps, gamma=gamma)


def diffeo_margin(model, eps, t, states, steps_per_gyroperiod: int = 64):
    """Max operator norm of (D_x X - I) over the sample states."""
    if t == 0.0:
        return 0.0
    X0 = np.array([s.x for s in states], dtype=float)
    Xi0 = np.array([s.xi for s in states], dtype=float)
    cfg = IntegratorConfig(steps_per_gyroperiod=steps_per_gyroperiod,
                           t_final=float(t), epsilon=eps)
    _, _, js = batch_linear_flow(model, X0, Xi0, [t], cfg, variational=True)
    worst = 0.0
    for J in js[-1]:
        block = J[0:3, 0:3] - np.eye(3)
        worst = max(worst, float(np.linalg.norm(block, ord=2)))
    return worst

"""Non-stationary-phase machinery: oscillatory time integrals along rays,
a phase-speed margin that licenses the integration by parts, gyro-angle
Fourier analysis of initial data, and the averaged initial-data term whose
angular cancellation produces the order-eps gain.
"""

from dataclasses import dataclass

import numpy as np

from .fields import momentum_gamma
from .asymptotics import FixedDirectionApprox, phase_phi, phase_speed_fixed
from .characteristics import IntegratorConfig, batch_linear_flow
from .quadrature import composite_gauss
from .wavekernel import angular_derivative_p


class PhaseMarginError(RuntimeError):
    """The time window violates the phase-speed lower bound."""


@dataclass(frozen=True)
class OscillatoryIntegralSpec:
    """Configuration of one oscillatory ray integral.

    g(s, U) is the smooth amplitude with U = (x1, x2, x3, r, z); n is the
    angular mode (nonzero), omega the unit ray direction, t the final
    time, state the phase-space base point.
    """

    g: callable
    n: int
    eps: float
    omega: np.ndarray
    t: float
    state: object

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float))
        if self.n == 0:
            raise ValueError("the mean mode has no oscillation; use n != 0")
        if abs(np.linalg.norm(self.omega) - 1.0) > 1e-12:
            raise ValueError("ray direction must be a unit vector")


def _threshold_data(model, t, x):
    """b_- over the backward ball and the gradient sup over the region."""
    offsets = model.region.grid(7) - np.mean(model.region.grid(7), axis=0)
    ball_pts = np.asarray(x, dtype=float) + offsets * (
        t / max(np.max(np.linalg.norm(offsets, axis=1)), 1e-30))
    b_minus = float(np.min(model.b_e(ball_pts)))
    grad_sup = float(np.max(np.linalg.norm(
        model.grad_b(model.region.grid(7)), axis=-1)))
    return b_minus, grad_sup


def check_phase_window(model, t, x):
    """Enforce b_- - t sup|grad b| > (3/4) b_-; raise otherwise."""
    b_minus, grad_sup = _threshold_data(model, t, x)
    if b_minus - t * grad_sup <= 0.75 * b_minus:
        raise PhaseMarginError(
            f"time window too long for the non-stationary phase: "
            f"b_- - t |grad b| = {b_minus - t * grad_sup:.6g} "
            f"<= (3/4) b_- = {0.75 * b_minus:.6g}")
    return b_minus, grad_sup


def phase_speed_margin(model, omega, t, x, xi, eps, samples: int = 256):
    """Minimum phase speed along the ray.

    Fixed-direction models evaluate the analytic derivative combination of
    the slow phase at the ray points (time arguments run over [-t, 0], as
    they do inside the retarded integrals). General-direction models
    return the leading-order floor (b_- - t sup|grad b|) / (eps <xi>) of
    the full angular phase speed.
    """
    omega = np.asarray(omega, dtype=float)
    x = np.asarray(x, dtype=float)
    if model.kind == "general-direction":
        b_minus, grad_sup = _threshold_data(model, t, x)
        return (b_minus - t * grad_sup) / (eps * float(momentum_gamma(xi)))
    s = np.linspace(0.0, t, samples)
    pts = x[None, :] - np.outer(s, omega)
    vals = phase_speed_fixed(model, s - t, pts, np.asarray(xi, float)[None, :],
                             omega[None, :], eps)
    return float(np.min(np.abs(vals)))


def oscillatory_integral(spec: OscillatoryIntegralSpec, model,
                         nodes_per_period: int = 64,
                         phase: str = "auto") -> complex:
    """Ray integral of g against the oscillating gyro-phase.

    Computes int_0^t g(s, U(t-s, x - s omega, xi)) exp(i n Theta(...)) ds
    with panelwise Gauss quadrature resolving the fast period. The phase
    and the slow variables come from the closed-form flow approximation,
    except under phase="true-flow" where each quadrature node integrates
    the actual linear flow (batched); "auto" uses the approximation.
    """
    if model.kind == "general-direction":
        raise NotImplementedError("ray integrals are wired for fixed-direction models")
    x = np.asarray(spec.state.x, dtype=float)
    xi = np.asarray(spec.state.xi, dtype=float)
    t, eps, n = spec.t, spec.eps, spec.n
    check_phase_window(model, t, x)

    gamma = float(momentum_gamma(xi))
    theta0 = float(np.arctan2(xi[1], xi[0]))
    r = float(np.hypot(xi[0], xi[1]))
    z = float(xi[2])
    b_ref = float(model.b_e(x))
    periods = max(1.0, t * b_ref / (2.0 * np.pi * eps * gamma))
    panels = int(np.ceil(periods * nodes_per_period / 8.0))
    s_nodes, s_weights = composite_gauss(0.0, t, panels, order=8)

    y = x[None, :] - np.outer(s_nodes, spec.omega)
    tau = t - s_nodes
    if phase == "true-flow":
        cfg = IntegratorConfig(steps_per_gyroperiod=max(64, nodes_per_period),
                               t_final=1.0, epsilon=eps)
        from .straighten import RotationField
        from .characteristics import batch_straightened_flow
        rot = RotationField(model)
        thetas = np.empty(len(s_nodes))
        xs_out = np.empty((len(s_nodes), 3))
        Xi0 = np.broadcast_to(xi, (len(s_nodes), 3))
        # one distinct integration time per node; lockstep batches per
        # unique time would be overkill at test sizes, so loop plainly
        for k in range(len(s_nodes)):
            if tau[k] == 0.0:
                xs_out[k] = y[k]
                thetas[k] = theta0
                continue
            xs_k, xis_k, th_k = batch_straightened_flow(
                model, rot, y[k][None], xi[None], [tau[k]], cfg,
                track_angle=True)
            xs_out[k] = xs_k[-1, 0]
            thetas[k] = th_k[-1, 0]
        U = np.concatenate([xs_out, np.full((len(s_nodes), 1), r),
                            np.full((len(s_nodes), 1), z)], axis=1)
    else:
        phi = phase_phi(model, tau, y, np.broadcast_to(xi, y.shape), eps)
        thetas = theta0 + phi / (eps * gamma)
        approx = FixedDirectionApprox(model, eps)
        xs_out = approx.x_approx(tau, y, np.broadcast_to(xi, y.shape))
        U = np.concatenate([xs_out, np.full((len(s_nodes), 1), r),
                            np.full((len(s_nodes), 1), z)], axis=1)

    amp = np.asarray(spec.g(s_nodes, U), dtype=float)
    return complex(np.sum(s_weights * amp * np.exp(1j * n * thetas)))


def mean_mode_integral(g, t: float, state, samples: int = 512) -> float:
    """The n = 0 control: no oscillation, value ~ t times the g average."""
    s = np.linspace(0.0, t, samples)
    x = np.asarray(state.x, dtype=float)
    xi = np.asarray(state.xi, dtype=float)
    U = np.concatenate([np.broadcast_to(x, (samples, 3)),
                        np.full((samples, 1), np.hypot(xi[0], xi[1])),
                        np.full((samples, 1), xi[2])], axis=1)
    return float(np.trapezoid(np.asarray(g(s, U), dtype=float), s))


def gyro_fourier_coefficients(f_in, r, z, x, n_modes: int,
                              min_samples: int = 64):
    """Angular Fourier coefficients of the data at fixed (x, r, z).

    Samples the density on a power-of-two angle grid with at least four
    points per requested mode, FFTs, and reports the coefficients together
    with the weighted decay sum over the retained band.
    """
    M = max(min_samples, 4 * n_modes)
    M = 1 << int(np.ceil(np.log2(M)))
    theta = 2.0 * np.pi * np.arange(M) / M
    xi = np.stack([r * np.cos(theta), r * np.sin(theta),
                   np.full(M, float(z))], axis=-1)
    vals = np.asarray(f_in(np.asarray(x, dtype=float), xi), dtype=float)
    spec = np.fft.fft(vals) / M
    ns = np.arange(-n_modes, n_modes + 1)
    coeffs = {int(n): complex(spec[n % M]) for n in ns}
    decay = float(sum(abs(c) / abs(n) for n, c in coeffs.items() if n != 0))
    return coeffs, decay


def averaged_initial_term(model, f_in, t: float, x, eps: float,
                          ball, quadrature, nodes_per_period: int = 64,
                          phase: str = "auto"):
    """Triple integral of the angular derivative of p against the data
    composed with the backward flow.

    value = int_ball int_{S^2} int_0^t (s / 4 pi) dtheta_p(1, w, xi)
            (b_e(x - s w) / <xi>) f_in(flow(-(t - s), x - s w, xi)) ds dw dxi

    The angular mean of dtheta_p vanishes, so only nonzero gyro-modes of
    the data contribute, and their fast phase makes the value O(eps).
    Returns the 3-vector and its norm.
    """
    x = np.asarray(x, dtype=float)
    check_phase_window(model, t, x)
    gamma = momentum_gamma(ball.xi)                     # (nb,)
    dth_p = angular_derivative_p(quadrature.nodes[:, None, :],
                                 ball.xi[None, :, :])   # (ns, nb, 3)
    w_total = quadrature.weights[:, None] * ball.weights[None, :]

    b_ref = float(model.b_e(x))
    gmin = float(np.min(gamma))
    periods = max(1.0, t * b_ref / (2.0 * np.pi * eps * gmin))
    panels = int(np.ceil(periods * nodes_per_period / 8.0))
    s_nodes, s_weights = composite_gauss(0.0, t, panels, order=8)

    theta0 = ball.theta                                  # (nb,)
    approx = FixedDirectionApprox(model, eps)
    acc = np.zeros(3)
    cfg = None
    if phase == "true-flow":
        cfg = IntegratorConfig(steps_per_gyroperiod=max(64, nodes_per_period),
                               t_final=1.0, epsilon=eps)
    for s, w_s in zip(s_nodes, s_weights):
        y = x[None, :] - s * quadrature.nodes           # (ns, 3)
        tau = t - s
        if phase == "true-flow":
            if tau == 0.0:
                X_b = np.broadcast_to(y[:, None, :],
                                      (len(y), len(ball.xi), 3)).reshape(-1, 3)
                Xi_b = np.broadcast_to(ball.xi[None, :, :],
                                       (len(y), len(ball.xi), 3)).reshape(-1, 3)
            else:
                Y0 = np.repeat(y, len(ball.xi), axis=0)
                Xi0 = np.tile(ball.xi, (len(y), 1))
                xs_b, xis_b = batch_linear_flow(model, Y0, Xi0, [-tau], cfg)
                X_b, Xi_b = xs_b[-1], xis_b[-1]
            fv = np.asarray(f_in(X_b, Xi_b), dtype=float).reshape(
                len(y), len(ball.xi))
        else:
            phi = phase_phi(model, -tau, y[:, None, :], ball.xi[None, :, :],
                            eps)                         # (ns, nb)
            ang = theta0[None, :] + phi / (eps * gamma[None, :])
            rr = np.hypot(ball.xi[:, 0], ball.xi[:, 1])[None, :]
            Xi_b = np.stack([rr * np.cos(ang), rr * np.sin(ang),
                             np.broadcast_to(ball.xi[:, 2][None, :], ang.shape)],
                            axis=-1)
            X_b = approx.x_approx(-tau, y[:, None, :], ball.xi[None, :, :])
            fv = np.asarray(f_in(X_b.reshape(-1, 3),
                                 Xi_b.reshape(-1, 3)), dtype=float).reshape(
                len(y), len(ball.xi))
        coeff = (model.b_e(y)[:, None] / gamma[None, :]) * fv * w_total
        acc += w_s * s * np.einsum("sb,sbk->k", coeff, dth_p)
    vec = acc / (4.0 * np.pi)
    return vec, float(np.linalg.norm(vec))

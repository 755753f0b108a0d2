"""External magnetic-field models, the relativistic velocity map, and
equilibrium profiles, with validation of the admissibility constraints
(magnitude bounded above and away from zero, divergence free, curl free).

Built-in models carry analytic first and second derivatives. User-supplied
fields fall back to fourth-order centered differences.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class FieldEvaluationError(RuntimeError):
    """A field returned a non-finite value; carries the offending point."""

    def __init__(self, point, message="non-finite field value"):
        super().__init__(f"{message} at x = {np.asarray(point)!r}")
        self.point = np.asarray(point)


def relativistic_velocity(xi) -> np.ndarray:
    """Velocity map xi / sqrt(1 + |xi|^2); norm is strictly below 1."""
    xi = np.asarray(xi, dtype=float)
    gamma = np.sqrt(1.0 + np.sum(xi * xi, axis=-1, keepdims=True))
    return xi / gamma


def momentum_gamma(xi) -> np.ndarray:
    """The factor sqrt(1 + |xi|^2), written <xi> throughout."""
    xi = np.asarray(xi, dtype=float)
    return np.sqrt(1.0 + np.sum(xi * xi, axis=-1))


@dataclass(frozen=True)
class Box:
    """Axis-aligned validation region."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def grid(self, n: int) -> np.ndarray:
        axes = [np.linspace(l, h, n) for l, h in zip(self.lo, self.hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return pts.reshape(-1, 3)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))


@dataclass(frozen=True)
class PhaseState:
    """A point (x, xi) in position-momentum phase space."""

    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float))
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.xi))):
            raise ValueError("phase state must have finite components")


@dataclass(frozen=True)
class MagneticFieldModel:
    """External magnetic field with magnitude b_e and direction data.

    kind is one of ``constant``, ``fixed-direction`` (field parallel to e3
    with horizontally varying magnitude) or ``general-direction``. All
    callables accept points of shape (..., 3) and are vectorized.

    jac_B returns dB_i/dx_j with shape (..., 3, 3); grad_b and hess_b are
    the gradient and Hessian of the magnitude b_e.
    """

    kind: str
    B_e: Callable[[np.ndarray], np.ndarray]
    b_e: Callable[[np.ndarray], np.ndarray]
    grad_b: Callable[[np.ndarray], np.ndarray]
    hess_b: Callable[[np.ndarray], np.ndarray]
    jac_B: Callable[[np.ndarray], np.ndarray]
    region: Box
    c_lower: float
    analytic: bool = True
    params: dict = field(default_factory=dict)

    def b_min_on(self, pts: np.ndarray) -> float:
        return float(np.min(self.b_e(pts)))


def constant_field(b0: float = 1.0, direction=(0.0, 0.0, 1.0),
                   region: Optional[Box] = None) -> MagneticFieldModel:
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    Bvec = b0 * direction
    region = region or Box((-2.0, -2.0, -2.0), (2.0, 2.0, 2.0))

    def B_e(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(Bvec, x.shape).copy()

    def b_e(x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], float(b0))

    def zero_vec(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape)

    def zero_mat(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (3, 3))

    return MagneticFieldModel(
        kind="constant", B_e=B_e, b_e=b_e, grad_b=zero_vec, hess_b=zero_mat,
        jac_B=zero_mat, region=region, c_lower=min(b0, 1.0 / b0) * 0.99,
        params={"b0": b0, "direction": tuple(direction)},
    )


def fixed_direction_field(b0: float = 1.0, a: float = 0.1, k1: float = 1.0,
                          c: float = 0.0, k2: float = 1.0,
                          region: Optional[Box] = None) -> MagneticFieldModel:
    """B_e = b_e(x1, x2) e3 with b_e = b0 + a sin(k1 x1) + c cos(k2 x2).

    Divergence free exactly (no x3 dependence); the curl is generically
    nonzero, which validation reports as a warning for this kind.
    """
    if abs(a) + abs(c) >= b0:
        raise ValueError("need |a| + |c| < b0 so the magnitude stays positive")
    region = region or Box((-2.0, -2.0, -2.0), (2.0, 2.0, 2.0))

    def b_e(x):
        x = np.asarray(x, dtype=float)
        return b0 + a * np.sin(k1 * x[..., 0]) + c * np.cos(k2 * x[..., 1])

    def B_e(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        out[..., 2] = b_e(x)
        return out

    def grad_b(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        out[..., 0] = a * k1 * np.cos(k1 * x[..., 0])
        out[..., 1] = -c * k2 * np.sin(k2 * x[..., 1])
        return out

    def hess_b(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (3, 3))
        out[..., 0, 0] = -a * k1 * k1 * np.sin(k1 * x[..., 0])
        out[..., 1, 1] = -c * k2 * k2 * np.cos(k2 * x[..., 1])
        return out

    def jac_B(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (3, 3))
        g = grad_b(x)
        out[..., 2, 0] = g[..., 0]
        out[..., 2, 1] = g[..., 1]
        return out

    lo = b0 - abs(a) - abs(c)
    hi = b0 + abs(a) + abs(c)
    return MagneticFieldModel(
        kind="fixed-direction", B_e=B_e, b_e=b_e, grad_b=grad_b, hess_b=hess_b,
        jac_B=jac_B, region=region, c_lower=min(lo, 1.0 / hi) * 0.999,
        params={"b0": b0, "a": a, "k1": k1, "c": c, "k2": k2},
    )


def harmonic_general_field(alpha: float = 0.15,
                           region: Optional[Box] = None) -> MagneticFieldModel:
    """Curl- and divergence-free field with varying direction.

    B_e = grad(psi) with psi = x3 + alpha (x1^2 - x2^2), so
    B_e = (2 a x1, -2 a x2, 1) and b_e >= 1 everywhere.
    """
    region = region or Box((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0))
    a2 = 2.0 * alpha

    def B_e(x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        out[..., 0] = a2 * x[..., 0]
        out[..., 1] = -a2 * x[..., 1]
        out[..., 2] = 1.0
        return out

    def b_e(x):
        x = np.asarray(x, dtype=float)
        return np.sqrt(1.0 + a2 * a2 * (x[..., 0] ** 2 + x[..., 1] ** 2))

    def grad_b(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        b = b_e(x)
        out[..., 0] = a2 * a2 * x[..., 0] / b
        out[..., 1] = a2 * a2 * x[..., 1] / b
        return out

    def hess_b(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (3, 3))
        b = b_e(x)
        g = grad_b(x)
        for i in range(2):
            for j in range(2):
                out[..., i, j] = (a2 * a2 * (i == j) - g[..., i] * g[..., j]) / b
        return out

    def jac_B(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (3, 3))
        out[..., 0, 0] = a2
        out[..., 1, 1] = -a2
        return out

    hi = float(np.sqrt(1.0 + 2.0 * (a2 * region.diameter) ** 2))
    return MagneticFieldModel(
        kind="general-direction", B_e=B_e, b_e=b_e, grad_b=grad_b,
        hess_b=hess_b, jac_B=jac_B, region=region,
        c_lower=min(1.0, 1.0 / hi) * 0.999, params={"alpha": alpha},
    )


def field_from_callable(B_callable, region: Box, c_lower: float,
                        kind: str = "general-direction") -> MagneticFieldModel:
    """Wrap a user field; derivatives by 4th-order centered differences."""
    h = 1e-4 * region.diameter
    eye = np.eye(3)

    def B_e(x):
        out = np.asarray(B_callable(np.asarray(x, dtype=float)), dtype=float)
        if not np.all(np.isfinite(out)):
            raise FieldEvaluationError(x)
        return out

    def b_e(x):
        return np.linalg.norm(B_e(x), axis=-1)

    def _d1(f, x, j):
        e = eye[j]
        return (-f(x + 2 * h * e) + 8 * f(x + h * e)
                - 8 * f(x - h * e) + f(x - 2 * h * e)) / (12 * h)

    def jac_B(x):
        x = np.asarray(x, dtype=float)
        cols = [_d1(B_e, x, j) for j in range(3)]
        return np.stack(cols, axis=-1)

    def grad_b(x):
        x = np.asarray(x, dtype=float)
        return np.stack([_d1(b_e, x, j) for j in range(3)], axis=-1)

    def hess_b(x):
        x = np.asarray(x, dtype=float)
        return np.stack([_d1(grad_b, x, j) for j in range(3)], axis=-1)

    return MagneticFieldModel(
        kind=kind, B_e=B_e, b_e=b_e, grad_b=grad_b, hess_b=hess_b,
        jac_B=jac_B, region=region, c_lower=c_lower, analytic=False,
    )


@dataclass(frozen=True)
class EquilibriumProfile:
    """Radial equilibrium profile M(|xi|) with compact support.

    M must vanish beyond support_radius and satisfy M'(0) = 0 with
    M'(r)/r bounded near zero (guaranteed by an even C^1 extension).
    """

    M: Callable[[np.ndarray], np.ndarray]
    M_prime: Callable[[np.ndarray], np.ndarray]
    support_radius: float
    even_extension_ok: bool = True


def polynomial_bump_profile(support_radius: float = 1.0,
                            amplitude: float = 1.0) -> EquilibriumProfile:
    """M(r) = amplitude * (1 - (r/R)^2)^4 on [0, R], a function of r^2."""
    R2 = support_radius ** 2

    def M(r):
        r = np.asarray(r, dtype=float)
        u = 1.0 - r * r / R2
        return amplitude * np.where(u > 0.0, u, 0.0) ** 4

    def M_prime(r):
        r = np.asarray(r, dtype=float)
        u = 1.0 - r * r / R2
        return amplitude * np.where(u > 0.0, 4.0 * u ** 3 * (-2.0 * r / R2), 0.0)

    return EquilibriumProfile(M=M, M_prime=M_prime, support_radius=support_radius)


@dataclass
class ValidationReport:
    max_div: float
    max_curl: float
    min_b: float
    max_b: float
    lower_bound_ok: bool
    curl_free_ok: bool
    warnings: list
    errors: list

    @property
    def admissible(self) -> bool:
        return not self.errors


def _fd_jacobian(B, pts, h):
    eye = np.eye(3)
    cols = []
    for j in range(3):
        e = eye[j]
        cols.append((-B(pts + 2 * h * e) + 8 * B(pts + h * e)
                     - 8 * B(pts - h * e) + B(pts - 2 * h * e)) / (12 * h))
    return np.stack(cols, axis=-1)


def validate_field(model: MagneticFieldModel, sample_density: int = 9,
                   curl_tol: float = 1e-8, div_tol: float = 1e-8) -> ValidationReport:
    """Check admissibility over a sample grid of the model region.

    Divergence and curl come from the analytic Jacobian when the model has
    one, otherwise from centered differences. A violated magnitude lower
    bound or a curl-carrying general-direction field is an error; the curl
    of a fixed-direction model is only a warning, since a nonconstant
    magnitude with a frozen direction can never be curl free.
    """
    pts = model.region.grid(sample_density)
    bvals = model.b_e(pts)
    Bvals = model.B_e(pts)
    if not (np.all(np.isfinite(bvals)) and np.all(np.isfinite(Bvals))):
        bad = pts[~np.isfinite(bvals)][:1] if not np.all(np.isfinite(bvals)) \
            else pts[~np.all(np.isfinite(Bvals), axis=-1)][:1]
        raise FieldEvaluationError(bad[0])

    mag_mismatch = float(np.max(np.abs(np.linalg.norm(Bvals, axis=-1) - bvals)))

    if model.analytic:
        J = model.jac_B(pts)
    else:
        J = _fd_jacobian(model.B_e, pts, 1e-4 * model.region.diameter)
    div = J[..., 0, 0] + J[..., 1, 1] + J[..., 2, 2]
    curl = np.stack([
        J[..., 2, 1] - J[..., 1, 2],
        J[..., 0, 2] - J[..., 2, 0],
        J[..., 1, 0] - J[..., 0, 1],
    ], axis=-1)

    report = ValidationReport(
        max_div=float(np.max(np.abs(div))),
        max_curl=float(np.max(np.linalg.norm(curl, axis=-1))),
        min_b=float(np.min(bvals)),
        max_b=float(np.max(bvals)),
        lower_bound_ok=True,
        curl_free_ok=True,
        warnings=[],
        errors=[],
    )
    if mag_mismatch > 1e-10:
        report.errors.append(f"|B_e| differs from b_e by {mag_mismatch:.3e}")
    if report.min_b < model.c_lower or report.max_b > 1.0 / model.c_lower:
        report.lower_bound_ok = False
        report.errors.append(
            f"magnitude range [{report.min_b:.6g}, {report.max_b:.6g}] leaves "
            f"[{model.c_lower:.6g}, {1.0 / model.c_lower:.6g}]")
    if report.max_div > div_tol:
        report.errors.append(f"divergence {report.max_div:.3e} exceeds {div_tol:.1e}")
    if report.max_curl > curl_tol:
        report.curl_free_ok = False
        msg = f"curl magnitude {report.max_curl:.3e} exceeds {curl_tol:.1e}"
        if model.kind == "fixed-direction":
            report.warnings.append(msg + " (expected for varying fixed-direction fields)")
        else:
            report.errors.append(msg)
    return report


def neutrality_check(f_in, quadrature, x_samples) -> float:
    """Sup over sampled x of |integral of f_in(x, .) over momentum|.

    f_in must vanish on the boundary shell of the quadrature ball; a
    noticeable boundary value means the support leaks out of the grid.
    """
    x_samples = np.atleast_2d(np.asarray(x_samples, dtype=float))
    edge = quadrature.radius
    n_probe = 24
    golden = np.pi * (3.0 - np.sqrt(5.0))
    k = np.arange(n_probe)
    mu = 1.0 - 2.0 * (k + 0.5) / n_probe
    phi = golden * k
    s = np.sqrt(1.0 - mu ** 2)
    shell = edge * np.stack([s * np.cos(phi), s * np.sin(phi), mu], axis=-1)
    worst = 0.0
    for x in x_samples:
        boundary = np.max(np.abs(f_in(x, shell)))
        if boundary > 1e-12:
            raise ValueError(
                f"momentum support reaches the quadrature boundary "
                f"(|f| = {boundary:.3e} at |xi| = {edge:.3g})")
        val = float(quadrature.integrate(f_in(x, quadrature.xi)))
        worst = max(worst, abs(val))
    return worst

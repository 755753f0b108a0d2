"""Field straightening: the position-dependent rotation aligning the
external field with e3, its spatial gradient, the induced quadratic drift
term, and the divergence-transfer identity for unit-Jacobian maps.

The rotation is the axis-angle map with axis B_e x e3 (normalized) and
cos(angle) = B3/b. Written in the regularized form

    O^t = (B3/b) I + [B_perp]_x / b + (B_perp o B_perp) / (b (b + B3))

it is smooth wherever b + B3 > 0 and satisfies O^t B_e = b e3 exactly.
At the antipodal locus (field along -e3) the axis is fixed to e1.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fields import MagneticFieldModel

_ANTIPODAL_TOL = 1e-12


def _cross_matrix(k):
    """[k]_x with ([k]_x) v = k x v, batched over leading axes."""
    k = np.asarray(k, dtype=float)
    out = np.zeros(k.shape[:-1] + (3, 3))
    out[..., 0, 1] = -k[..., 2]
    out[..., 0, 2] = k[..., 1]
    out[..., 1, 0] = k[..., 2]
    out[..., 1, 2] = -k[..., 0]
    out[..., 2, 0] = -k[..., 1]
    out[..., 2, 1] = k[..., 0]
    return out


def _stable_b_plus_B3(B, b):
    """b + B3 without cancellation: equals |B_horiz|^2 / (b - B3) for
    B3 < 0, which keeps the rotation orthogonal to machine precision all
    the way to the antipodal locus."""
    B3 = B[..., 2]
    horiz2 = B[..., 0] ** 2 + B[..., 1] ** 2
    direct = b + B3
    safe_minus = np.where(b - B3 > 0, b - B3, 1.0)
    return np.where(B3 >= 0.0, direct, horiz2 / safe_minus)


def rotation_from_vector(B):
    """O^t built from the field vector alone; maps B to |B| e3."""
    B = np.asarray(B, dtype=float)
    b = np.linalg.norm(B, axis=-1)
    if np.any(b <= 0.0) or not np.all(np.isfinite(b)):
        raise ValueError("rotation undefined where the field magnitude vanishes")
    Bp = np.zeros_like(B)
    Bp[..., 0] = B[..., 1]
    Bp[..., 1] = -B[..., 0]
    denom = b * _stable_b_plus_B3(B, b)
    antipodal = denom <= _ANTIPODAL_TOL * b * b
    safe = np.where(antipodal, 1.0, denom)

    eye = np.broadcast_to(np.eye(3), B.shape[:-1] + (3, 3))
    Ot = (B[..., 2] / b)[..., None, None] * eye \
        + _cross_matrix(Bp) / b[..., None, None] \
        + (Bp[..., :, None] * Bp[..., None, :]) / safe[..., None, None]

    if np.any(antipodal):
        # rotate by pi about e1: diag(1, -1, -1)
        flip = np.diag([1.0, -1.0, -1.0])
        Ot = np.where(antipodal[..., None, None], flip, Ot)
    return Ot


def _rotation_dB(B):
    """Derivative tensor dO^t/dB_m, shape (..., 3, 3, 3), last axis = m."""
    B = np.asarray(B, dtype=float)
    b = np.linalg.norm(B, axis=-1)
    B3 = B[..., 2]
    Bp = np.zeros_like(B)
    Bp[..., 0] = B[..., 1]
    Bp[..., 1] = -B[..., 0]
    D = b * _stable_b_plus_B3(B, b)
    if np.any(D <= _ANTIPODAL_TOL * b * b):
        raise ValueError("rotation gradient undefined at the antipodal locus")

    eye = np.broadcast_to(np.eye(3), B.shape[:-1] + (3, 3))
    crossBp = _cross_matrix(Bp)
    outerBp = Bp[..., :, None] * Bp[..., None, :]

    out = np.zeros(B.shape[:-1] + (3, 3, 3))
    dBp = np.zeros((3, 3))
    dBp[0] = (0.0, -1.0, 0.0)   # dBp/dB1
    dBp[1] = (1.0, 0.0, 0.0)    # dBp/dB2
    for m in range(3):
        Bm = B[..., m]
        d_b = Bm / b
        d_T1 = (((1.0 if m == 2 else 0.0) / b - B3 * Bm / b ** 3)[..., None, None]
                * eye)
        dBp_m = np.broadcast_to(dBp[m], B.shape)
        d_T2 = _cross_matrix(dBp_m) / b[..., None, None] \
            - crossBp * (Bm / b ** 3)[..., None, None]
        d_outer = dBp_m[..., :, None] * Bp[..., None, :] \
            + Bp[..., :, None] * dBp_m[..., None, :]
        if m == 2:
            # 2 B3 + B3^2/b + b collapses to (b + B3)^2 / b; use the
            # cancellation-free form of b + B3
            d_D = _stable_b_plus_B3(B, b) ** 2 / b
        else:
            d_D = Bm * (2.0 * b + B3) / b
        d_T3 = d_outer / D[..., None, None] \
            - outerBp * (d_D / D ** 2)[..., None, None]
        out[..., m] = d_T1 + d_T2 + d_T3
    return out


@dataclass(frozen=True)
class RotationField:
    """Rotation O(x) attached to a field model, with its x-gradient.

    ``transpose_at`` returns O^t(x) (so O^t B_e = b_e e3); ``at`` returns
    O(x). ``gradient`` returns the matrix with entries
    d/dx_j of (O(x) xi)_i, used by the quadratic drift.
    """

    model: MagneticFieldModel
    fd_step: float = 1e-5

    def transpose_at(self, x):
        return rotation_from_vector(self.model.B_e(x))

    def at(self, x):
        return np.swapaxes(self.transpose_at(x), -1, -2)

    def _partial_Ot(self, x):
        """d O^t / dx_j, shape (..., 3, 3, 3), last axis = j."""
        x = np.asarray(x, dtype=float)
        if self.model.analytic:
            dOt_dB = _rotation_dB(self.model.B_e(x))
            JB = self.model.jac_B(x)      # (..., m, j)
            return np.einsum("...abm,...mj->...abj", dOt_dB, JB)
        h = self.fd_step
        cols = []
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            cols.append((self.transpose_at(x + e) - self.transpose_at(x - e))
                        / (2.0 * h))
        return np.stack(cols, axis=-1)

    def gradient(self, x, xi):
        """grad_x(O(x) xi): entry (i, j) = d (O xi)_i / dx_j."""
        xi = np.asarray(xi, dtype=float)
        dOt = self._partial_Ot(x)                    # (..., a, b, j) for O^t
        # (d_j O)_{ik} = (d_j O^t)_{ki}
        return np.einsum("...kij,...k->...ij", dOt, xi)


def rotation_at(model: MagneticFieldModel, x):
    """O^t(x): orthogonal, det 1, sends B_e(x) to b_e(x) e3."""
    x = np.asarray(x, dtype=float)
    b = model.b_e(x)
    if np.any(b <= 0.0):
        raise ValueError(f"b_e(x) <= 0 at x = {x!r}")
    return rotation_from_vector(model.B_e(x))


def quadratic_drift(model: MagneticFieldModel, x, xi,
                    rotation: RotationField | None = None):
    """Drift term Q(x, xi) = -O^t grad_x(O xi) O xi.

    Quadratic in xi and orthogonal to xi; identically zero whenever the
    field direction is position independent.
    """
    rot = rotation if rotation is not None else RotationField(model)
    xi = np.asarray(xi, dtype=float)
    Ot = rot.transpose_at(x)
    O = np.swapaxes(Ot, -1, -2)
    Oxi = np.einsum("...ij,...j->...i", O, xi)
    G = rot.gradient(x, xi)                      # (..., i, j)
    GOxi = np.einsum("...ij,...j->...i", G, Oxi)
    return -np.einsum("...ij,...j->...i", Ot, GOxi)


@dataclass(frozen=True)
class QuadraticDrift:
    """Callable wrapper for Q(x, xi) bound to a rotation field."""

    rotation: RotationField

    def evaluate(self, x, xi):
        return quadratic_drift(self.rotation.model, x, xi, self.rotation)

    __call__ = evaluate


def straightened_magnetic_term(model, rotation, x, xi):
    """O^t(x) [v(O xi) x B_e(x)]; equals b_e(x) v(xi) x e3 identically."""
    from .fields import relativistic_velocity
    Ot = rotation.transpose_at(x)
    O = np.swapaxes(Ot, -1, -2)
    Oxi = np.einsum("...ij,...j->...i", O, np.asarray(xi, dtype=float))
    v = relativistic_velocity(Oxi)
    cross = np.cross(v, model.B_e(x))
    return np.einsum("...ij,...j->...i", Ot, cross)


def _fd_matrix(fun, x, h, dim_out):
    """4th-order centered Jacobian of fun: R^n -> R^m at x."""
    x = np.asarray(x, dtype=float)
    n = x.size
    J = np.empty((dim_out, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (-fun(x + 2 * e) + 8 * fun(x + e)
                   - 8 * fun(x - e) + fun(x - 2 * e)) / (12 * h)
    return J


def divergence_transfer_check(F: Callable, eta: Callable, points,
                              h: float = 1e-3) -> float:
    """Residual of the divergence identity under a change of variables.

    For y = eta(x) and the pushed-forward field
    F~(y) = (D eta F) o eta^{-1}(y), the identity

        div_y F~ = div_x F + F . grad_x ln|det D eta|

    holds; this returns the max over the sample points of the difference
    between the two sides, everything by centered finite differences. The
    left side is evaluated in x-coordinates as tr(DG (D eta)^{-1}) with
    G(x) = D eta(x) F(x), so the inverse map is never needed.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[1]
    worst = 0.0
    for x in points:
        Deta = _fd_matrix(eta, x, h, n)
        det = np.linalg.det(Deta)
        if abs(det) < 1e-12:
            raise np.linalg.LinAlgError(
                f"singular Jacobian (det = {det:.3e}) at x = {x!r}")

        def G(z):
            return _fd_matrix(eta, z, h, n) @ F(z)

        DG = _fd_matrix(G, x, h, n)
        lhs = np.trace(DG @ np.linalg.inv(Deta))

        DF = _fd_matrix(F, x, h, n)
        div_F = np.trace(DF)

        def logdet(z):
            return np.array([np.log(abs(np.linalg.det(_fd_matrix(eta, z, h, n))))])

        grad_logdet = _fd_matrix(logdet, x, h, n)[0]
        rhs = div_F + F(x) @ grad_logdet
        worst = max(worst, abs(lhs - rhs))
    return worst

"""Quadrature rules shared by the kernel and averaging modules.

Gauss-Legendre panels for time integrals, a product rule on the unit
sphere (Gauss in the polar cosine, uniform in azimuth), and a cylindrical
grid on a momentum ball used when integrating densities in xi.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre


def gauss_legendre(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on the interval [a, b]."""
    x, w = roots_legendre(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def composite_gauss(a: float, b: float, panels: int, order: int = 8):
    """Panel-wise Gauss rule; resolves oscillatory integrands panel by panel."""
    edges = np.linspace(a, b, panels + 1)
    xs, ws = [], []
    base_x, base_w = roots_legendre(order)
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        xs.append(lo + half * (base_x + 1.0))
        ws.append(half * base_w)
    return np.concatenate(xs), np.concatenate(ws)


@dataclass(frozen=True)
class SphericalQuadrature:
    """Product quadrature on the unit sphere.

    nodes has shape (n, 3) with unit rows; weights are positive and sum
    to 4*pi. Exact for spherical polynomials up to roughly
    min(2*n_polar - 1, n_azimuth - 1).
    """

    nodes: np.ndarray
    weights: np.ndarray
    n_polar: int
    n_azimuth: int

    @classmethod
    def build(cls, n_polar: int = 32, n_azimuth: int = 64) -> "SphericalQuadrature":
        mu, w_mu = roots_legendre(n_polar)          # mu = cos(polar angle)
        phi = 2.0 * np.pi * np.arange(n_azimuth) / n_azimuth
        w_phi = 2.0 * np.pi / n_azimuth
        s = np.sqrt(1.0 - mu ** 2)
        nodes = np.empty((n_polar * n_azimuth, 3))
        nodes[:, 0] = np.outer(s, np.cos(phi)).ravel()
        nodes[:, 1] = np.outer(s, np.sin(phi)).ravel()
        nodes[:, 2] = np.outer(mu, np.ones(n_azimuth)).ravel()
        weights = np.outer(w_mu, np.full(n_azimuth, w_phi)).ravel()
        return cls(nodes=nodes, weights=weights, n_polar=n_polar, n_azimuth=n_azimuth)

    def refine(self, factor: int = 2) -> "SphericalQuadrature":
        return SphericalQuadrature.build(self.n_polar * factor, self.n_azimuth * factor)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Contract sampled values (first axis = node) with the weights."""
        return np.tensordot(self.weights, values, axes=(0, 0))


@dataclass(frozen=True)
class MomentumBallGrid:
    """Cylindrical (r, theta, z) grid on {|xi| <= radius}.

    Gauss nodes in r and z, uniform angles in theta: the angular rule is
    exact for trigonometric polynomials below the node count, which is the
    structural cancellation the averaging checks rely on.
    """

    xi: np.ndarray        # (n, 3) cartesian momentum nodes
    weights: np.ndarray   # (n,) volume weights, includes the r jacobian
    r: np.ndarray
    theta: np.ndarray
    z: np.ndarray
    radius: float

    @classmethod
    def build(cls, radius: float, n_r: int = 8, n_theta: int = 16, n_z: int = 8):
        # Cylinder r in (0, R], z in [-R, R] circumscribes the ball; the
        # weight of any node outside |xi| <= radius is zeroed so densities
        # supported in the ball integrate exactly over their support.
        r, w_r = gauss_legendre(0.0, radius, n_r)
        z, w_z = gauss_legendre(-radius, radius, n_z)
        theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
        w_theta = 2.0 * np.pi / n_theta
        R, TH, Z = np.meshgrid(r, theta, z, indexing="ij")
        W = (w_r[:, None, None] * R) * w_theta * w_z[None, None, :]
        xi = np.stack(
            [R * np.cos(TH), R * np.sin(TH), Z], axis=-1
        ).reshape(-1, 3)
        return cls(
            xi=xi,
            weights=W.ravel(),
            r=R.ravel(),
            theta=TH.ravel(),
            z=Z.ravel(),
            radius=radius,
        )

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))


def sphere_monomial_integral(a: int, b: int, c: int) -> float:
    """Exact integral of w1^a * w2^b * w3^c over the unit sphere."""
    if a % 2 or b % 2 or c % 2:
        return 0.0

    def dfact(n):
        out = 1
        while n > 1:
            out *= n
            n -= 2
        return out

    num = dfact(a - 1) * dfact(b - 1) * dfact(c - 1)
    return 4.0 * np.pi * num / dfact(a + b + c + 1)

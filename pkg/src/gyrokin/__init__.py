"""Desk-scale numerics for relativistic charged-particle flows in strong
external magnetic fields: field straightening, characteristic integrators,
guiding-center asymptotics with measured convergence orders, oscillatory
averaging, and spherical wave-kernel quadrature."""

__version__ = "0.1.0"

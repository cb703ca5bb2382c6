"""Deformations of I-Lagrangian manifolds and the regularized log-modulus functional."""

__version__ = "0.1.0"

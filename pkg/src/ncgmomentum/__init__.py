"""ncgmomentum - Fixed-step nonlinear conjugate gradient momentum for sparse recovery."""

__version__ = "0.1.0"

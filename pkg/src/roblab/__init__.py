"""Numerical laboratory for the size-vs-smoothness tradeoff of interpolating
models: isoperimetric samplers, bump interpolators, Lipschitz certification,
layered-network training, closed-form bound calculators, and Monte Carlo
verification of the underlying concentration inequalities."""

__version__ = "0.1.0"

"""Gradient extremals on manifolds learned from point clouds.

Modules
-------
potentials
    Test energies and vector fields.
geometry
    Induced metric, Christoffel symbols, covariant Hessian, GE residual.
continuation
    Pseudo-arclength tracing of gradient extremals on a chart.
manifold_learning, surrogates, sampling
    Point clouds, diffusion-map charts and Gaussian-process lifts.
driver
    The chart-by-chart outer loop.
comparison_paths
    Euclidean GE, Newton trajectories, gentlest ascent and the string method.
"""
__version__ = "0.1.0"

"""Point clouds on a slow manifold: perturb in ambient space, then relax.

Samples are drawn as Gaussian perturbations of a seed point and integrated for
a short time under a fast-slow system whose fast part pulls them back onto the
manifold.  Integration is classic fourth-order Runge-Kutta, vectorised over
the samples.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IntegrationBlowup
from .io import write_csv
from .manifold_learning import PointCloud
from .potentials import MuellerBrownSphere


@dataclass(frozen=True)
class SamplerConfig:
    N: int = 500
    sigma: float = 0.05
    # k_fast * tau = 7: a 4-sigma normal offset ends below 1e-3
    tau: float = 0.07
    dt: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.tau / self.dt > 1e6:
            raise ValueError("tau / dt exceeds 1e6 steps")


def rk4(f, X, t_end, dt, blowup=1e6):
    """Integrate ``dX/dt = f(X)`` (rows independent) to ``t_end`` with fixed RK4 steps."""
    X = np.array(X, dtype=float)
    n_steps = int(np.ceil(t_end / dt - 1e-12)) if t_end > 0 else 0
    h = t_end / n_steps if n_steps else 0.0
    for _ in range(n_steps):
        k1 = f(X)
        k2 = f(X + 0.5 * h * k1)
        k3 = f(X + 0.5 * h * k2)
        k4 = f(X + h * k3)
        X = X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        norms = np.linalg.norm(np.atleast_2d(X), axis=1)
        if not np.all(np.isfinite(norms)) or np.any(norms > blowup):
            raise IntegrationBlowup(f"trajectory norm exceeded {blowup:g}")
    return X


def sample_neighborhood(p, cfg: SamplerConfig, dynamics, n_min=None):
    """``cfg.N`` perturbations of ``p`` relaxed for ``cfg.tau`` under ``dynamics``.

    ``dynamics`` maps an ``(N, n)`` array of states to their velocities.
    """
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("seed point must be finite")
    rng = np.random.default_rng(cfg.seed)
    X0 = p + cfg.sigma * rng.standard_normal((cfg.N, p.size))
    X = rk4(dynamics, X0, cfg.tau, cfg.dt)
    center = np.clip(p, X.min(axis=0), X.max(axis=0))
    kw = {} if n_min is None else {"n_min": n_min}
    if n_min is None and cfg.N < 100:
        kw["n_min"] = 1
    return PointCloud(X, center, cfg.sigma, cfg.tau, **kw)


class SphereDynamics:
    """Fast attraction to the unit sphere plus a slow tangential gradient drift.

    ``f(x) = -k_fast (|x| - 1) x/|x| - drift_scale * P_tan grad V(x)``

    ``drift_scale`` slows the on-manifold motion so that a relaxation time
    long enough to reach the sphere barely moves samples along it.
    """

    def __init__(self, potential=None, k_fast=100.0, drift_scale=1e-4):
        self.potential = potential or MuellerBrownSphere()
        self.k_fast = float(k_fast)
        self.drift_scale = float(drift_scale)

    def _gradients(self, X):
        if hasattr(self.potential, "gradients"):
            return self.potential.gradients(X)
        return np.array([self.potential.gradient(x) for x in X])

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        r = np.linalg.norm(X, axis=1, keepdims=True)
        n = X / r
        out = -self.k_fast * (r - 1.0) * n
        if self.drift_scale:
            g = self._gradients(X)
            out -= self.drift_scale * (g - np.sum(g * n, axis=1, keepdims=True) * n)
        return out[0] if single else out


def make_demo_dynamics(kind="mb_sphere", **kwargs):
    if kind == "mb_sphere":
        return SphereDynamics(**kwargs)
    raise ValueError(f"unknown dynamics {kind!r}")


def dump_cloud(path, cloud: PointCloud, energies=None):
    n = cloud.points.shape[1]
    header = [f"x{i + 1}" for i in range(n)]
    data = cloud.points
    if energies is not None:
        header.append("energy")
        data = np.column_stack([data, energies])
    return write_csv(path, header, data)

"""Riemannian quantities on a chart and the gradient-extremal residual.

A chart supplies its lift ``psi: R^d -> R^n`` and pullback energy ``Z`` with
first and second derivatives through :meth:`ChartFunctions.jet`.  From those we
build the induced metric ``g = Dpsi^T Dpsi``, its Levi-Civita Christoffel
symbols, the Riemannian gradient and the covariant Hessian (returned as an
operator, i.e. with one index raised).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NonFinite, SingularMetric

METRIC_CONDITION_LIMIT = 1e10


class ChartJet(NamedTuple):
    """Values and derivatives of a chart at one point ``u``."""

    lift: np.ndarray        # (n,)
    lift_jac: np.ndarray    # (n, d)
    lift_hess: np.ndarray   # (n, d, d)
    z: float
    dz: np.ndarray          # (d,)
    d2z: np.ndarray         # (d, d)


class ChartFunctions:
    """Base class for charts; subclasses implement :meth:`jet`."""

    dim: int
    ambient_dim: int

    def jet(self, u) -> ChartJet:
        raise NotImplementedError

    def lift(self, u):
        return self.jet(u).lift

    def energy(self, u):
        return self.jet(u).z

    def contains(self, u) -> bool:
        """Chart-domain test; analytic charts accept everything."""
        return True


class FlatChart(ChartFunctions):
    """Identity chart of R^n: ``psi(u) = u`` and ``Z = E``."""

    def __init__(self, energy):
        self.energy_fn = energy
        self.dim = self.ambient_dim = energy.dim
        self._eye = np.eye(self.dim)
        self._zeros = np.zeros((self.dim, self.dim, self.dim))

    def jet(self, u):
        u = np.asarray(u, dtype=float)
        return ChartJet(u.copy(), self._eye, self._zeros,
                        self.energy_fn(u), self.energy_fn.gradient(u), self.energy_fn.hessian(u))


class ComposedChart(ChartFunctions):
    """Pullback of an ambient energy through an analytic lift.

    ``lift_map`` must provide ``lift``, ``lift_jacobian`` and ``lift_hessian``
    (see :class:`gradex.potentials.StereographicChart`).
    """

    def __init__(self, lift_map, energy):
        self.lift_map = lift_map
        self.energy_fn = energy
        self.dim = lift_map.dim
        self.ambient_dim = lift_map.ambient_dim

    def jet(self, u):
        u = np.asarray(u, dtype=float)
        p = self.lift_map.lift(u)
        J = self.lift_map.lift_jacobian(u)
        Hp = self.lift_map.lift_hessian(u)
        gE = self.energy_fn.gradient(p)
        HE = self.energy_fn.hessian(p)
        dz = J.T @ gE
        d2z = J.T @ HE @ J + np.einsum("a,aij->ij", gE, Hp)
        return ChartJet(p, J, Hp, self.energy_fn(p), dz, 0.5 * (d2z + d2z.T))


@dataclass(frozen=True)
class MetricData:
    g: np.ndarray
    g_inv: np.ndarray
    dg: np.ndarray      # dg[i, j, k] = d g_ij / d u^k
    gamma: np.ndarray   # gamma[l, j, k] = Gamma^l_jk


def metric_from_jacobians(lift_jac, lift_hess) -> MetricData:
    J = np.asarray(lift_jac, dtype=float)
    Hp = np.asarray(lift_hess, dtype=float)
    g = J.T @ J
    g = 0.5 * (g + g.T)
    if not np.all(np.isfinite(g)):
        raise NonFinite("metric has non-finite entries")
    if np.linalg.cond(g) > METRIC_CONDITION_LIMIT:
        raise SingularMetric(f"metric condition number exceeds {METRIC_CONDITION_LIMIT:g}")
    g_inv = np.linalg.inv(g)
    g_inv = 0.5 * (g_inv + g_inv.T)
    # d g_ij / du^k = sum_a psi^a_{,ik} psi^a_{,j} + psi^a_{,i} psi^a_{,jk}
    t = np.einsum("aik,aj->ijk", Hp, J)
    dg = t + t.transpose(1, 0, 2)
    # first-kind symbols [ij, k]-style combination, then raise with g^{li}
    comb = dg + dg.transpose(0, 2, 1) - dg.transpose(2, 0, 1)
    gamma = 0.5 * np.einsum("li,ijk->ljk", g_inv, comb)
    gamma = 0.5 * (gamma + gamma.transpose(0, 2, 1))
    return MetricData(g, g_inv, dg, gamma)


def metric_at(chart: ChartFunctions, u) -> MetricData:
    """Induced metric, its inverse, derivatives and Christoffel symbols at ``u``."""
    jet = chart.jet(u)
    return metric_from_jacobians(jet.lift_jac, jet.lift_hess)


def riemannian_gradient(m: MetricData, dZ):
    return m.g_inv @ np.asarray(dZ, dtype=float)


def covariant_hessian_lower(m: MetricData, dZ, d2Z):
    """``(nabla dZ)_ij = d2Z_ij - Gamma^k_ij dZ_k`` (symmetric)."""
    low = np.asarray(d2Z, dtype=float) - np.einsum("kij,k->ij", m.gamma, np.asarray(dZ, dtype=float))
    return 0.5 * (low + low.T)


def covariant_hessian(m: MetricData, dZ, d2Z):
    """Covariant Hessian as the operator ``H^i_j = g^{ik} (nabla dZ)_kj``.

    The operator is self-adjoint with respect to ``g`` but not symmetric as a
    matrix in general.
    """
    return m.g_inv @ covariant_hessian_lower(m, dZ, d2Z)


def g_norm(m: MetricData, v):
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(max(v @ m.g @ v, 0.0)))


@dataclass(frozen=True)
class GEResidual:
    value: np.ndarray   # (d+1,)
    jac: np.ndarray     # (d+1, d+2), columns (u, lambda, L)


@dataclass(frozen=True)
class GEPoint:
    """Everything the continuation needs at one chart point."""

    value: np.ndarray
    grad: np.ndarray
    hess_op: np.ndarray
    metric: MetricData
    jet: ChartJet


def ge_evaluate(chart: ChartFunctions, u, lam, L) -> GEPoint:
    jet = chart.jet(u)
    m = metric_from_jacobians(jet.lift_jac, jet.lift_hess)
    grad = riemannian_gradient(m, jet.dz)
    H = covariant_hessian(m, jet.dz, jet.d2z)
    value = np.concatenate([[jet.z - L], H @ grad - lam * grad])
    if not np.all(np.isfinite(value)):
        raise NonFinite("gradient-extremal residual is not finite")
    return GEPoint(value, grad, H, m, jet)


def ge_residual_value(chart: ChartFunctions, u, lam, L):
    """``[Z(u) - L ; Hess Z grad Z - lam grad Z]``."""
    return ge_evaluate(chart, u, lam, L).value


def ge_jacobian(chart: ChartFunctions, u, lam, L, base=None, rel_step=1e-6):
    """Jacobian w.r.t. ``(u, lam, L)``; the ``u`` block by forward differences.

    ``base`` may pass an already computed :class:`GEPoint` at ``(u, lam, L)``.
    """
    u = np.asarray(u, dtype=float)
    d = u.size
    if base is None:
        base = ge_evaluate(chart, u, lam, L)
    h = rel_step * (1.0 + np.linalg.norm(u))
    jac = np.zeros((d + 1, d + 2))
    for k in range(d):
        up = u.copy()
        up[k] += h
        jac[:, k] = (ge_residual_value(chart, up, lam, L) - base.value) / h
    jac[1:, d] = -base.grad
    jac[0, d + 1] = -1.0
    return jac


def ge_residual(chart: ChartFunctions, u, lam, L) -> GEResidual:
    base = ge_evaluate(chart, u, lam, L)
    return GEResidual(base.value, ge_jacobian(chart, u, lam, L, base=base))

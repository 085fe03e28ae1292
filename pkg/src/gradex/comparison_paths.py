"""Euclidean reference paths from a minimum towards a saddle.

Four classical constructions are provided so they can be compared on planar
test surfaces: the gradient extremal, the Newton trajectory, gentlest ascent
dynamics and the (simplified) string method.  All return a :class:`PathResult`
holding the path as an ordered array of nodes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .continuation import (
    CRITICAL_POINT,
    ContinuationConfig,
    polish_critical_point,
    resolve_extremal_curve,
)
from .errors import MaxIterations
from .geometry import FlatChart


@dataclass
class PathResult:
    nodes: np.ndarray
    method: str
    converged: bool
    grad_norm: float
    info: dict = field(default_factory=dict)

    @property
    def end(self):
        return self.nodes[-1]


def euclidean_ge(E, x0, branch="smallest", cfg: ContinuationConfig | None = None, sign=1.0, v0=None):
    """Gradient extremal of ``E`` through ``x0``; the flat-chart case of the continuation."""
    cfg = cfg or ContinuationConfig()
    seg = resolve_extremal_curve(FlatChart(E), x0, v0, cfg, sign=sign, branch=branch)
    end = seg.points[-1]
    return PathResult(seg.points, "GE", seg.termination == CRITICAL_POINT,
                      float(np.linalg.norm(E.gradient(end))),
                      {"segment": seg, "termination": seg.termination})


# ---------------------------------------------------------------------------
# Newton trajectory
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NTConfig:
    h: float = 5e-3
    h_min: float = 1e-9
    tol: float = 1e-10
    max_iter: int = 10
    max_steps: int = 20000


def _perp_basis(r):
    """Orthonormal basis (columns) of the complement of ``r``."""
    n = r.size
    q, _ = np.linalg.qr(np.column_stack([r, np.eye(n)]))
    return q[:, 1:n]


def newton_trajectory(E, x0, r=(1.0, 0.0), cfg: NTConfig | None = None, sign=1.0):
    """Curve through ``x0`` on which ``grad E`` stays parallel to ``r``.

    Pseudo-arclength continuation of ``B^T grad E(x) = 0`` with ``B`` spanning
    the complement of ``r``.  The run ends when ``r . grad E`` changes sign,
    i.e. a critical point has been passed, which is then located by Newton.
    """
    cfg = cfg or NTConfig()
    r = np.asarray(r, dtype=float)
    r = r / np.linalg.norm(r)
    B = _perp_basis(r)
    x = np.asarray(x0, dtype=float).copy()

    def F(y):
        return B.T @ E.gradient(y)

    def J(y):
        return B.T @ E.hessian(y)

    # initial tangent: the null direction of B^T H, i.e. H^{-1} r at a minimum
    t = np.linalg.svd(J(x))[2][-1]
    try:
        tr = np.linalg.solve(E.hessian(x), r)
        t = tr / np.linalg.norm(tr)
    except np.linalg.LinAlgError:
        pass
    t = sign * t
    nodes = [x.copy()]
    # sign of r . grad E along the path, fixed after the first step (it is ~0 at a minimum)
    sigma0 = None
    h = cfg.h
    converged = False
    for _ in range(cfg.max_steps):
        ok = False
        while h >= cfg.h_min:
            y = x + h * t
            for _it in range(cfg.max_iter):
                res = F(y)
                if np.abs(res).max() < cfg.tol:
                    ok = True
                    break
                A = np.vstack([J(y), t])
                dy = np.linalg.solve(A, -np.concatenate([res, [t @ (y - x) - h]]))
                y = y + dy
            if ok and np.linalg.norm(y - x) <= 2 * h:
                break
            ok = False
            h *= 0.5
        if not ok:
            break
        sigma = r @ E.gradient(y)
        t_new = np.linalg.svd(J(y))[2][-1]
        t = t_new if t_new @ t > 0 else -t_new
        if sigma0 is not None and np.sign(sigma) != np.sign(sigma0):
            # a critical point lies between x and y
            u, gn, conv = polish_critical_point(FlatChart(E), 0.5 * (x + y), tol=1e-10)
            if conv and np.linalg.norm(u - y) < 4 * h:
                nodes.append(y)
                nodes.append(u)
                converged = True
                break
        if sigma0 is None:
            sigma0 = sigma
        nodes.append(y)
        x = y
        h = min(cfg.h, 1.5 * h)
    nodes = np.array(nodes)
    return PathResult(nodes, "NT", converged, float(np.linalg.norm(E.gradient(nodes[-1]))),
                      {"direction": r})


# ---------------------------------------------------------------------------
# gentlest ascent dynamics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GADConfig:
    dt: float = 1e-4
    dt_min: float = 1e-10
    max_steps: int = 200000
    tol: float = 1e-8
    kick: float = 1e-3
    record_every: int = 10
    divergence: float = 1e3


def _gad_rhs(E, x, v):
    g = E.gradient(x)
    H = E.hessian(x)
    dx = -(g - 2.0 * (v @ g) * v)
    Hv = H @ v
    dv = -(Hv - (v @ Hv) * v)
    return dx, dv


def gad_trajectory(E, x0, v0=None, cfg: GADConfig | None = None, sign=1.0):
    """Gentlest ascent dynamics from ``x0``.

    ``v0`` defaults to the softest Hessian eigenvector at ``x0``.  Because a
    minimum is a fixed point of the dynamics, the start is displaced by
    ``cfg.kick`` along ``sign * v0``.  Explicit Euler steps; the step is halved
    whenever the energy becomes non-finite.
    """
    cfg = cfg or GADConfig()
    x = np.asarray(x0, dtype=float).copy()
    if v0 is None:
        vals, vecs = np.linalg.eigh(E.hessian(x))
        v0 = vecs[:, 0]
        v0 = v0 * np.sign(v0[np.argmax(np.abs(v0))])
    v = np.asarray(v0, dtype=float)
    v = sign * v / np.linalg.norm(v)
    nodes = [x.copy()]
    x = x + cfg.kick * v
    nodes.append(x.copy())
    dt = cfg.dt
    converged = diverged = False
    max_v_dev = 0.0
    for k in range(1, cfg.max_steps + 1):
        dx, dv = _gad_rhs(E, x, v)
        if np.linalg.norm(E.gradient(x)) < cfg.tol:
            converged = True
            break
        while True:
            xn = x + dt * dx
            if np.isfinite(E(xn)) or dt < cfg.dt_min:
                break
            dt *= 0.5
        vn = v + dt * dv
        vn /= np.linalg.norm(vn)
        max_v_dev = max(max_v_dev, abs(np.linalg.norm(vn) - 1.0))
        x, v = xn, vn
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > cfg.divergence:
            diverged = True
            break
        if k % cfg.record_every == 0:
            nodes.append(x.copy())
    if not np.array_equal(nodes[-1], x):
        nodes.append(x.copy())
    nodes = np.array(nodes)
    return PathResult(nodes, "GAD", converged, float(np.linalg.norm(E.gradient(x))),
                      {"direction": v, "diverged": diverged, "steps": k, "max_unit_deviation": max_v_dev})


# ---------------------------------------------------------------------------
# string method
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StringConfig:
    dt: float = 1e-4
    # stop when max node displacement per unit pseudo-time falls below tol
    tol: float = 1e-2
    max_iter: int = 100000


def reparameterize(nodes):
    """Redistribute nodes to equal arclength along a cubic spline through them."""
    seg = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return nodes.copy()
    keep = np.concatenate([[True], seg > 1e-14 * s[-1]])
    s, pts = s[keep] / s[-1], nodes[keep]
    spline = CubicSpline(s, pts, axis=0)
    return spline(np.linspace(0.0, 1.0, len(nodes)))


def string_method(E, xa, xb, m=100, cfg: StringConfig | None = None):
    """Simplified string method between ``xa`` and ``xb``.

    Every node takes a steepest-descent step, then the nodes are put back at
    equal arclength.  Raises :class:`MaxIterations` when the largest node
    displacement rate does not drop below ``cfg.tol``.
    """
    cfg = cfg or StringConfig()
    xa = np.asarray(xa, dtype=float)
    xb = np.asarray(xb, dtype=float)
    nodes = xa + np.linspace(0.0, 1.0, m)[:, None] * (xb - xa)
    for it in range(1, cfg.max_iter + 1):
        grads = np.array([E.gradient(p) for p in nodes])
        new = reparameterize(nodes - cfg.dt * grads)
        rate = np.abs(new - nodes).max() / cfg.dt
        nodes = new
        if rate < cfg.tol:
            break
    else:
        raise MaxIterations(f"string did not converge in {cfg.max_iter} iterations (rate {rate:.3g})")
    energies = np.array([E(p) for p in nodes])
    top = int(np.argmax(energies))
    return PathResult(nodes, "string", True, float(np.linalg.norm(E.gradient(nodes[top]))),
                      {"iterations": it, "top_index": top, "rate": rate})


def tangent_gradient_sines(E, nodes):
    """|sin| of the angle between the path tangent and ``grad E`` at interior nodes."""
    t = nodes[2:] - nodes[:-2]
    g = np.array([E.gradient(p) for p in nodes[1:-1]])
    cross = t[:, 0] * g[:, 1] - t[:, 1] * g[:, 0] if nodes.shape[1] == 2 else None
    if cross is not None:
        denom = np.linalg.norm(t, axis=1) * np.linalg.norm(g, axis=1)
        return np.abs(cross) / np.where(denom > 0, denom, 1.0)
    tn = t / np.linalg.norm(t, axis=1)[:, None]
    gp = g - np.sum(g * tn, axis=1)[:, None] * tn
    return np.linalg.norm(gp, axis=1) / np.maximum(np.linalg.norm(g, axis=1), 1e-300)


# ---------------------------------------------------------------------------
# distances between paths
# ---------------------------------------------------------------------------

def _point_to_polyline(points, poly):
    """Distance from each row of ``points`` to the polyline ``poly``."""
    if len(poly) == 1:
        return np.linalg.norm(points - poly[0], axis=1)
    a = poly[:-1]
    ab = poly[1:] - a
    L2 = np.sum(ab * ab, axis=1)
    out = np.empty(len(points))
    for i, p in enumerate(points):
        ap = p - a
        t = np.divide(np.sum(ap * ab, axis=1), L2, out=np.zeros_like(L2), where=L2 > 0)
        t = np.clip(t, 0.0, 1.0)
        out[i] = np.sqrt(np.min(np.sum((ap - t[:, None] * ab) ** 2, axis=1)))
    return out


def hausdorff(P, Q):
    """Symmetric Hausdorff distance between two polylines (vertex-to-segment)."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    return float(max(_point_to_polyline(P, Q).max(), _point_to_polyline(Q, P).max()))


def pairwise_distinctness(paths):
    """Matrix of Hausdorff distances between the node sets of ``paths``."""
    k = len(paths)
    D = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            D[i, j] = D[j, i] = hausdorff(paths[i].nodes, paths[j].nodes)
    return D

"""Fast self-checks: geometry identities, GP derivatives, diffusion-map sanity.

Each check returns ``(name, passed, detail)``.  :func:`run_checks` runs them
all; its ``fault`` argument corrupts one intermediate quantity on purpose so
that the failure path can be exercised.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from . import manifold_learning as ml
from .geometry import ComposedChart, FlatChart, covariant_hessian_lower, ge_evaluate, metric_at
from .potentials import MuellerBrown, SphereXYZ, StereographicChart
from .surrogates import gp_fit, gp_mean_jac_hess

FAULTS = ("gamma-asymmetry",)


def test_charts():
    xyz = SphereXYZ()
    return [ComposedChart(StereographicChart("north"), xyz),
            ComposedChart(StereographicChart("south"), xyz)]


def random_chart_points(n, seed=0, radius=2.0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-radius, radius, size=(n, 2))


def _metrics(n_points, seed, fault):
    out = []
    for chart in test_charts():
        for u in random_chart_points(n_points, seed):
            m = metric_at(chart, u)
            if fault == "gamma-asymmetry":
                gamma = m.gamma.copy()
                gamma[0, 0, 1] += 1e-3
                m = replace(m, gamma=gamma)
            out.append((chart, u, m))
    return out


def check_metric(n_points=500, seed=0, fault=None):
    spd = inv = sym = adj = 0.0
    spd_ok = True
    for chart, u, m in _metrics(n_points, seed, fault):
        spd_ok &= bool(np.all(np.linalg.eigvalsh(m.g) > 0))
        inv = max(inv, np.abs(m.g_inv @ m.g - np.eye(2)).max())
        sym = max(sym, np.abs(m.gamma - m.gamma.transpose(0, 2, 1)).max())
        jet = chart.jet(u)
        low = covariant_hessian_lower(m, jet.dz, jet.d2z)
        # g-self-adjointness of H = g^-1 low  <=>  g H = low symmetric
        gH = m.g @ (m.g_inv @ low)
        adj = max(adj, np.abs(gH - gH.T).max() / max(1.0, np.abs(gH).max()))
    return [("metric SPD", spd_ok, ""),
            ("g^-1 g = I", inv < 1e-10, f"max dev {inv:.2e}"),
            ("Christoffel symmetry", sym == 0.0, f"max asym {sym:.2e}"),
            ("covariant Hessian self-adjoint", adj < 1e-8, f"max rel dev {adj:.2e}")]


def check_flat_residual(n_points=200, seed=0):
    E = MuellerBrown()
    rng = np.random.default_rng(seed)
    dev = 0.0
    for _ in range(n_points):
        x = rng.uniform([-1.5, -0.5], [1.0, 2.0])
        lam, L = rng.normal(size=2)
        r = ge_evaluate(FlatChart(E), x, lam, L).value
        g, H = E.gradient(x), E.hessian(x)
        ref = H @ g - lam * g
        dev = max(dev, np.abs(r[1:] - ref).max() / max(1.0, np.abs(ref).max()))
    return [("flat GE residual = Euclidean", dev < 1e-12, f"max rel dev {dev:.2e}")]


def check_gp_derivatives(n_points=50, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(60, 2))
    Y = np.column_stack([np.sin(2 * X[:, 0]) * X[:, 1], np.cos(X[:, 0] + X[:, 1])])
    gp = gp_fit(X, Y, hyper={"ell": [0.6, 0.7], "s2": 1.0})
    h = 1e-4
    ej = eh = 0.0
    for u in rng.uniform(-0.8, 0.8, size=(n_points, 2)):
        _, J, H = gp_mean_jac_hess(gp, u)
        Jfd = np.empty_like(J)
        Hfd = np.empty_like(H)
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            mp, Jp, _ = gp_mean_jac_hess(gp, u + e)
            mm, Jm, _ = gp_mean_jac_hess(gp, u - e)
            Jfd[:, k] = (mp - mm) / (2 * h)
            Hfd[:, :, k] = (Jp - Jm) / (2 * h)
        ej = max(ej, np.abs(J - Jfd).max() / max(1e-12, np.abs(J).max()))
        eh = max(eh, np.abs(H - Hfd).max() / max(1e-12, np.abs(H).max()))
    return [("GP Jacobian vs FD", ej < 1e-5, f"max rel err {ej:.2e}"),
            ("GP Hessian vs FD", eh < 1e-3, f"max rel err {eh:.2e}")]


def check_diffusion_map(seed=0):
    rng = np.random.default_rng(seed)
    r = np.sqrt(rng.uniform(0, 1, 300))
    t = rng.uniform(0, 2 * np.pi, 300)
    xy = np.column_stack([r * np.cos(t), r * np.sin(t)])
    P = np.column_stack([xy, 0.1 * xy[:, 0] + 0.2 * xy[:, 1]])
    emb = ml.fit(ml.PointCloud(P, P.mean(axis=0)), d=2)
    A = np.column_stack([np.ones(len(xy)), emb.coords])
    r2 = min(1 - np.sum((xy[:, k] - A @ np.linalg.lstsq(A, xy[:, k], rcond=None)[0]) ** 2)
             / np.sum((xy[:, k] - xy[:, k].mean()) ** 2) for k in range(2))
    nys = np.abs(ml.extend(emb, P) - emb.coords).max()
    return [("diffusion map recovers disk", r2 > 0.95, f"min R^2 {r2:.3f}"),
            ("Nystrom reproduces training coords", nys < 1e-8, f"max dev {nys:.2e}")]


def run_checks(fault=None):
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; choose from {FAULTS}")
    results = []
    results += check_metric(fault=fault)
    results += check_flat_residual()
    results += check_gp_derivatives()
    results += check_diffusion_map()
    return results


def format_table(results):
    width = max(len(name) for name, _, _ in results)
    lines = [f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}".rstrip() for name, ok, detail in results]
    return "\n".join(lines)

"""Reference critical points and steady states found by grid-seeded Newton.

These are computed independently of any path-following code and serve as
oracles for the demos and tests.
"""
from __future__ import annotations

import copy
import functools
import itertools

import numpy as np

from .potentials import CSTRField, MuellerBrown, YannikPotential


def newton_roots(fun, jac, seeds, tol=1e-12, max_iter=100, merge_tol=1e-6, damping=True):
    """Distinct roots of ``fun`` reached by damped Newton from ``seeds``."""
    roots = []
    with np.errstate(over="ignore", invalid="ignore"):
        for x in seeds:
            _newton_from(fun, jac, x, tol, max_iter, merge_tol, damping, roots)
    return roots


def _newton_from(fun, jac, x, tol, max_iter, merge_tol, damping, roots):
    x = np.asarray(x, dtype=float).copy()
    f = fun(x)
    nf = np.linalg.norm(f)
    for _ in range(max_iter):
        if nf < tol:
            break
        try:
            dx = -np.linalg.solve(jac(x), f)
        except np.linalg.LinAlgError:
            break
        a = 1.0
        while True:
            xn = x + a * dx
            fn = fun(xn)
            if np.all(np.isfinite(fn)) and (np.linalg.norm(fn) < nf or not damping):
                break
            a *= 0.5
            if a < 1e-8:
                xn = None
                break
        if xn is None:
            break
        x, f, nf = xn, fn, np.linalg.norm(fn)
    if nf < tol and not any(np.linalg.norm(x - r) < merge_tol for r in roots):
        roots.append(x)


def classify(hessian):
    ev = np.linalg.eigvalsh(hessian)
    if np.all(ev > 0):
        return "minimum"
    if np.all(ev < 0):
        return "maximum"
    return "saddle"


def critical_points(energy, bounds, n=20, tol=1e-12):
    """Critical points of a planar energy seeded from an ``n x n`` grid over ``bounds``."""
    (x0, x1), (y0, y1) = bounds
    seeds = itertools.product(np.linspace(x0, x1, n), np.linspace(y0, y1, n))
    roots = newton_roots(energy.gradient, energy.hessian, seeds, tol=tol)
    inside = [r for r in roots if x0 <= r[0] <= x1 and y0 <= r[1] <= y1]
    out = []
    for r in sorted(inside, key=lambda r: (round(r[0], 6), round(r[1], 6))):
        out.append({"point": r, "kind": classify(energy.hessian(r)), "energy": energy(r),
                    "residual": float(np.linalg.norm(energy.gradient(r)))})
    return out


MB_WINDOW = ((-1.5, 1.2), (-0.5, 2.0))


@functools.lru_cache(maxsize=None)
def _mb_fixtures():
    return critical_points(MuellerBrown(), MB_WINDOW, n=20, tol=1e-11)


def mueller_brown_fixtures():
    """Critical points of the planar Mueller-Brown surface in its usual window."""
    return copy.deepcopy(_mb_fixtures())


def mb_rightmost_minimum():
    mins = [c for c in mueller_brown_fixtures() if c["kind"] == "minimum"]
    return max(mins, key=lambda c: c["point"][0])["point"]


def mb_nearby_saddle():
    """Saddle between the rightmost and the middle minimum."""
    m = mb_rightmost_minimum()
    saddles = [c for c in mueller_brown_fixtures() if c["kind"] == "saddle"]
    return min(saddles, key=lambda c: np.linalg.norm(c["point"] - m))["point"]


def cstr_steady_states(field_=None, bounds=((-0.2, 1.2), (-1.0, 8.0)), n=30):
    field_ = field_ or CSTRField()
    (x0, x1), (y0, y1) = bounds
    seeds = itertools.product(np.linspace(x0, x1, n), np.linspace(y0, y1, n))
    roots = newton_roots(field_, field_.jacobian, seeds, tol=1e-13)
    out = []
    for r in sorted(roots, key=lambda r: r[0]):
        ev = np.linalg.eigvals(field_.jacobian(r))
        out.append({"point": r, "stable": bool(np.all(ev.real < 0)),
                    "residual": float(np.linalg.norm(field_(r)))})
    return out


YANNIK_WINDOW = ((-30.0, 80.0), (-30.0, 130.0))


@functools.lru_cache(maxsize=None)
def _yannik_fixtures():
    return critical_points(YannikPotential(), YANNIK_WINDOW, n=30, tol=1e-11)


def yannik_fixtures():
    return copy.deepcopy(_yannik_fixtures())


def fixtures_to_json(fixtures):
    rows = []
    for f in fixtures:
        rows.append({k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in f.items()})
    return rows

"""Analytic energies, vector fields and embeddings used as ground truth.

Every energy exposes ``__call__`` (value), ``gradient`` and ``hessian`` on a
single point of shape ``(dim,)``.  Vector fields expose ``__call__`` and
``jacobian``.  All objects are immutable after construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "Energy",
    "VectorField",
    "GaussianSumCoefficients",
    "MB_COEFFICIENTS",
    "YANNIK_COEFFICIENTS",
    "MuellerBrown",
    "YannikPotential",
    "QuadraticPotential",
    "SphereXYZ",
    "StereographicChart",
    "CSTRField",
    "VanDerPolField",
    "SquaredMagnitude",
    "MuellerBrownSphere",
    "KAPPA_SCALE",
    "KAPPA_SHIFT",
    "kappa",
    "kappa_inverse",
    "angles_to_sphere",
    "hyperbolic_squared_length",
    "load_coefficients",
    "mueller_brown",
    "yannik_potential",
    "cstr_field",
    "squared_magnitude",
    "mb_on_sphere",
    "sphere_xyz",
]


class Energy:
    """Scalar potential on R^dim with gradient and Hessian."""

    dim: int

    def __call__(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def hessian(self, x):
        raise NotImplementedError


class VectorField:
    """Vector field on R^dim with Jacobian."""

    dim: int

    def __call__(self, x):
        raise NotImplementedError

    def jacobian(self, x):
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Sums of exponentiated quadratics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianSumCoefficients:
    """Per-term coefficients ``(A, a, b, c, x0, y0)`` of a four-term surface."""

    A: tuple
    a: tuple
    b: tuple
    c: tuple
    x0: tuple
    y0: tuple

    def __post_init__(self):
        n = len(self.A)
        for name in ("a", "b", "c", "x0", "y0"):
            if len(getattr(self, name)) != n:
                raise ConfigError(f"coefficient {name!r} has {len(getattr(self, name))} "
                                  f"entries, expected {n}")

    def as_arrays(self):
        return tuple(np.asarray(getattr(self, k), dtype=float)
                     for k in ("A", "a", "b", "c", "x0", "y0"))


MB_COEFFICIENTS = GaussianSumCoefficients(
    A=(-200.0, -100.0, -170.0, 15.0),
    a=(-1.0, -1.0, -6.5, 0.7),
    b=(0.0, 0.0, 11.0, 0.6),
    c=(-10.0, -10.0, -6.5, 0.7),
    x0=(1.0, 0.0, -0.5, -1.0),
    y0=(0.0, 0.5, 1.5, 1.0),
)

YANNIK_COEFFICIENTS = GaussianSumCoefficients(
    A=(10.0, -0.4, 0.8, 6.0),
    a=(-1 / 3000, -1 / 300, -1 / 1500, -1 / 3000),
    b=(-1 / 1000, -1 / 30, -1 / 1500, -1 / 3000),
    c=(0.0, 1 / 200, 1 / 2000, 3 / 20000),
    x0=(0.0, 15.0, 25.0, 40.0),
    y0=(0.0, 10.0, 100.0, 30.0),
)


def load_coefficients(path):
    """Read a coefficient table from a flat ``key = v1, v2, ...`` file.

    Keys are ``A, a, b, c, x0, y0``; ``#`` starts a comment.
    """
    from .io import read_kv_file

    raw = read_kv_file(path)
    expected = {"A", "a", "b", "c", "x0", "y0"}
    unknown = set(raw) - expected
    if unknown:
        raise ConfigError(f"unknown coefficient keys: {sorted(unknown)}")
    missing = expected - set(raw)
    if missing:
        raise ConfigError(f"missing coefficient keys: {sorted(missing)}")
    values = {k: tuple(float(v) for v in raw[k].split(",")) for k in expected}
    return GaussianSumCoefficients(**values)


class MuellerBrown(Energy):
    """Planar Mueller-Brown surface

    ``U(w) = sum_i A_i exp(a_i dx^2 + b_i dx dy + c_i dy^2)`` with
    ``dx = w1 - x0_i`` and ``dy = w2 - y0_i``.
    """

    dim = 2

    def __init__(self, coefficients: GaussianSumCoefficients = MB_COEFFICIENTS):
        self.coefficients = coefficients
        self._A, self._a, self._b, self._c, self._x0, self._y0 = coefficients.as_arrays()

    def _terms(self, w):
        w = np.asarray(w, dtype=float)
        dx = w[0] - self._x0
        dy = w[1] - self._y0
        e = self._A * np.exp(self._a * dx**2 + self._b * dx * dy + self._c * dy**2)
        gx = 2 * self._a * dx + self._b * dy
        gy = self._b * dx + 2 * self._c * dy
        return e, gx, gy

    def __call__(self, w):
        return float(self._terms(w)[0].sum())

    def gradient(self, w):
        e, gx, gy = self._terms(w)
        return np.array([np.sum(e * gx), np.sum(e * gy)])

    def hessian(self, w):
        e, gx, gy = self._terms(w)
        hxx = np.sum(e * (gx * gx + 2 * self._a))
        hxy = np.sum(e * (gx * gy + self._b))
        hyy = np.sum(e * (gy * gy + 2 * self._c))
        return np.array([[hxx, hxy], [hxy, hyy]])


class YannikPotential(Energy):
    """Four-term meandering test surface; the cross term carries no centre offsets:

    ``E(x) = -sum_i A_i exp(a_i (x1 - x0_i)^2 + b_i (x2 - y0_i)^2 + c_i x1 x2)``.
    """

    dim = 2

    def __init__(self, coefficients: GaussianSumCoefficients = YANNIK_COEFFICIENTS):
        self.coefficients = coefficients
        self._A, self._a, self._b, self._c, self._x0, self._y0 = coefficients.as_arrays()

    def _terms(self, x):
        x = np.asarray(x, dtype=float)
        dx = x[0] - self._x0
        dy = x[1] - self._y0
        e = -self._A * np.exp(self._a * dx**2 + self._b * dy**2 + self._c * x[0] * x[1])
        gx = 2 * self._a * dx + self._c * x[1]
        gy = 2 * self._b * dy + self._c * x[0]
        return e, gx, gy

    def __call__(self, x):
        return float(self._terms(x)[0].sum())

    def gradient(self, x):
        e, gx, gy = self._terms(x)
        return np.array([np.sum(e * gx), np.sum(e * gy)])

    def hessian(self, x):
        e, gx, gy = self._terms(x)
        hxx = np.sum(e * (gx * gx + 2 * self._a))
        hxy = np.sum(e * (gx * gy + self._c))
        hyy = np.sum(e * (gy * gy + 2 * self._b))
        return np.array([[hxx, hxy], [hxy, hyy]])


class QuadraticPotential(Energy):
    """``E(x) = 0.5 * sum_k s_k x_k^2``; its coordinate axes are exact gradient extremals."""

    def __init__(self, stiffness=(1.0, 4.0)):
        self.stiffness = np.asarray(stiffness, dtype=float)
        self.dim = self.stiffness.size

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * np.sum(self.stiffness * x**2))

    def gradient(self, x):
        return self.stiffness * np.asarray(x, dtype=float)

    def hessian(self, x):
        return np.diag(self.stiffness)


# ---------------------------------------------------------------------------
# Unit sphere with E = xyz
# ---------------------------------------------------------------------------

class SphereXYZ(Energy):
    """``E(x, y, z) = xyz`` on R^3, restricted in practice to the unit sphere."""

    dim = 3

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        return float(p[0] * p[1] * p[2])

    def gradient(self, p):
        x, y, z = np.asarray(p, dtype=float)
        return np.array([y * z, x * z, x * y])

    def hessian(self, p):
        x, y, z = np.asarray(p, dtype=float)
        return np.array([[0.0, z, y], [z, 0.0, x], [y, x, 0.0]])

    @staticmethod
    def pullback(u):
        """Closed-form ``Z(u, v) = 4uv(u^2+v^2-1)/(u^2+v^2+1)^3`` in the north-projection chart."""
        u, v = np.asarray(u, dtype=float)
        s = u * u + v * v
        return 4 * u * v * (s - 1) / (s + 1) ** 3

    @staticmethod
    def critical_points():
        """The 14 constrained critical points on the unit sphere (axes and cube diagonals)."""
        pts = []
        for k in range(3):
            for sgn in (1.0, -1.0):
                e = np.zeros(3)
                e[k] = sgn
                pts.append(e)
        r = 1 / np.sqrt(3)
        for sx in (1, -1):
            for sy in (1, -1):
                for sz in (1, -1):
                    pts.append(r * np.array([sx, sy, sz], dtype=float))
        return np.array(pts)


class StereographicChart:
    """Stereographic chart of the unit sphere.

    ``pole='north'`` projects from the North pole (chart centred on the South
    pole): ``psi(u, v) = (2u, 2v, u^2+v^2-1) / (u^2+v^2+1)``.  ``pole='south'``
    projects from the South pole and flips the sign of the third component.
    """

    def __init__(self, pole="north"):
        if pole not in ("north", "south"):
            raise ValueError(f"pole must be 'north' or 'south', got {pole!r}")
        self.pole = pole
        self._sz = 1.0 if pole == "north" else -1.0
        self.dim = 2
        self.ambient_dim = 3

    def lift(self, u):
        u = np.asarray(u, dtype=float)
        s = u @ u
        return np.array([2 * u[0], 2 * u[1], self._sz * (s - 1)]) / (s + 1)

    def lift_jacobian(self, u):
        u = np.asarray(u, dtype=float)
        s = u @ u
        q = (s + 1) ** 2
        J = np.empty((3, 2))
        # d/du_k of 2u_i/(s+1) = 2 delta_ik/(s+1) - 4 u_i u_k/(s+1)^2
        J[:2, :] = 2 * np.eye(2) / (s + 1) - 4 * np.outer(u, u) / q
        # d/du_k of (s-1)/(s+1) = 4 u_k/(s+1)^2
        J[2, :] = self._sz * 4 * u / q
        return J

    def lift_hessian(self, u):
        """Second derivatives, shape ``(3, 2, 2)``."""
        u = np.asarray(u, dtype=float)
        s = u @ u
        a = s + 1
        H = np.empty((3, 2, 2))
        eye = np.eye(2)
        for i in range(2):
            for k in range(2):
                for m in range(2):
                    H[i, k, m] = (-4 * (eye[i, m] * u[k] + eye[k, m] * u[i] + eye[i, k] * u[m]) / a**2
                                  + 16 * u[i] * u[k] * u[m] / a**3)
        H[2] = self._sz * (4 * eye / a**2 - 16 * np.outer(u, u) / a**3)
        return H

    def project(self, p):
        """Inverse of :meth:`lift` (defined away from the projection pole)."""
        x, y, z = np.asarray(p, dtype=float)
        denom = 1 - self._sz * z
        if abs(denom) < 1e-14:
            raise DomainError("point is at the projection pole")
        return np.array([x / denom, y / denom])


# ---------------------------------------------------------------------------
# Non-gradient systems
# ---------------------------------------------------------------------------

class CSTRField(VectorField):
    """First-order exothermic reaction in a continuously stirred tank reactor.

    ``x1' = -x1 + Da (1 - x1) exp(x2)``,
    ``x2' = -x2 + B Da (1 - x1) exp(x2) - beta (x2 - xc)``.
    """

    dim = 2

    def __init__(self, Da=0.085, B=22.0, beta=3.0, xc=-0.04):
        self.Da, self.B, self.beta, self.xc = float(Da), float(B), float(beta), float(xc)

    @property
    def parameters(self):
        return (self.Da, self.B, self.beta, self.xc)

    def __call__(self, x):
        x1, x2 = np.asarray(x, dtype=float)
        r = self.Da * (1 - x1) * np.exp(x2)
        return np.array([-x1 + r, -x2 + self.B * r - self.beta * (x2 - self.xc)])

    def jacobian(self, x):
        x1, x2 = np.asarray(x, dtype=float)
        ex = self.Da * np.exp(x2)
        r = ex * (1 - x1)
        return np.array([[-1 - ex, r],
                         [-self.B * ex, -1 + self.B * r - self.beta]])


class VanDerPolField(VectorField):
    """``x1' = x2``, ``x2' = mu (1 - x1^2) x2 - x1``."""

    dim = 2

    def __init__(self, mu=2.0):
        self.mu = float(mu)

    def __call__(self, x):
        x1, x2 = np.asarray(x, dtype=float)
        return np.array([x2, self.mu * (1 - x1 * x1) * x2 - x1])

    def jacobian(self, x):
        x1, x2 = np.asarray(x, dtype=float)
        return np.array([[0.0, 1.0],
                         [-2 * self.mu * x1 * x2 - 1, self.mu * (1 - x1 * x1)]])


class SquaredMagnitude(Energy):
    """``E(x) = X(x)^T X(x)`` for a vector field ``X``.

    The Hessian is ``2 J^T J + 2 sum_k X_k D^2 X_k``; the second derivatives
    ``D^2 X_k`` come from central differences of the Jacobian.
    """

    def __init__(self, field_: VectorField, fd_step=1e-5):
        self.field = field_
        self.dim = field_.dim
        self.fd_step = fd_step

    def __call__(self, x):
        X = self.field(x)
        return float(X @ X)

    def gradient(self, x):
        return 2 * self.field.jacobian(x).T @ self.field(x)

    def field_second_derivatives(self, x):
        """``D2[k, i, j] = d^2 X_k / dx_i dx_j`` by central differences."""
        x = np.asarray(x, dtype=float)
        n = self.dim
        D2 = np.empty((n, n, n))
        for j in range(n):
            h = self.fd_step * (1 + abs(x[j]))
            e = np.zeros(n)
            e[j] = h
            D2[:, :, j] = (self.field.jacobian(x + e) - self.field.jacobian(x - e)) / (2 * h)
        return 0.5 * (D2 + D2.transpose(0, 2, 1))

    def hessian(self, x):
        X = self.field(x)
        J = self.field.jacobian(x)
        H = 2 * J.T @ J + 2 * np.einsum("k,kij->ij", X, self.field_second_derivatives(x))
        return 0.5 * (H + H.T)


# ---------------------------------------------------------------------------
# Mueller-Brown mapped onto the unit sphere
# ---------------------------------------------------------------------------

KAPPA_SCALE = np.array([1.973521294, 1.750704373])
KAPPA_SHIFT = np.array([-1.85, 0.875])


def kappa(k):
    """Affine map from (azimuth, elevation) to the planar Mueller-Brown coordinates."""
    return KAPPA_SCALE * np.asarray(k, dtype=float) + KAPPA_SHIFT


def kappa_inverse(w):
    return (np.asarray(w, dtype=float) - KAPPA_SHIFT) / KAPPA_SCALE


def angles_to_sphere(angles):
    """Unit-sphere point with azimuth ``angles[0]`` and elevation ``angles[1]``."""
    th, ph = angles
    return np.array([np.cos(ph) * np.cos(th), np.cos(ph) * np.sin(th), np.sin(ph)])


def _angles_with_derivatives(p):
    x, y, z = p
    rho2 = x * x + y * y
    if rho2 == 0.0:
        raise DomainError("azimuth undefined on the z-axis (x = y = 0)")
    rho = np.sqrt(rho2)
    r2 = rho2 + z * z
    theta = np.arctan2(y, x)
    phi = np.arctan2(z, rho)

    d_theta = np.array([-y / rho2, x / rho2, 0.0])
    h_theta = np.zeros((3, 3))
    h_theta[0, 0] = 2 * x * y / rho2**2
    h_theta[1, 1] = -h_theta[0, 0]
    h_theta[0, 1] = h_theta[1, 0] = (y * y - x * x) / rho2**2

    # phi as a function of (rho, z), chained through rho(x, y)
    p_r = -z / r2
    p_z = rho / r2
    p_rr = 2 * rho * z / r2**2
    p_zz = -p_rr
    p_rz = (z * z - rho2) / r2**2
    g_rho = np.array([x / rho, y / rho, 0.0])
    h_rho = np.zeros((3, 3))
    h_rho[:2, :2] = (np.eye(2) - np.outer(g_rho[:2], g_rho[:2])) / rho
    ez = np.array([0.0, 0.0, 1.0])
    d_phi = p_r * g_rho + p_z * ez
    h_phi = (p_rr * np.outer(g_rho, g_rho) + p_rz * (np.outer(g_rho, ez) + np.outer(ez, g_rho))
             + p_zz * np.outer(ez, ez) + p_r * h_rho)
    return np.array([theta, phi]), np.vstack([d_theta, d_phi]), np.stack([h_theta, h_phi])


class MuellerBrownSphere(Energy):
    """``V(p) = U(kappa(azimuth(p), elevation(p)))`` on R^3 minus the z-axis.

    ``V`` depends only on the direction of ``p``, so it is constant along rays.
    """

    dim = 3

    def __init__(self, planar: MuellerBrown | None = None):
        self.planar = planar if planar is not None else MuellerBrown()

    def _prep(self, p):
        p = np.asarray(p, dtype=float)
        ang, A, Hang = _angles_with_derivatives(p)
        return kappa(ang), A, Hang

    def __call__(self, p):
        w, _, _ = self._prep(p)
        return self.planar(w)

    def gradient(self, p):
        w, A, _ = self._prep(p)
        return A.T @ (KAPPA_SCALE * self.planar.gradient(w))

    def gradients(self, P):
        """Row-wise gradients for an ``(N, 3)`` array of points."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        x, y, z = P.T
        rho2 = x * x + y * y
        if np.any(rho2 == 0.0):
            raise DomainError("azimuth undefined on the z-axis (x = y = 0)")
        rho = np.sqrt(rho2)
        r2 = rho2 + z * z
        w = kappa(np.column_stack([np.arctan2(y, x), np.arctan2(z, rho)]))
        mb = self.planar
        dx = w[:, :1] - mb._x0
        dy = w[:, 1:] - mb._y0
        e = mb._A * np.exp(mb._a * dx**2 + mb._b * dx * dy + mb._c * dy**2)
        gw = np.column_stack([np.sum(e * (2 * mb._a * dx + mb._b * dy), axis=1),
                              np.sum(e * (mb._b * dx + 2 * mb._c * dy), axis=1)]) * KAPPA_SCALE
        d_theta = np.column_stack([-y / rho2, x / rho2, np.zeros_like(x)])
        d_phi = np.column_stack([-z * x / (rho * r2), -z * y / (rho * r2), rho / r2])
        return gw[:, :1] * d_theta + gw[:, 1:] * d_phi

    def hessian(self, p):
        w, A, Hang = self._prep(p)
        g = KAPPA_SCALE * self.planar.gradient(w)
        Hk = KAPPA_SCALE[:, None] * self.planar.hessian(w) * KAPPA_SCALE[None, :]
        H = A.T @ Hk @ A + np.einsum("k,kij->ij", g, Hang)
        return 0.5 * (H + H.T)

    @staticmethod
    def planar_to_sphere(w):
        """Unit-sphere image of a planar Mueller-Brown point."""
        return angles_to_sphere(kappa_inverse(w))

    @staticmethod
    def sphere_to_planar(p):
        """Planar Mueller-Brown coordinates of an ambient point (its direction)."""
        return kappa(_angles_with_derivatives(p)[0])


# ---------------------------------------------------------------------------
# Van der Pol on the Poincare disk
# ---------------------------------------------------------------------------

def hyperbolic_squared_length(y, mu=2.0, power=1):
    """Squared length ``g_y(X, X)`` of the van der Pol field on the Poincare disk.

    The metric is ``4 (dy1^2 + dy2^2) / (1 - |y|^2)^power``; ``power=1`` is the
    default, ``power=2`` the standard Poincare model.
    """
    y = np.asarray(y, dtype=float)
    r2 = float(y @ y)
    if not r2 < 1.0:
        raise DomainError("point outside the open unit disk")
    X = VanDerPolField(mu)(y)
    return 4.0 * float(X @ X) / (1.0 - r2) ** power


# ---------------------------------------------------------------------------
# Functional shortcuts
# ---------------------------------------------------------------------------

_MB = MuellerBrown()
_YANNIK = YannikPotential()
_MB_SPHERE = MuellerBrownSphere(_MB)
_CSTR = CSTRField()


def mueller_brown(w):
    return _MB(w)


def yannik_potential(x):
    return _YANNIK(x)


def cstr_field(x):
    return _CSTR(x)


def squared_magnitude(field_):
    return SquaredMagnitude(field_)


def mb_on_sphere(p):
    return _MB_SPHERE(p)


def sphere_xyz():
    return SphereXYZ()

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import central_jacobian, rel_err
from gradex.errors import ConfigError, DomainError
from gradex.fixtures import (
    cstr_steady_states,
    mb_rightmost_minimum,
    mueller_brown_fixtures,
    yannik_fixtures,
)
from gradex.potentials import (
    MB_COEFFICIENTS,
    YANNIK_COEFFICIENTS,
    CSTRField,
    GaussianSumCoefficients,
    MuellerBrown,
    MuellerBrownSphere,
    QuadraticPotential,
    SphereXYZ,
    SquaredMagnitude,
    StereographicChart,
    VanDerPolField,
    YannikPotential,
    hyperbolic_squared_length,
    kappa,
    kappa_inverse,
    load_coefficients,
    mb_on_sphere,
    mueller_brown,
)

coord = st.floats(-1.5, 1.5, allow_nan=False)


def check_energy_derivatives(E, x, grad_tol=1e-5, hess_tol=1e-3):
    g_fd = central_jacobian(E, x)[0]
    H_fd = central_jacobian(E.gradient, x)
    H = E.hessian(x)
    assert np.array_equal(H, H.T)
    assert rel_err(E.gradient(x), g_fd) < grad_tol
    assert rel_err(H, H_fd) < hess_tol


# ---------------------------------------------------------------------------
# Mueller-Brown
# ---------------------------------------------------------------------------

def test_mb_coefficient_table():
    assert MB_COEFFICIENTS.A == (-200.0, -100.0, -170.0, 15.0)
    assert MB_COEFFICIENTS.x0 == (1.0, 0.0, -0.5, -1.0)


def test_mb_origin_matches_direct_formula():
    A = [-200, -100, -170, 15]
    a = [-1, -1, -6.5, 0.7]
    b = [0, 0, 11, 0.6]
    c = [-10, -10, -6.5, 0.7]
    x0 = [1, 0, -0.5, -1]
    y0 = [0, 0.5, 1.5, 1]
    ref = sum(A[i] * np.exp(a[i] * (0 - x0[i]) ** 2 + b[i] * (0 - x0[i]) * (0 - y0[i])
                            + c[i] * (0 - y0[i]) ** 2) for i in range(4))
    assert mueller_brown([0.0, 0.0]) == pytest.approx(ref, rel=1e-14)


def test_mb_far_field_is_the_repulsive_term():
    # the three attractive wells vanish far away; the fourth term has a
    # positive-definite exponent, so the surface grows without bound
    c = MB_COEFFICIENTS
    wells = GaussianSumCoefficients(c.A[:3], c.a[:3], c.b[:3], c.c[:3], c.x0[:3], c.y0[:3])
    assert abs(MuellerBrown(wells)([0.0, 60.0])) < 1e-100
    vals = [mueller_brown([0.0, y]) for y in (5.0, 10.0, 20.0)]
    assert all(b > a > 0 for a, b in zip(vals, vals[1:]))


@given(coord, coord)
def test_mb_derivatives(x, y):
    check_energy_derivatives(MuellerBrown(), np.array([x, y]))


def test_mb_critical_points():
    fx = mueller_brown_fixtures()
    kinds = [f["kind"] for f in fx]
    assert kinds.count("minimum") == 3
    assert kinds.count("saddle") == 2
    for f in fx:
        assert f["residual"] < 1e-10


# ---------------------------------------------------------------------------
# meander surface
# ---------------------------------------------------------------------------

def test_yannik_coefficient_table():
    assert YANNIK_COEFFICIENTS.A == (10.0, -0.4, 0.8, 6.0)


def test_yannik_zero_amplitudes_vanish():
    c = YANNIK_COEFFICIENTS
    E = YannikPotential(GaussianSumCoefficients((0.0,) * 4, c.a, c.b, c.c, c.x0, c.y0))
    for x in ([0, 0], [15, 10], [-40, 200]):
        assert E(x) == 0.0


def test_yannik_gradient_at_reference_point():
    E = YannikPotential()
    x = np.array([15.0, 10.0])
    assert rel_err(E.gradient(x), central_jacobian(E, x)[0]) < 1e-5


@given(st.floats(-20, 80), st.floats(-20, 130))
def test_yannik_derivatives(x, y):
    E = YannikPotential()
    p = np.array([x, y])
    # gradients are O(0.1) and vary on O(10) scales
    g = E.gradient(p)
    g_fd = central_jacobian(E, p, h=1e-3)[0]
    assert np.abs(g - g_fd).max() < 1e-5 * max(np.abs(g).max(), 1e-3)
    H = E.hessian(p)
    assert np.array_equal(H, H.T)
    H_fd = central_jacobian(E.gradient, p, h=1e-3)
    assert np.abs(H - H_fd).max() < 1e-3 * max(np.abs(H).max(), 1e-4)


def test_yannik_critical_points_are_accurate():
    fx = yannik_fixtures()
    assert any(f["kind"] == "minimum" for f in fx)
    for f in fx:
        assert f["residual"] < 1e-10


# ---------------------------------------------------------------------------
# sphere with E = xyz
# ---------------------------------------------------------------------------

def test_xyz_at_diagonal():
    r = 1 / np.sqrt(3)
    assert SphereXYZ()([r, r, r]) == pytest.approx(1 / (3 * np.sqrt(3)), rel=1e-15)


def test_xyz_pullback_at_origin():
    assert SphereXYZ.pullback([0.0, 0.0]) == 0.0


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_xyz_pullback_matches_composition(u, v):
    chart = StereographicChart("north")
    p = chart.lift([u, v])
    assert SphereXYZ.pullback([u, v]) == pytest.approx(SphereXYZ()(p), abs=1e-14)


def test_xyz_critical_points_satisfy_lagrange_condition():
    E = SphereXYZ()
    pts = SphereXYZ.critical_points()
    assert len(pts) == 14
    for p in pts:
        g = E.gradient(p)
        mu = g @ p
        assert np.linalg.norm(g - mu * p) < 1e-15
        assert np.linalg.norm(p) == pytest.approx(1.0)


def test_xyz_lagrange_oracle_finds_exactly_the_fixture_set():
    # independent oracle: Newton on (grad E - mu p, |p|^2 - 1) from many seeds
    from gradex.fixtures import newton_roots
    E = SphereXYZ()

    def F(z):
        p, mu = z[:3], z[3]
        return np.concatenate([E.gradient(p) - mu * p, [p @ p - 1]])

    def J(z):
        p, mu = z[:3], z[3]
        top = np.column_stack([E.hessian(p) - mu * np.eye(3), -p])
        return np.vstack([top, np.concatenate([2 * p, [0.0]])])

    rng = np.random.default_rng(0)
    seeds = []
    for _ in range(400):
        p = rng.standard_normal(3)
        p /= np.linalg.norm(p)
        seeds.append(np.concatenate([p, [E.gradient(p) @ p]]))
    roots = newton_roots(F, J, seeds, tol=1e-13, merge_tol=1e-6)
    found = np.array([r[:3] for r in roots])
    ref = SphereXYZ.critical_points()
    assert len(found) == 14
    for p in ref:
        assert np.min(np.linalg.norm(found - p, axis=1)) < 1e-8


@pytest.mark.parametrize("pole", ["north", "south"])
@given(u=st.floats(-2, 2), v=st.floats(-2, 2))
def test_stereographic_chart_derivatives(pole, u, v):
    ch = StereographicChart(pole)
    x = np.array([u, v])
    p = ch.lift(x)
    assert np.linalg.norm(p) == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(ch.project(p), x, atol=1e-12)
    assert rel_err(ch.lift_jacobian(x), central_jacobian(ch.lift, x)) < 1e-6
    H_fd = np.stack([central_jacobian(lambda y, i=i: ch.lift_jacobian(y)[i], x) for i in range(3)])
    assert np.abs(ch.lift_hessian(x) - H_fd).max() < 1e-6


def test_stereographic_projection_pole_raises():
    with pytest.raises(DomainError):
        StereographicChart("north").project([0.0, 0.0, 1.0])


# ---------------------------------------------------------------------------
# CSTR and squared magnitude
# ---------------------------------------------------------------------------

def test_cstr_parameters():
    assert CSTRField().parameters == (0.085, 22.0, 3.0, -0.04)


def test_cstr_three_steady_states():
    states = cstr_steady_states()
    assert len(states) == 3
    assert [s["stable"] for s in states].count(True) == 1
    F = CSTRField()
    for s in states:
        assert np.linalg.norm(F(s["point"])) < 1e-12


@given(st.floats(-0.2, 1.0), st.floats(-1.0, 5.0))
def test_cstr_jacobian(x1, x2):
    F = CSTRField()
    x = np.array([x1, x2])
    assert rel_err(F.jacobian(x), central_jacobian(F, x)) < 1e-5


def test_squared_magnitude_of_identity_field():
    from gradex.potentials import VectorField

    class Identity(VectorField):
        dim = 3

        def __call__(self, x):
            return np.asarray(x, dtype=float)

        def jacobian(self, x):
            return np.eye(3)

    E = SquaredMagnitude(Identity())
    x = np.array([0.3, -1.2, 2.0])
    assert E(x) == pytest.approx(x @ x)
    assert np.allclose(E.gradient(x), 2 * x)
    assert np.allclose(E.hessian(x), 2 * np.eye(3))
    assert E(np.zeros(3)) == 0.0


def test_squared_magnitude_vanishes_at_cstr_steady_states():
    E = SquaredMagnitude(CSTRField())
    for s in cstr_steady_states():
        assert E(s["point"]) < 1e-12


@given(st.floats(0.0, 0.9), st.floats(-0.5, 4.0))
def test_squared_magnitude_derivatives(x1, x2):
    check_energy_derivatives(SquaredMagnitude(CSTRField()), np.array([x1, x2]))


# ---------------------------------------------------------------------------
# Mueller-Brown on the sphere
# ---------------------------------------------------------------------------

def test_kappa_at_origin():
    assert np.allclose(kappa([0.0, 0.0]), [-1.85, 0.875])
    w = np.array([0.3, 0.7])
    assert np.allclose(kappa(kappa_inverse(w)), w)


@given(st.floats(-np.pi, np.pi), st.floats(-1.4, 1.4), st.sampled_from([0.9, 1.1]))
def test_mb_sphere_radial_invariance(th, ph, c):
    p = np.array([np.cos(ph) * np.cos(th), np.cos(ph) * np.sin(th), np.sin(ph)])
    assert mb_on_sphere(c * p) == pytest.approx(mb_on_sphere(p), rel=1e-13, abs=1e-12)


def test_mb_sphere_matches_planar_minimum():
    m = mb_rightmost_minimum()
    p = MuellerBrownSphere.planar_to_sphere(m)
    assert mb_on_sphere(p) == pytest.approx(mueller_brown(m), rel=1e-12)
    assert np.allclose(MuellerBrownSphere.sphere_to_planar(p), m, atol=1e-12)


def test_mb_sphere_undefined_on_axis():
    with pytest.raises(DomainError):
        mb_on_sphere([0.0, 0.0, 1.0])


@given(st.floats(-1.0, 0.5), st.floats(-0.2, 0.9), st.floats(0.8, 1.2))
def test_mb_sphere_derivatives(th, ph, r):
    E = MuellerBrownSphere()
    p = r * np.array([np.cos(ph) * np.cos(th), np.cos(ph) * np.sin(th), np.sin(ph)])
    g_fd = central_jacobian(E, p)[0]
    assert np.abs(E.gradient(p) - g_fd).max() < 1e-5 * max(np.abs(g_fd).max(), 1.0)
    assert np.allclose(E.gradients(p[None])[0], E.gradient(p), rtol=1e-12, atol=1e-10)
    H = E.hessian(p)
    assert np.array_equal(H, H.T)
    H_fd = central_jacobian(E.gradient, p)
    assert np.abs(H - H_fd).max() < 1e-3 * max(np.abs(H).max(), 1.0)


# ---------------------------------------------------------------------------
# van der Pol on the disk
# ---------------------------------------------------------------------------

def test_vdp_length_vanishes_at_origin():
    for mu in (0.5, 2.0, 7.0):
        assert hyperbolic_squared_length([0.0, 0.0], mu) == 0.0


def test_vdp_length_blows_up_at_rim():
    vals = [hyperbolic_squared_length([r, 0.0]) for r in (0.9, 0.99, 0.999, 0.9999)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert vals[-1] > 1e3


def test_vdp_length_by_tensor_contraction():
    y = np.array([0.5, 0.0])
    X = VanDerPolField(2.0)(y)
    for power in (1, 2):
        g = 4.0 / (1 - y @ y) ** power * np.eye(2)
        ref = np.einsum("i,ij,j->", X, g, X)
        assert hyperbolic_squared_length(y, 2.0, power) == pytest.approx(ref, rel=1e-15)


def test_vdp_outside_disk_raises():
    with pytest.raises(DomainError):
        hyperbolic_squared_length([0.8, 0.6])


# ---------------------------------------------------------------------------
# coefficient files
# ---------------------------------------------------------------------------

def test_load_coefficients_round_trip(tmp_path):
    path = tmp_path / "mb.cfg"
    c = MB_COEFFICIENTS
    lines = [f"{k} = {', '.join(repr(v) for v in getattr(c, k))}" for k in ("A", "a", "b", "c", "x0", "y0")]
    path.write_text("# planar surface\n" + "\n".join(lines) + "\n")
    assert load_coefficients(path) == c


def test_load_coefficients_rejects_unknown_key(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("A = 1\na = 1\nb = 1\nc = 1\nx0 = 1\ny0 = 1\nd = 2\n")
    with pytest.raises(ConfigError):
        load_coefficients(path)


def test_coefficient_length_mismatch():
    with pytest.raises(ConfigError):
        GaussianSumCoefficients((1.0, 2.0), (1.0,), (1.0,), (1.0,), (1.0,), (1.0,))


def test_quadratic_potential():
    E = QuadraticPotential((1.0, 4.0))
    assert E([1.0, 1.0]) == 2.5
    check_energy_derivatives(E, np.array([0.3, -0.2]))

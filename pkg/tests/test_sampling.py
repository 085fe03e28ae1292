import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gradex.errors import IntegrationBlowup
from gradex.fixtures import mb_rightmost_minimum
from gradex.potentials import MuellerBrownSphere, SphereXYZ
from gradex.sampling import SamplerConfig, dump_cloud, make_demo_dynamics, rk4, sample_neighborhood


def zero_field(X):
    return np.zeros_like(X)


@pytest.fixture(scope="module")
def mb_setup():
    E = MuellerBrownSphere()
    return E, make_demo_dynamics(potential=E), E.planar_to_sphere(mb_rightmost_minimum())


def test_config_validation():
    for bad in ({"N": 0}, {"sigma": 0.0}, {"tau": -1.0}, {"dt": 0.0}, {"tau": 10.0, "dt": 1e-6}):
        with pytest.raises(ValueError):
            SamplerConfig(**bad)


def test_zero_relaxation_gives_gaussian_cloud():
    p = np.array([0.3, -1.0, 2.0])
    cfg = SamplerConfig(N=2000, sigma=0.1, tau=0.0)
    cloud = sample_neighborhood(p, cfg, zero_field)
    assert np.all(np.abs(cloud.points.mean(axis=0) - p) < 4 * cfg.sigma / np.sqrt(cfg.N))


def test_fixed_seed_is_reproducible(mb_setup):
    _, dyn, p = mb_setup
    a = sample_neighborhood(p, SamplerConfig(seed=11), dyn)
    b = sample_neighborhood(p, SamplerConfig(seed=11), dyn)
    assert np.array_equal(a.points, b.points)
    c = sample_neighborhood(p, SamplerConfig(seed=12), dyn)
    assert not np.array_equal(a.points, c.points)


def test_relaxed_cloud_is_on_the_sphere(mb_setup):
    _, dyn, p = mb_setup
    cloud = sample_neighborhood(p, SamplerConfig(), dyn)
    assert np.abs(np.linalg.norm(cloud.points, axis=1) - 1).max() < 1e-3


def test_relaxed_cloud_is_two_dimensional(mb_setup):
    _, dyn, p = mb_setup
    X = sample_neighborhood(p, SamplerConfig(), dyn).points
    s = np.linalg.svd(X - X.mean(axis=0), compute_uv=False)
    assert s[1] >= 10 * s[2]


def test_dynamics_vanish_at_critical_point_on_sphere():
    E = SphereXYZ()
    dyn = make_demo_dynamics(potential=E, drift_scale=1.0)
    for p in E.critical_points():
        assert np.linalg.norm(dyn(p)) < 1e-15


@given(st.floats(0.5, 1.5), st.floats(-np.pi, np.pi), st.floats(-1.4, 1.4))
def test_radial_part_contracts(r, th, ph):
    dyn = make_demo_dynamics()
    n = np.array([np.cos(ph) * np.cos(th), np.cos(ph) * np.sin(th), np.sin(ph)])
    if abs(n[0]) + abs(n[1]) < 1e-6:
        return
    x = r * n
    radial = dyn(x) @ n
    assert radial * (r - 1) <= 0


def test_long_run_reaches_sphere_critical_point():
    E = SphereXYZ()
    dyn = make_demo_dynamics(potential=E, drift_scale=1.0)
    rng = np.random.default_rng(4)
    X0 = rng.normal(size=(5, 3))
    X = rk4(dyn, X0, 40.0, 1e-2)
    cps = E.critical_points()
    for x in X:
        assert np.min(np.linalg.norm(cps - x, axis=1)) < 1e-4


def test_blowup_detected():
    with pytest.raises(IntegrationBlowup):
        rk4(lambda X: X ** 2, np.array([[10.0]]), 1.0, 1e-2)


def test_dump_cloud(tmp_path, mb_setup):
    from gradex.io import read_csv
    E, dyn, p = mb_setup
    cloud = sample_neighborhood(p, SamplerConfig(N=120), dyn)
    energies = np.array([E(x) for x in cloud.points])
    header, data = read_csv(dump_cloud(tmp_path / "cloud.csv", cloud, energies))
    assert header == ["x1", "x2", "x3", "energy"]
    assert np.array_equal(data[:, :3], cloud.points)
    assert np.array_equal(data[:, 3], energies)


def test_unknown_dynamics():
    with pytest.raises(ValueError):
        make_demo_dynamics("lorenz")

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gradex.errors import FitFailure, SingularMetric
from gradex.fixtures import mb_rightmost_minimum
from gradex.geometry import metric_at
from gradex.potentials import MuellerBrownSphere
from gradex.sampling import SamplerConfig, make_demo_dynamics, sample_neighborhood
from gradex.surrogates import (
    _neg_lml,
    boundary_check,
    build_chart,
    calibrate_threshold,
    gp_fit,
    gp_mean_jac_hess,
    load_chart,
    save_chart,
)


def smooth_data(n=60, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 2))
    Y = np.column_stack([np.sin(2 * X[:, 0]) * X[:, 1], np.cos(X[:, 0] + X[:, 1])])
    return X, Y


@pytest.fixture(scope="module")
def fixed_gp():
    X, Y = smooth_data()
    return gp_fit(X, Y, hyper={"ell": [0.6, 0.7], "s2": 1.0})


@pytest.fixture(scope="module")
def mb_chart():
    E = MuellerBrownSphere()
    p = E.planar_to_sphere(mb_rightmost_minimum())
    cloud = sample_neighborhood(p, SamplerConfig(seed=3), make_demo_dynamics(potential=E))
    energies = np.array([E(x) for x in cloud.points])
    return build_chart(cloud, energies, d=2, chart_id=41, seed=3), cloud, energies


def test_zero_targets_predict_zero():
    X = np.random.default_rng(0).uniform(-1, 1, size=(30, 2))
    gp = gp_fit(X, np.zeros(30))
    for u in ([0.0, 0.0], [3.0, -2.0]):
        assert gp.predict(u)[0] == 0.0
    assert np.all(gp.variance(np.array([[0.0, 0.0], [5.0, 5.0]])) <= gp.s2)


def test_sine_held_out_rmse():
    rng = np.random.default_rng(1)
    x = np.sort(rng.uniform(0, 2 * np.pi, 50))
    y = np.sin(x)
    test = rng.permutation(50)[:10]
    train = np.setdiff1d(np.arange(50), test)
    gp = gp_fit(x[train, None], y[train])
    pred = np.array([gp.predict([v])[0] for v in x[test]])
    assert np.sqrt(np.mean((pred - y[test]) ** 2)) < 1e-2


def test_interpolates_training_points():
    X, Y = smooth_data()
    gp = gp_fit(X, Y)
    for i in range(0, 60, 7):
        err = np.abs(gp.predict(X[i]) - Y[i]) / gp.y_std
        assert np.all(err <= 3 * np.sqrt(gp.eta))


def test_noise_floor_default_and_fitted():
    X, Y = smooth_data()
    assert gp_fit(X, Y).eta == 1e-8
    noisy = Y + 1e-2 * np.random.default_rng(2).standard_normal(Y.shape)
    gp = gp_fit(X, noisy, eta="fit")
    assert 1e-8 <= gp.eta <= 1e-2
    assert gp.eta > 1e-5


def test_fit_rejects_tiny_or_bad_input():
    X, Y = smooth_data(n=9)
    with pytest.raises(ValueError):
        gp_fit(X, Y)
    X, Y = smooth_data()
    with pytest.raises(ValueError):
        gp_fit(X, Y, eta=1e-12)
    with pytest.raises(ValueError):
        gp_fit(X, Y, eta="auto")


def test_fit_failure_on_impossible_hyperparameters():
    X = np.linspace(0, 1, 40)[:, None]
    with pytest.raises(FitFailure):
        gp_fit(X, np.sin(X[:, 0]), hyper={"ell": 1e6, "s2": 1e12}, eta=1e-10)


@pytest.mark.parametrize("fit_eta", [False, True])
def test_lml_gradient(fit_eta):
    X, Y = smooth_data(n=25)
    Ys = (Y - Y.mean(0)) / Y.std(0)
    theta = np.array([np.log(0.5), np.log(0.8), np.log(1.3)] + ([np.log(1e-4)] if fit_eta else []))
    eta = None if fit_eta else 1e-6
    f, g = _neg_lml(theta, X, Ys, "se", eta)
    h = 1e-4
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        fd = (_neg_lml(theta + e, X, Ys, "se", eta)[0] - _neg_lml(theta - e, X, Ys, "se", eta)[0]) / (2 * h)
        assert g[k] == pytest.approx(fd, rel=1e-5, abs=1e-6)


@pytest.mark.parametrize("kernel", ["se", "matern52"])
@given(st.floats(-0.8, 0.8), st.floats(-0.8, 0.8))
def test_mean_derivatives_match_differences(kernel, u1, u2):
    X, Y = smooth_data()
    gp = gp_fit(X, Y, hyper={"ell": [0.6, 0.7], "s2": 1.0}, kernel=kernel)
    u = np.array([u1, u2])
    _, J, H = gp_mean_jac_hess(gp, u)
    h = 1e-4
    Jfd, Hfd = np.empty_like(J), np.empty_like(H)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        mp, Jp, _ = gp_mean_jac_hess(gp, u + e)
        mm, Jm, _ = gp_mean_jac_hess(gp, u - e)
        Jfd[:, k] = (mp - mm) / (2 * h)
        Hfd[:, :, k] = (Jp - Jm) / (2 * h)
    assert np.abs(J - Jfd).max() < 1e-5 * np.abs(J).max()
    assert np.abs(H - Hfd).max() < 1e-3 * np.abs(H).max()
    assert np.array_equal(H, H.transpose(0, 2, 1))


def test_constant_targets_have_zero_derivatives():
    X = np.random.default_rng(0).uniform(-1, 1, size=(30, 2))
    gp = gp_fit(X, np.full(30, 7.5))
    m, J, H = gp_mean_jac_hess(gp, [0.1, 0.2])
    assert m[0] == 7.5
    assert np.all(J == 0) and np.all(H == 0)


def test_fit_is_deterministic():
    X, Y = smooth_data()
    a, b = gp_fit(X, Y, seed=5), gp_fit(X, Y, seed=5)
    assert np.array_equal(a.ell, b.ell) and a.s2 == b.s2
    assert np.array_equal(a.predict([0.1, 0.3]), b.predict([0.1, 0.3]))


# ---------------------------------------------------------------------------
# charts
# ---------------------------------------------------------------------------

def test_chart_center_inside_and_far_outside(mb_chart):
    chart, cloud, _ = mb_chart
    assert boundary_check(chart, chart.phi(cloud.center)) == "inside"
    U = chart.embedding.coords
    radius = np.abs(U).max()
    assert boundary_check(chart, np.array([10 * radius, 0.0])) == "outside"


def test_default_threshold_covers_training_points(mb_chart):
    chart, _, _ = mb_chart
    U = chart.lift_gp.inputs
    inside = np.mean([boundary_check(chart, u) == "inside" for u in U])
    assert inside >= 0.95


def test_threshold_scales_with_percentile(mb_chart):
    chart, _, _ = mb_chart
    gp = chart.lift_gp
    assert calibrate_threshold(gp, 1.0, 25.0) < calibrate_threshold(gp, 1.0, 95.0)
    assert calibrate_threshold(gp, 3.0, 95.0) == pytest.approx(2 * calibrate_threshold(gp, 1.5, 95.0))


def test_chart_round_trip(mb_chart):
    chart, cloud, _ = mb_chart
    err = np.linalg.norm(np.array([chart.psi(u) for u in chart.embedding.coords]) - cloud.points, axis=1)
    assert np.median(err) < 1e-2
    assert np.median(err) < 1e-2 * cloud.sigma


def test_chart_energy_fit(mb_chart):
    chart, _, energies = mb_chart
    pred = np.array([chart.energy(u) for u in chart.embedding.coords])
    assert np.sqrt(np.mean((pred - energies) ** 2)) < 1e-3 * np.ptp(energies)


def test_chart_metric_spd_at_training_points(mb_chart):
    chart, _, _ = mb_chart

    def spd(u):
        try:
            return bool(np.all(np.linalg.eigvalsh(metric_at(chart, u).g) > 0))
        except SingularMetric:
            return False

    assert np.mean([spd(u) for u in chart.embedding.coords]) >= 0.99


def test_chart_ids_increment():
    X = np.random.default_rng(0).normal(size=(120, 3))
    X[:, 2] = 0.1 * X[:, 0] ** 2
    from gradex.manifold_learning import PointCloud
    cloud = PointCloud(X, X.mean(axis=0))
    a = build_chart(cloud, X[:, 0])
    b = build_chart(cloud, X[:, 0])
    assert b.chart_id == a.chart_id + 1


def test_chart_bundle_round_trip(mb_chart, tmp_path):
    chart, _, _ = mb_chart
    save_chart(tmp_path / "c", chart)
    back = load_chart(tmp_path / "c")
    u = np.array([0.2, -0.4])
    assert back.chart_id == chart.chart_id
    assert back.boundary_threshold == chart.boundary_threshold
    for a, b in zip(back.jet(u), chart.jet(u)):
        assert np.array_equal(a, b)
    p = chart.psi(u)
    assert np.array_equal(back.phi(p), chart.phi(p))

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mfbo import gp
from mfbo.gp import KernelParams
from mfbo.mfgp import RHO_BOUNDS, FidelityDataset, fit_mfgp, predict_high, predict_low
from mfbo.objectives import forrester_high, forrester_low
from mfbo.sampling import nested_lhs, unit_cube


def forrester_data(n_low, n_high, seed):
    d = nested_lhs(unit_cube(1), n_low, n_high, seed)
    xl, xh = d.unit.ravel(), d.unit_high.ravel()
    return FidelityDataset(xl[:, None], forrester_low(xl), xh[:, None], forrester_high(xh))


@pytest.fixture(scope="module")
def post():
    return fit_mfgp(forrester_data(8, 3, 0), restarts=3, seed=0)


def test_dataset_validation():
    with pytest.raises(ValueError):
        FidelityDataset(np.zeros((2, 1)), np.zeros(3), np.zeros((1, 1)), np.zeros(1))
    with pytest.raises(ValueError):
        FidelityDataset(np.zeros((2, 1)), np.zeros(2), np.zeros((0, 1)), np.zeros(0))
    with pytest.raises(ValueError):
        FidelityDataset(np.zeros((2, 1)), np.zeros(2), np.zeros((1, 2)), np.zeros(1))


def test_dataset_add_is_functional():
    data = forrester_data(4, 1, 0)
    new = data.add([0.3], 1.0, "high")
    assert data.n_high == 1 and new.n_high == 2 and new.n_low == 4
    with pytest.raises(ValueError):
        data.add([0.3], 1.0, "medium")


def test_zero_discrepancy_with_fixed_rho():
    data = forrester_data(8, 3, 1)
    low = gp.fit(data.X_low, data.y_low, restarts=3, seed=0)
    rho0 = 1.7
    y_high = rho0 * low.predict(data.X_high)[0]
    post = fit_mfgp(FidelityDataset(data.X_low, data.y_low, data.X_high, y_high),
                    restarts=3, seed=0, rho=rho0, init_low=low.params)
    np.testing.assert_allclose(post.gp_delta.y, 0.0, atol=1e-9)
    xq = np.linspace(0, 1, 25)[:, None]
    np.testing.assert_allclose(post.predict_high(xq)[0], rho0 * post.predict_low(xq)[0], atol=1e-8)


def test_rho_zero_decouples():
    data = forrester_data(8, 3, 2)
    post = fit_mfgp(data, restarts=1, seed=0, rho=0.0)
    ref = gp.fit(data.X_high, data.y_high, restarts=1, seed=0)
    xq = np.linspace(0, 1, 25)[:, None]
    np.testing.assert_allclose(post.predict_high(xq)[0], ref.predict(xq)[0], atol=1e-8)
    # bit-identical given identical hyperparameters
    same = gp.condition(data.X_high, data.y_high, post.gp_delta.params,
                        post.gp_delta.y_mean, post.gp_delta.y_scale)
    assert np.array_equal(post.predict_high(xq)[0], same.predict(xq)[0])
    assert np.array_equal(post.predict_high(xq)[1], same.predict(xq)[1])


def test_rho_recovers_forrester_scaling():
    # dense-grid least-squares slope of f_high on f_low is 0.80096; accepted band [0.8, 1.2]
    g = np.linspace(0, 1, 1001)
    slope = np.linalg.lstsq(np.c_[forrester_low(g), np.ones_like(g)], forrester_high(g), rcond=None)[0][0]
    assert slope == pytest.approx(0.8009595915068706, abs=1e-10)
    rhos = [fit_mfgp(forrester_data(8, 3, s), restarts=4, seed=s).rho for s in range(20)]
    assert 0.8 <= np.median(rhos) <= 1.2, np.round(rhos, 2)


def test_rho_within_bounds(post):
    assert RHO_BOUNDS[0] <= post.rho <= RHO_BOUNDS[1]
    assert np.isfinite(post.rho)


def test_predict_low_interpolates(post):
    m, v = predict_low(post, post.gp_low.X)
    np.testing.assert_allclose(m, post.gp_low.y, atol=1e-6)
    assert np.all(v < 1e-6 * post.gp_low.y_scale ** 2)


def test_predict_low_far_field(post):
    _, v = predict_low(post, np.array([[1e4]]))
    sf2 = post.gp_low.params.signal_variance * post.gp_low.y_scale ** 2
    assert v[0] == pytest.approx(sf2, rel=1e-6)


def test_predict_low_dense_oracle():
    rng = np.random.default_rng(3)
    X = rng.random((3, 1))
    data = FidelityDataset(X, np.sin(5 * X[:, 0]), X[:1], np.array([0.3]))
    post = fit_mfgp(data, restarts=2, seed=0)
    low = post.gp_low
    p = low.params
    K = gp.kernel_matrix(X, X, p) + p.jitter * np.eye(3)
    xq = rng.random((5, 1))
    ks = gp.kernel_matrix(xq, X, p)
    Kinv = np.linalg.inv(K)
    ys = (low.y - low.y_mean) / low.y_scale
    mean = low.y_mean + low.y_scale * ks @ Kinv @ ys
    var = low.y_scale ** 2 * (p.signal_variance - np.einsum("ij,jk,ik->i", ks, Kinv, ks))
    m, v = predict_low(post, xq)
    np.testing.assert_allclose(m, mean, atol=1e-8)
    np.testing.assert_allclose(v, var, atol=1e-8)


def test_nested_high_interpolation(post):
    m, v = predict_high(post, post.gp_delta.X)
    np.testing.assert_allclose(m, post.gp_delta.y + post.rho * post.low_at_high, atol=1e-6)
    lo, de = post.gp_low, post.gp_delta
    bound = (post.rho ** 2 * lo.params.jitter * lo.y_scale ** 2 + de.params.jitter * de.y_scale ** 2)
    assert np.all(v <= bound * (1 + 1e-6) + 1e-12)


def test_nested_high_reproduces_observations(post):
    data = forrester_data(8, 3, 0)
    m, _ = predict_high(post, data.X_high)
    np.testing.assert_allclose(m, data.y_high, atol=1e-6)


def test_variance_decomposition(post):
    xq = np.linspace(0, 1, 50)[:, None]
    _, v_low = predict_low(post, xq)
    _, v_d = post.gp_delta.predict(xq)
    _, v_high = predict_high(post, xq)
    assert np.array_equal(v_high, post.rho ** 2 * v_low + v_d)
    a, b = post.variance_terms(xq)
    assert np.array_equal(a + b, v_high)


def test_predict_both_consistent(post):
    xq = np.linspace(0, 1, 9)[:, None]
    ml, vl, mh, vh = post.predict_both(xq)
    np.testing.assert_array_equal(ml, post.predict_low(xq)[0])
    np.testing.assert_array_equal(vh, post.predict_high(xq)[1])


@given(seed=st.integers(0, 1000), q=st.floats(0, 1))
def test_more_low_points_never_raise_low_term(seed, q):
    rng = np.random.default_rng(seed)
    X = rng.random((6, 1))
    y = forrester_low(X[:, 0])
    params = KernelParams(1.0, [0.2], 1e-10)
    xq = np.array([[q]])
    v_few = gp.condition(X[:4], y[:4], params).predict(xq)[1]
    v_more = gp.condition(X, y, params).predict(xq)[1]
    rho = 1.3
    assert rho ** 2 * v_more <= rho ** 2 * v_few + 1e-12


def test_non_nested_imputation_leaves_data_and_mean():
    data = forrester_data(6, 2, 4)
    extra = data.add(np.array([0.4321]), float(forrester_high(0.4321)), "high")
    assert not extra.nested_mask()[-1]
    post = fit_mfgp(extra, restarts=2, seed=0)
    # low dataset untouched
    assert np.array_equal(extra.X_low, data.X_low) and np.array_equal(extra.y_low, data.y_low)
    # imputation conditions the low GP on its own mean: mean unchanged, variance gone
    plain = gp.condition(extra.X_low, extra.y_low, post.gp_low.params,
                         post.gp_low.y_mean, post.gp_low.y_scale)
    xq = np.linspace(0, 1, 30)[:, None]
    np.testing.assert_allclose(post.predict_low(xq)[0], plain.predict(xq)[0], atol=1e-6)
    assert post.predict_low(np.array([[0.4321]]))[1][0] <= 1e-8 * post.gp_low.y_scale ** 2
    assert post.gp_low.diagnostics["imputed"] == 1


def test_single_high_point_fits():
    data = forrester_data(4, 1, 0)
    post = fit_mfgp(data, restarts=2, seed=0)
    assert np.isfinite(post.rho)
    assert np.all(np.isfinite(post.predict_high(np.linspace(0, 1, 5)[:, None])[1]))

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from oracles import gls_line, joint_gaussian, kappa_loglik, random_model
from surveybreaks import (DiffuseUnresolvedError, NonFiniteObservationError, SingularInnovationError,
                          StateSpaceModel, diffuse_loglik, filter_and_smooth, fixed_interval_smoother,
                          kalman_filter)
from surveybreaks.statespace import LoglikEvaluator, StateSpaceError, simulate


def smooth_trend(n, obs_var=1.0, slope_var=1.0):
    Z = np.zeros((n, 1, 2))
    Z[:, 0, 0] = 1.0
    return StateSpaceModel(design=Z, transition=[[1.0, 1.0], [0.0, 1.0]],
                           obs_var_scale=np.full((n, 1), obs_var), obs_var_param=np.full((n, 1), -1),
                           state_var_param=[-1, -1], state_cov=np.diag([0.0, slope_var]))


def close(a, b, rel=1e-6):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.max(np.abs(a - b)) <= rel * max(1.0, np.max(np.abs(b)))


def test_local_level_two_points_gives_mean():
    Z = np.ones((2, 1, 1))
    model = StateSpaceModel(design=Z, transition=[[1.0]], obs_var_scale=np.ones((2, 1)),
                            obs_var_param=np.full((2, 1), -1), state_var_param=[-1])
    out = kalman_filter(model, [1.0, 3.0])
    assert out.filtered_mean[1, 0] == pytest.approx(2.0, abs=1e-12)
    assert out.diffuse_periods == 1


def test_zero_slope_noise_gives_gls_line():
    y = np.array([2.0, 2.9, 4.4, 4.8, 6.3])
    h = np.array([1.0, 0.5, 2.0, 1.0, 0.25])
    Z = np.zeros((5, 1, 2))
    Z[:, 0, 0] = 1.0
    model = StateSpaceModel(design=Z, transition=[[1.0, 1.0], [0.0, 1.0]], obs_var_scale=h[:, None],
                            obs_var_param=np.full((5, 1), -1), state_var_param=[-1, -1])
    out = filter_and_smooth(model, y)
    fitted, coef = gls_line(y, 1 / h)
    np.testing.assert_allclose(out.smoothed_mean[:, 0], fitted, atol=1e-10)
    np.testing.assert_allclose(out.smoothed_mean[:, 1], coef[1], atol=1e-10)
    assert out.filtered_mean[-1, 0] == pytest.approx(fitted[-1], abs=1e-10)


def test_smooth_trend_four_points_matches_joint_gaussian():
    model = smooth_trend(4)
    y = np.array([0.0, 1.0, 0.0, 1.0])
    out = filter_and_smooth(model, y)
    mu, cov, ll = joint_gaussian(model, y)
    assert out.loglik == pytest.approx(ll, abs=1e-6)
    np.testing.assert_allclose(out.smoothed_mean, mu, atol=1e-6)
    np.testing.assert_allclose(out.smoothed_cov, cov, atol=1e-6)
    assert diffuse_loglik(model, y) == out.loglik


@pytest.mark.parametrize("kappa", [1e6, 1e8, 1e10])
def test_large_kappa_limit(kappa):
    model = smooth_trend(4)
    y = np.array([0.0, 1.0, 0.0, 1.0])
    assert kappa_loglik(model, y, (), kappa) == pytest.approx(diffuse_loglik(model, y), abs=1e-4)


def test_no_diffuse_states_is_plain_gaussian_density():
    rng = np.random.default_rng(3)
    n, m = 5, 2
    Z = rng.normal(size=(n, 2, m))
    P0 = np.array([[2.0, 0.3], [0.3, 1.0]])
    model = StateSpaceModel(design=Z, transition=[[0.9, 0.1], [0.0, 0.7]], obs_var_scale=np.full((n, 2), 0.5),
                            obs_var_param=np.full((n, 2), -1), state_var_param=[-1, -1],
                            state_cov=np.diag([0.4, 0.2]), diffuse_states=[False, False],
                            initial_mean=[1.0, -1.0], initial_cov=P0)
    y = rng.normal(size=(n, 2))
    _, _, ll = joint_gaussian(model, y)
    assert diffuse_loglik(model, y) == pytest.approx(ll, abs=1e-10)


def test_scaling_identity():
    c = 7.3
    rng = np.random.default_rng(5)
    y = rng.normal(size=8).cumsum()
    a = filter_and_smooth(smooth_trend(8, 0.8, 0.3), y)
    b = filter_and_smooth(smooth_trend(8, 0.8 * c, 0.3 * c), y * np.sqrt(c))
    n_eff = y.size - a.n_diffuse_obs
    assert b.loglik - a.loglik == pytest.approx(-0.5 * n_eff * np.log(c), abs=1e-9)
    d = a.diffuse_periods
    za = a.innovations[d:, 0] / np.sqrt(a.innovation_cov[d:, 0, 0])
    zb = b.innovations[d:, 0] / np.sqrt(b.innovation_cov[d:, 0, 0])
    np.testing.assert_allclose(za, zb, atol=1e-10)


def test_final_smoothed_equals_filtered():
    rng = np.random.default_rng(11)
    for _ in range(10):
        model, y, th = random_model(rng)
        try:
            out = filter_and_smooth(model, y, th)
        except StateSpaceError:
            continue
        assert np.array_equal(out.smoothed_mean[-1], out.filtered_mean[-1])
        assert np.array_equal(out.smoothed_cov[-1], out.filtered_cov[-1])


def test_constant_coefficient_state_smooths_flat():
    n = 9
    Z = np.zeros((n, 1, 3))
    Z[:, 0, 0] = 1.0
    Z[5:, 0, 2] = 1.0
    T = np.eye(3)
    T[0, 1] = 1.0
    model = StateSpaceModel(design=Z, transition=T, obs_var_scale=np.ones((n, 1)),
                            obs_var_param=np.full((n, 1), -1), state_var_param=[-1, 0, -1],
                            param_names=("slope",))
    y = np.random.default_rng(2).normal(size=n).cumsum()
    out = filter_and_smooth(model, y, [np.log(0.2)])
    b = out.smoothed_mean[:, 2]
    assert np.max(np.abs(b - b[0])) < 1e-10


@given(st.integers(0, 2 ** 32 - 1))
def test_oracle_equivalence_random_models(seed):
    model, y, th = random_model(np.random.default_rng(seed))
    try:
        out = filter_and_smooth(model, y, th)
    except StateSpaceError:
        assume(False)
    mu, cov, ll = joint_gaussian(model, y, th)
    assert close(out.smoothed_mean, mu)
    assert close(out.smoothed_cov, cov)
    assert close(out.loglik, ll)


@given(st.integers(0, 2 ** 32 - 1))
def test_output_covariances_psd_and_smoothing_shrinks(seed):
    model, y, th = random_model(np.random.default_rng(seed))
    try:
        out = filter_and_smooth(model, y, th)
    except StateSpaceError:
        assume(False)
    d = out.diffuse_periods
    for t in range(d, model.n_periods):
        scale = max(1.0, np.abs(out.filtered_cov[t]).max())
        assert np.linalg.eigvalsh(out.filtered_cov[t]).min() >= -1e-8 * scale
        assert np.linalg.eigvalsh(out.smoothed_cov[t]).min() >= -1e-8 * scale
        assert np.linalg.eigvalsh(out.filtered_cov[t] - out.smoothed_cov[t]).min() >= -1e-8 * scale


def test_innovations_serially_uncorrelated():
    n, reps = 10, 10000
    Z = np.zeros((n, 1, 2))
    Z[:, 0, 0] = 1.0
    model = StateSpaceModel(design=Z, transition=[[1.0, 1.0], [0.0, 1.0]], obs_var_scale=np.full((n, 1), 1.0),
                            obs_var_param=np.full((n, 1), -1), state_var_param=[-1, -1],
                            state_cov=np.diag([0.0, 0.25]), diffuse_states=[False, False],
                            initial_mean=[0.0, 0.0], initial_cov=np.diag([4.0, 1.0]))
    rng = np.random.default_rng(99)
    chol = np.linalg.cholesky(np.array(model.initial_cov))
    num = den = 0.0
    for _ in range(reps):
        a0 = model.initial_mean + chol @ rng.standard_normal(2)
        _, y = simulate(model, (), a0, rng)
        out = kalman_filter(model, y)
        e = out.innovations[:, 0] / np.sqrt(out.innovation_cov[:, 0, 0])
        num += e[1:] @ e[:-1]
        den += e @ e
    assert abs(num / den) < 3 / np.sqrt(reps * n)


def test_missing_element_matches_dropping_it():
    rng = np.random.default_rng(4)
    model = smooth_trend(6)
    y = rng.normal(size=6).cumsum()
    y[3] = np.nan
    out = filter_and_smooth(model, y)
    mu, cov, ll = joint_gaussian(model, y)
    assert out.loglik == pytest.approx(ll, abs=1e-8)
    np.testing.assert_allclose(out.smoothed_mean, mu, atol=1e-8)


def test_infinite_observation_reports_period():
    y = np.array([0.0, 1.0, np.inf, 1.0])
    with pytest.raises(NonFiniteObservationError) as exc:
        kalman_filter(smooth_trend(4), y)
    assert exc.value.period == 2


def test_singular_innovation_reports_period():
    Z = np.ones((3, 1, 1))
    model = StateSpaceModel(design=Z, transition=[[1.0]], obs_var_scale=np.zeros((3, 1)),
                            obs_var_param=np.full((3, 1), -1), state_var_param=[-1],
                            diffuse_states=[False], initial_mean=[1.0], initial_cov=[[0.0]])
    with pytest.raises(SingularInnovationError) as exc:
        kalman_filter(model, [1.0, 1.0, 1.0])
    assert exc.value.period == 0
    assert LoglikEvaluator(model, [1.0, 1.0, 1.0])(()) == -np.inf


def test_unresolved_diffuse_prior():
    with pytest.raises(DiffuseUnresolvedError):
        kalman_filter(smooth_trend(1), [1.0])


def test_smoother_rejects_foreign_filter_output():
    out = kalman_filter(smooth_trend(4), [0.0, 1.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        fixed_interval_smoother(smooth_trend(5), out)


def test_model_validation():
    with pytest.raises(ValueError):
        StateSpaceModel(design=np.ones((3, 1, 2)), transition=np.eye(3), obs_var_scale=np.ones((3, 1)),
                        obs_var_param=np.full((3, 1), -1), state_var_param=[-1, -1])
    with pytest.raises(ValueError):
        StateSpaceModel(design=np.ones((3, 1, 1)), transition=[[1.0]], obs_var_scale=np.ones((3, 1)),
                        obs_var_param=np.full((3, 1), -1), state_var_param=[-1], state_cov=[[-1.0]])
    with pytest.raises(ValueError):
        smooth_trend(4).obs_variances([0.0])

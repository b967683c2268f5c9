import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_panel
from surveybreaks import (CompositionalPanel, InterventionSpec, ModelVariant, build_domain_consistent,
                          build_intervention_regressor, build_m1, build_m2, build_m3, build_m4, build_model,
                          build_seasonal_intervention, diffuse_loglik, domain_observations,
                          filter_and_smooth, fit_mle, transform_panel)
from surveybreaks.models import dummy_seasonal_transition, zero_sum_transition
from surveybreaks.simulation import fix_parameters


def test_level_regressor():
    np.testing.assert_array_equal(build_intervention_regressor("level", 9, 11), [0] * 8 + [1] * 3)


def test_slope_regressors():
    np.testing.assert_array_equal(build_intervention_regressor("slope", 9, 11, "after"), [0] * 8 + [1, 2, 3])
    np.testing.assert_array_equal(build_intervention_regressor("slope", 9, 11, "before"),
                                  [-8, -7, -6, -5, -4, -3, -2, -1, 0, 0, 0])


@pytest.mark.parametrize("TR", [1, 12, 0])
def test_regressor_rejects_bad_redesign(TR):
    with pytest.raises(ValueError):
        build_intervention_regressor("level", TR, 11)


def test_m1_structure(rng):
    panel = random_panel(rng)
    model = build_m1(panel)
    assert model.num_states == 12 and model.n_params == 5
    block = np.array([[1.0, 1.0], [0.0, 1.0]])
    for k in range(4):
        np.testing.assert_array_equal(model.transition[2 * k:2 * k + 2, 2 * k:2 * k + 2], block)
    np.testing.assert_array_equal(model.transition[8:, 8:], np.eye(4))
    assert not model.design[:8, :, 8:].any()
    np.testing.assert_array_equal(model.design[8:, :, 8:], np.broadcast_to(np.eye(4), (3, 4, 4)))


def test_zero_sum_transition():
    np.testing.assert_array_equal(zero_sum_transition(3), [[1, 0, 0], [0, 1, 0], [-1, -1, 0]])


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=8))
def test_zero_sum_transition_output_sums_to_zero(b):
    b = np.array(b)
    out = zero_sum_transition(b.size) @ b
    assert out.sum() == pytest.approx(0.0, abs=1e-9 * max(1.0, np.abs(b).max()))


def test_m3_m4_structure(rng):
    panel = random_panel(rng)
    m3 = build_m3(transform_panel(panel, "alr"))
    assert m3.num_states == 9 and m3.n_params == 4
    np.testing.assert_array_equal(m3.transition[6:, 6:], np.eye(3))
    p5 = random_panel(rng, K=5)
    m4 = build_m4(transform_panel(p5, "clr"))
    assert m4.num_states == 15 and m4.n_params == 6
    np.testing.assert_array_equal(m4.transition[10:, 10:], zero_sum_transition(5))
    with pytest.raises(ValueError):
        build_m3(transform_panel(panel, "clr"))


def test_parameter_counts(rng):
    panel = random_panel(rng)
    K = panel.n_categories
    for name, count in [("M1", K + 1), ("M2", K + 1), ("M3", K), ("M4", K + 1)]:
        model, _ = build_model(panel, ModelVariant(name))
        assert model.n_params == count
    model, _ = build_model(panel, ModelVariant("M2", variance_break=True))
    assert model.n_params == K + 2
    model, _ = build_model(panel, ModelVariant("M2", common_obs_variance=False))
    assert model.n_params == 2 * K


def test_builders_are_pure(rng):
    panel = random_panel(rng)
    for name in ("M1", "M2", "M3", "M4"):
        a, ya = build_model(panel, ModelVariant(name), InterventionSpec("slope"))
        b, yb = build_model(panel, ModelVariant(name), InterventionSpec("slope"))
        for f in ("design", "transition", "obs_var_scale", "obs_var_param", "state_var_param"):
            assert np.array_equal(getattr(a, f), getattr(b, f))
        assert np.array_equal(ya, yb)


@pytest.mark.parametrize("name", ["M2", "M4"])
def test_restricted_coefficients_sum_to_zero_at_every_t(name, rng):
    panel = random_panel(rng, shift=(2.0, -1.0, -0.5, -0.5))
    model, y = build_model(panel, ModelVariant(name))
    fit = fit_mle(model, y, n_starts=1)
    idx = model.state_index("beta[")
    assert np.abs(fit.output.smoothed_mean[:, idx].sum(axis=1)).max() < 1e-8
    assert np.abs(fit.output.filtered_mean[:, idx].sum(axis=1)).max() < 1e-8


def test_m1_and_m2_agree_on_noiseless_zero_sum_shift():
    T, TR = 11, 9
    t = np.arange(T)[:, None]
    y = np.array([30.0, 20.0, 40.0, 10.0]) + t * np.array([0.2, -0.1, -0.3, 0.2])
    y[TR - 1:] += np.array([2.0, -0.5, -1.0, -0.5])
    panel = CompositionalPanel((), y, np.full(T, 1000.0), TR)
    est = []
    for build in (build_m1, build_m2):
        model = fix_parameters(build(panel), [1e-4] * 4 + [1e-6])
        out = filter_and_smooth(model, panel.percent())
        est.append(out.smoothed_mean[-1, model.state_index("beta[")])
    np.testing.assert_allclose(est[0], est[1], atol=1e-6)
    np.testing.assert_allclose(est[1], [2.0, -0.5, -1.0, -0.5], atol=1e-6)


def test_dummy_seasonal_companion():
    Ts = dummy_seasonal_transition(4)
    np.testing.assert_array_equal(Ts, [[-1, -1, -1], [1, 0, 0], [0, 1, 0]])


def _seasonal_panel(rng, T=24, K=3, TR=17, s=4):
    base = random_panel(rng, T=T, K=K, TR=TR, n=20000)
    return base, s


def test_seasonal_model_structure(rng):
    panel, s = _seasonal_panel(rng)
    model = build_seasonal_intervention(panel, s)
    K = panel.n_categories
    assert len(model.state_index("season[")) == K * (s - 1)
    iv = model.state_index("season_beta[")
    assert len(iv) == K * (s - 1)
    # intervention patterns sum to zero over categories after any number of steps
    a = rng.normal(size=model.num_states)
    for _ in range(7):
        a = model.transition @ a
        blocks = a[iv].reshape(K, s - 1)
        assert np.abs(blocks.sum(axis=0)).max() < 1e-10
    assert not model.design[:panel.redesign_period - 1, :, iv].any()


def test_seasonal_model_ignores_fixed_seasonal_pattern(rng):
    panel, s = _seasonal_panel(rng)
    T, K = panel.proportions.shape
    w = np.array([1.0, -0.4, 0.3, -0.9])
    c = np.array([1.5, -0.5, -1.0])
    pattern = np.outer(w[np.arange(T) % s], c)
    seasonal = CompositionalPanel(panel.periods, panel.proportions + pattern, panel.sample_sizes,
                                  panel.redesign_period)
    model = build_seasonal_intervention(panel, s)
    variances = [0.01] * K + [0.0] * K + [400.0]
    ll_plain = diffuse_loglik(fix_parameters(model, variances), panel.percent())
    model_s = build_seasonal_intervention(seasonal, s)
    ll_seas = diffuse_loglik(fix_parameters(model_s, variances), seasonal.percent())
    assert ll_seas == pytest.approx(ll_plain, abs=1e-8)


def test_seasonal_too_short(rng):
    panel = random_panel(rng, T=7, TR=5)
    with pytest.raises(ValueError, match="too short"):
        build_seasonal_intervention(panel, 4)


def _domain_panel(rng, K=3, f=(0.5, 0.5)):
    doms = tuple(random_panel(rng, K=K) for _ in f)
    total = sum(fh * d.proportions for fh, d in zip(f, doms))
    total = total / total.sum(axis=1, keepdims=True) * 100
    return CompositionalPanel(doms[0].periods, total, np.full(11, 8000.0), 9, domains=doms, shares=f)


def test_domain_transition_arithmetic(rng):
    panel = _domain_panel(rng)
    model = build_domain_consistent(panel)
    K, p = 3, 9
    coef = model.transition[2 * p:, 2 * p:]
    a, b, c, d = 1.3, -0.4, 0.7, 2.1
    beta = np.concatenate([np.zeros(K), [a, b, 9.9], [c, d, -7.7]])
    out = coef @ beta
    np.testing.assert_allclose(out[:K], 0.5 * np.array([a, b, -a - b]) + 0.5 * np.array([c, d, -c - d]))
    np.testing.assert_array_equal(coef @ np.zeros(p), np.zeros(p))


def test_domain_model_consistency_after_fit(rng):
    panel = _domain_panel(rng, f=(0.4, 0.6))
    model = build_domain_consistent(panel)
    fit = fit_mle(model, domain_observations(panel), n_starts=1)
    b = fit.output.smoothed_mean[:, model.state_index("beta[")]
    tot, d1, d2 = b[:, :3], b[:, 3:6], b[:, 6:]
    assert np.abs(tot - (0.4 * d1 + 0.6 * d2)).max() < 1e-8
    assert np.abs(d1.sum(axis=1)).max() < 1e-8


def test_domain_model_errors(rng):
    panel = _domain_panel(rng)
    with pytest.raises(ValueError, match="Lagrange"):
        build_domain_consistent(panel, max_states=10)
    with pytest.raises(ValueError):
        build_domain_consistent(random_panel(rng))
    with pytest.raises(ValueError):
        CompositionalPanel(panel.periods, panel.proportions, panel.sample_sizes, 9,
                           domains=panel.domains, shares=(0.5, 0.6))


def test_panel_validation():
    y = np.array([[50.0, 50.0], [40.0, 60.0], [45.0, 55.0]])
    with pytest.raises(ValueError, match="sums to"):
        CompositionalPanel((), y + [[1, 0], [0, 0], [0, 0]], [10, 10, 10], 2)
    with pytest.raises(ValueError, match="redesign"):
        CompositionalPanel((), y, [10, 10, 10], 1)
    with pytest.raises(ValueError):
        CompositionalPanel((), y, [10, 0, 10], 2)
    with pytest.raises(ValueError):
        ModelVariant("M2", reference_category=1)

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from surveybreaks import (CompositionalPanel, ZeroProportionError, alr_forward, alr_inverse, clr_forward,
                          clr_inverse, transform_panel)


def simplex_points(n=1000, seed=0):
    rng = np.random.default_rng(seed)
    K = rng.integers(2, 8, size=n)
    return [rng.dirichlet(np.full(k, rng.uniform(0.3, 5.0))) for k in K]


def test_alr_examples():
    np.testing.assert_array_equal(alr_forward([0.25] * 4, 3), np.zeros(3))
    np.testing.assert_allclose(alr_forward([0.5, 0.3, 0.2], 2), [0.916290731874155, 0.405465108108164],
                               atol=1e-12)
    np.testing.assert_allclose(alr_inverse(np.zeros(3)), [0.25] * 4, atol=1e-15)
    np.testing.assert_allclose(alr_inverse([np.log(2.5), np.log(1.5)]), [0.5, 0.3, 0.2], atol=1e-15)


def test_alr_reference_position():
    y = np.array([0.1, 0.2, 0.3, 0.4])
    x = alr_forward(y, 1)
    np.testing.assert_allclose(x, np.log([0.5, 1.5, 2.0]), atol=1e-15)
    np.testing.assert_allclose(alr_inverse(x, 1), y, atol=1e-15)


def test_alr_inverse_large_input_is_stable():
    y = alr_inverse([700.0, 0.0, -3.0])
    assert np.all(np.isfinite(y))
    assert y[0] == pytest.approx(1.0)
    assert y.sum() == pytest.approx(1.0, abs=1e-15)


def test_clr_examples():
    np.testing.assert_array_equal(clr_forward([0.2] * 5), np.zeros(5))
    np.testing.assert_allclose(clr_forward([0.5, 0.25, 0.25]), [0.462098120373297, -0.231049060186648,
                                                                -0.231049060186648], atol=1e-12)
    np.testing.assert_allclose(clr_inverse(np.zeros(4)), [0.25] * 4, atol=1e-15)
    np.testing.assert_allclose(clr_inverse(clr_forward([0.5, 0.25, 0.25])), [0.5, 0.25, 0.25], atol=1e-12)


def test_round_trips_on_1000_points():
    for i, y in enumerate(simplex_points()):
        ref = i % y.size
        np.testing.assert_allclose(alr_inverse(alr_forward(y, ref), ref), y, rtol=0, atol=1e-12)
        z = clr_forward(y)
        assert abs(z.sum()) < 1e-12
        np.testing.assert_allclose(clr_inverse(z), y, rtol=0, atol=1e-12)


@given(arrays(float, st.integers(2, 8), elements=st.floats(-15, 15)))
def test_inverses_land_inside_simplex(x):
    for y in (clr_inverse(x), alr_inverse(x)):
        assert abs(y.sum() - 1.0) <= 4e-16 * y.size
        assert np.all(y > 0) and np.all(y < 1)


@given(arrays(float, st.integers(2, 8), elements=st.floats(-20, 20)), st.floats(-50, 50))
def test_clr_inverse_shift_invariance(z, c):
    np.testing.assert_allclose(clr_inverse(z + c), clr_inverse(z), atol=1e-15)


@given(st.integers(0, 2 ** 32 - 1))
def test_clr_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    y = rng.dirichlet(np.ones(int(rng.integers(2, 7))))
    perm = rng.permutation(y.size)
    np.testing.assert_allclose(clr_forward(y[perm]), clr_forward(y)[perm], atol=1e-14)


def test_zero_proportion_is_an_error():
    with pytest.raises(ZeroProportionError) as exc:
        alr_forward(np.array([[0.5, 0.5, 0.0], [0.2, 0.0, 0.8]]))
    assert (exc.value.period, exc.value.category) == (0, 2)
    with pytest.raises(ZeroProportionError):
        clr_forward([0.0, 1.0])


def test_transform_panel_shapes():
    y = np.array([[30.0, 20.0, 50.0], [25.0, 25.0, 50.0], [40.0, 10.0, 50.0]])
    panel = CompositionalPanel((), y, [100, 100, 100], 2)
    a = transform_panel(panel, "alr")
    c = transform_panel(panel, "clr")
    assert a.values.shape == (3, 2) and a.reference == 2
    assert c.values.shape == (3, 3)
    np.testing.assert_allclose(c.values.sum(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(a.inverse() * 100, y, atol=1e-12)
    np.testing.assert_allclose(c.inverse() * 100, y, atol=1e-12)

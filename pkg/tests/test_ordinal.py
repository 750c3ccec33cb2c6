
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from multimarker.ordinal import (
    CauchitModel,
    OrdinalDataError,
    _negloglik_and_grad,
    cauchit_cumulative,
    component_weights,
    fit_ordinal_cauchit_mle,
    predict_level,
    weights_matrix,
)


def test_cumulative_values():
    assert cauchit_cumulative(0.0, [1.0], [0.0]) == pytest.approx(0.5, abs=1e-15)
    assert cauchit_cumulative(2.0, [0.0], [1.0]) == pytest.approx(0.75, abs=1e-15)
    assert cauchit_cumulative(1e300, [0.0], [0.0]) == pytest.approx(1.0)
    assert cauchit_cumulative(-1e300, [0.0], [0.0]) == pytest.approx(0.0)


def test_cumulative_dimension_mismatch():
    with pytest.raises(ValueError):
        cauchit_cumulative(0.0, [1.0, 2.0], [1.0])


def test_weights_example(oracles):
    w = component_weights(CauchitModel([-1.0, 1.0], [0.0]), [3.0], D=3)
    assert np.allclose(w, oracles["weights_m1_1"], atol=1e-14)
    assert w[0] == pytest.approx(w[2], abs=1e-15)


def test_non_increasing_cutpoints_rejected():
    with pytest.raises(ValueError):
        CauchitModel([1.0, 1.0], [0.0])


@settings(max_examples=100, deadline=None)
@given(
    g=st.lists(st.floats(-20, 20), min_size=1, max_size=5, unique=True),
    eta=st.lists(st.floats(-3, 3), min_size=2, max_size=2),
    y=st.lists(st.floats(0, 10), min_size=2, max_size=2),
)
def test_weights_simplex_and_symmetry(g, eta, y):
    gamma = np.sort(np.asarray(g))
    if np.any(np.diff(gamma) <= 1e-9):
        return
    w = weights_matrix(gamma, np.asarray(eta), np.asarray([y]))[0]
    assert np.all(w >= 0) and abs(w.sum() - 1) < 1e-12
    for gd in gamma:
        s = cauchit_cumulative(gd, eta, y) + cauchit_cumulative(-gd, -np.asarray(eta), y)
        assert abs(s - 1) < 1e-12


def test_cumulative_monotone_in_cutpoint():
    vals = [cauchit_cumulative(g, [0.3], [2.0]) for g in np.linspace(-10, 10, 50)]
    assert np.all(np.diff(vals) > 0)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(40, 3))
    labels = rng.integers(0, 4, 40)
    theta = np.array([-0.5, 0.2, -0.1, 0.3, -0.4, 0.8])
    _, g = _negloglik_and_grad(theta, Z, labels, 3)
    h = 1e-6
    fd = np.array(
        [
            (_negloglik_and_grad(theta + h * e, Z, labels, 3)[0] - _negloglik_and_grad(theta - h * e, Z, labels, 3)[0]) / (2 * h)
            for e in np.eye(theta.size)
        ]
    )
    assert np.allclose(g, fd, atol=1e-6)


def test_binary_reduces_to_direct_mle():
    rng = np.random.default_rng(1)
    y = rng.normal(2.0, 1.5, 200)
    p = 0.5 + np.arctan(0.5 * (-1.0 + 0.8 * y)) / np.pi  # P(level 0)
    labels = (rng.uniform(size=200) > p).astype(int)

    def nll(v):
        F = 0.5 + np.arctan(0.5 * (v[0] + v[1] * y)) / np.pi
        F = np.clip(F, 1e-300, 1 - 1e-16)
        return -np.sum(np.where(labels == 0, np.log(F), np.log1p(-F)))

    ref = minimize(nll, [0.0, 0.0], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000})
    fit = fit_ordinal_cauchit_mle(labels, y[:, None])
    assert fit.converged
    assert np.allclose([fit.gamma[0], fit.eta[0]], ref.x, atol=1e-4)


def test_separable_data_classified_perfectly():
    y = np.linspace(0, 10, 60)
    labels = (y > 5).astype(int)
    fit = fit_ordinal_cauchit_mle(labels, y[:, None])
    assert np.all(predict_level(fit, y[:, None]) == labels)
    assert np.all(np.isfinite(fit.eta))


def test_null_data_small_slopes():
    rng = np.random.default_rng(2)
    Y = rng.normal(size=(300, 2))
    labels = rng.integers(0, 3, 300)
    fit = fit_ordinal_cauchit_mle(labels, Y)
    assert np.all(np.abs(fit.eta) < 0.5)
    assert np.all(np.diff(fit.gamma) > 0)


def test_empty_class_rejected():
    with pytest.raises(OrdinalDataError, match=r"\[1\]"):
        fit_ordinal_cauchit_mle(np.array([0, 0, 2, 2]), np.ones((4, 1)), n_levels=3)


def test_empty_class_allowed_on_request():
    rng = np.random.default_rng(0)
    Y = rng.normal(size=(6, 1))
    m = fit_ordinal_cauchit_mle(np.array([0, 0, 0, 2, 2, 2]), Y, n_levels=3, allow_empty=True)
    assert np.all(np.isfinite(m.gamma)) and np.all(np.diff(m.gamma) > 0)

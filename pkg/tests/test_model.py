import numpy as np
import pytest

from multimarker.model import (
    BETA_FLOOR,
    DegenerateColumnError,
    Hyperparameters,
    InvariantError,
    LevelOrderError,
    NegativeBiomarkerError,
    RankError,
    UnknownDoseError,
    UsageError,
    _per_dose_line,
    derive_hyperparameters,
    initialize_state,
    scale_biomarkers,
    validate_dataset,
    Dataset,
)
from multimarker.simulate import apple_like
from multimarker.stats import RngStream


def test_valid_apple_structure_accepted():
    d = apple_like()
    out = validate_dataset(d.Y, [50, 100, 300], d.x)
    assert (out.n, out.P, out.D) == (86, 4, 3)


def test_negative_cell_named():
    Y = np.ones((3, 2))
    Y[1, 0] = -0.1
    with pytest.raises(NegativeBiomarkerError, match=r"\(1, 0\)=-0.1"):
        validate_dataset(Y, [1, 2])


def test_level_order():
    with pytest.raises(LevelOrderError, match="position"):
        validate_dataset(np.ones((3, 1)), [100, 50, 300])


def test_unknown_dose_named():
    with pytest.raises(UnknownDoseError, match="row 2"):
        validate_dataset(np.ones((3, 1)), [50, 100], [50, 100, 75])


def test_non_finite_rejected():
    with pytest.raises(ValueError, match="non-finite"):
        validate_dataset(np.array([[1.0], [np.nan]]), [1, 2])


def test_scaling_examples():
    assert np.allclose(scale_biomarkers(np.array([[1.0], [2.0], [3.0]])).ravel(), [1, 2, 3], atol=1e-15)
    big = np.array([[1e7], [2e7], [3e7]])
    assert np.allclose(scale_biomarkers(big).ravel(), [1, 2, 3], atol=1e-12)


def test_scaling_preserves_correlation():
    rng = np.random.default_rng(0)
    Y = rng.gamma(2.0, 3.0, size=(50, 4)) * [1, 1e7, 0.01, 5]
    S = scale_biomarkers(Y)
    assert np.allclose(np.corrcoef(Y.T), np.corrcoef(S.T), atol=1e-12)
    std = (Y - Y.mean(0)) / Y.std(0, ddof=1)
    assert np.all(S >= np.abs(std.min(0)) - 1e-12) and np.all(S > 0)


def test_constant_column_rejected():
    with pytest.raises(DegenerateColumnError):
        scale_biomarkers(np.array([[1.0, 2.0], [1.0, 3.0]]))


def test_hyperparameter_constants():
    d = apple_like()
    h = derive_hyperparameters(d)
    assert np.allclose(h.nu_z1, [1.5, 1.0, 0.5])
    assert np.allclose(h.nu_z2, [86, 86, 86])
    assert (h.nu_beta1, h.nu_beta2, h.nu_P1, h.nu_P2) == (2, 3, 1, 3)
    assert h.sigma_alpha2 == 1
    assert h.m_gamma.size == 2 and h.m_eta.size == 4
    assert np.allclose(h.m_gamma, derive_hyperparameters(d).m_gamma)


def test_hyperparameters_need_doses():
    with pytest.raises(UsageError):
        derive_hyperparameters(Dataset(Y=np.ones((4, 1)), X=np.array([1.0, 2.0])))


def test_pooled_slope_consistency():
    est = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = np.array([50.0, 150.0, 300.0])
        x = X[rng.integers(0, 3, 120)]
        Y = 0.5 + 0.005 * x[:, None] + rng.normal(0, 0.05, (120, 4))
        est.append(derive_hyperparameters(Dataset(Y=np.abs(Y), X=X, x=x)).m_beta)
    assert abs(np.mean(est) - 0.005) <= 0.2 * 0.005


def test_negative_ols_clamped():
    X = np.array([1.0, 2.0, 3.0])
    x = np.repeat(X, 4)
    Y = np.column_stack([10 - 3 * x, 10 - 2 * x]) + np.tile([0.0, 0.1, 0.2, 0.3], 3)[:, None]
    h = derive_hyperparameters(Dataset(Y=Y, X=X, x=x))
    assert h.m_beta == 0.0 and h.m_alpha > 0


@pytest.mark.parametrize("field,value", [("kappa", 2.5), ("sigma_alpha2", 2.0), ("m_gamma", [1.0, 0.0])])
def test_hyperparameter_invariants(field, value):
    kw = dict(
        m_alpha=1.0, m_beta=0.1, tau_alpha=1.0, tau_beta=1.0, nu_beta1=2.0, nu_beta2=3.0,
        nu_P1=1.0, nu_P2=3.0, nu_z1=[1.5, 1, 0.5], nu_z2=[9, 9, 9], m_gamma=[-1.0, 1.0],
        m_eta=[0.0], kappa=2.0,
    )
    kw[field] = value
    with pytest.raises(InvariantError):
        Hyperparameters(**kw)


def test_initial_line_exact():
    X = np.array([10.0, 20.0, 40.0])
    x = np.repeat(X, 3)
    Y = np.column_stack([1 + 0.5 * x, 3 + 0.25 * x])
    a, b = _per_dose_line(Y, x, X)
    assert np.allclose(a, [1, 3]) and np.allclose(b, [0.5, 0.25])


def test_initial_state_valid_and_clamped():
    # an exact line with var(x) < 1/D gives var(Y) < beta^2/D, so the floor engages
    X = np.array([0.0, 0.5, 1.0])
    x = np.repeat(X, 5)
    Y = np.column_stack([5 + 100 * x, 1 + 0.0 * x + np.tile(np.linspace(0, 1e-3, 5), 3)])
    d = Dataset(Y=Y, X=X, x=x)
    h = derive_hyperparameters(d)
    s = initialize_state(d, h, RngStream(0))
    s.check()
    var = Y.var(axis=0, ddof=1)
    assert s.sigma2[0] == pytest.approx(1e-4 * var[0])
    assert s.beta[1] >= BETA_FLOOR
    assert np.all(s.theta2 == 25.0)
    assert np.array_equal(s.c, np.repeat([0, 1, 2], 5))
    assert np.allclose(s.pi, 1 / 3)


def test_moment_start_clamped(toy_data):
    h = derive_hyperparameters(toy_data)
    s = initialize_state(toy_data, h, RngStream(0), theta_init="moment")
    assert np.all((s.theta2 >= 1) & (s.theta2 <= 1e4))


def test_rank_error_single_dose():
    d = Dataset(Y=np.ones((4, 1)) + np.arange(4)[:, None], X=np.array([1.0, 2.0]), x=np.ones(4))
    with pytest.raises(RankError):
        _per_dose_line(d.Y, d.x, d.X)


def test_fingerprint_order_independent(toy_data):
    perm = np.random.default_rng(1).permutation(toy_data.n)
    assert toy_data.fingerprint() == toy_data.subset(perm).fingerprint()
    other = toy_data.with_Y(toy_data.Y * 1.0000001)
    assert other.fingerprint() != toy_data.fingerprint()

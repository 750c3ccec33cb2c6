import warnings

import numpy as np
import pytest

from helpers import make_data
from multimarker.diagnostics import (
    DegenerateChainWarning,
    ErrorTable,
    effective_sample_size,
    error_summary,
    ess_with_flag,
    loocv,
)
from multimarker.sampler import SamplerConfig


def _ar1(rho, n, seed):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=n)
    x = np.empty(n)
    x[0] = e[0] / np.sqrt(1 - rho**2)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + e[t]
    return x


def test_white_noise_ess():
    x = np.random.default_rng(0).normal(size=10_000)
    assert effective_sample_size(x) == pytest.approx(10_000, rel=0.1)


def test_ar1_ess():
    n = 100_000
    assert effective_sample_size(_ar1(0.5, n, 1)) == pytest.approx(n / 3, rel=0.15)


def test_constant_chain_flagged():
    res = ess_with_flag(np.full(500, 2.0))
    assert res.degenerate and res.ess == 500
    with pytest.warns(DegenerateChainWarning):
        assert effective_sample_size(np.full(500, 2.0)) == 500


def test_ess_checks_and_cap():
    with pytest.raises(ValueError):
        effective_sample_size(np.zeros(50))
    alt = np.tile([1.0, -1.0], 500)
    assert effective_sample_size(alt) <= 1000


def test_ess_affine_invariant():
    x = _ar1(0.7, 5000, 2)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert effective_sample_size(3.5 * x - 100) == pytest.approx(effective_sample_size(x), rel=1e-9)


def test_error_summary_examples(oracles):
    assert error_summary([1.0, 2.0], [1.0, 2.0]) == (0.0, 0.0)
    med, width = error_summary(np.arange(1.0, 101.0), np.zeros(100))
    assert med == pytest.approx(oracles["q7_100"]["median"])
    assert width == pytest.approx(oracles["q7_100"]["width"])
    with pytest.raises(ValueError):
        error_summary([1.0], [1.0, 2.0])


def test_error_summary_symmetry_and_scale():
    rng = np.random.default_rng(3)
    t, e = rng.uniform(0, 300, 200), rng.uniform(0, 300, 200)
    a = error_summary(t, e)
    assert error_summary(e, t) == a
    assert error_summary(2.5 * t, 2.5 * e) == pytest.approx(tuple(2.5 * np.array(a)))


def test_error_table_text():
    tab = ErrorTable()
    tab.add("I", "S1", "multimarker", "E", [1.0, 2.0, 3.0], [1.5, 2.0, 2.0])
    tab.add("I", "S1", "blr", "E", [1.0, 2.0, 3.0], [10.0, 20.0, 30.0])
    assert tab.lookup(method="blr")["median"] == 18.0
    assert all(r["width95"] >= 0 for r in tab.rows)
    text = tab.to_text()
    assert "I/S1" in text and "multimarker" in text
    with pytest.raises(KeyError):
        tab.lookup(study="II")


def _tiny():
    rng = np.random.default_rng(0)
    X = np.array([50.0, 100.0, 300.0])
    Y = np.abs(1 + 0.02 * X[:, None] + rng.normal(0, 0.1, (3, 2)))
    return make_data(Y, X, X)


def test_loocv_fold_count():
    res = loocv(_tiny(), SamplerConfig(n_iter=60, n_burn=20, seed=1), full_fit=False)
    assert [f.index for f in res.folds] == [0, 1, 2]
    rows = res.observation_rows()
    assert len(rows) == 3 and len(rows[0]) == 8
    assert res.parameter_rows()[0][0] == "loocv"


def test_loocv_order_independent():
    data = _tiny()
    cfg = SamplerConfig(n_iter=60, n_burn=20, seed=4)
    fwd = loocv(data, cfg, full_fit=False, indices=[0, 1, 2])
    rev = loocv(data, cfg, full_fit=False, indices=[2, 1, 0])
    assert [f.median for f in fwd.folds] == [f.median for f in rev.folds]
    assert fwd.observation_rows() == rev.observation_rows()


@pytest.mark.slow
def test_apple_per_dose_errors(apple_loocv):
    import csv

    from conftest import APPLE_INTAKE_SD

    assert apple_loocv["code"] == 0
    with open(apple_loocv["out"] / "loocv_doses.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    per_dose = [float(r["median_abs_difference"]) for r in rows if r["dose"] != "all"]
    assert len(per_dose) == 3
    assert max(per_dose) <= 2 * APPLE_INTAKE_SD

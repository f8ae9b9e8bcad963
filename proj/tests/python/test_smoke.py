import math

import numpy as np
import pytest

import ltqr


def test_check_loss_values():
    v = np.array([-2.0, 0.0, 3.0])
    np.testing.assert_allclose(ltqr.rho_tau(v, 0.25), [1.5, 0.0, 0.75])
    # With sigma2 = 0 the corrected loss reduces to the smoothed loss.
    np.testing.assert_allclose(ltqr.rho_corrected(v, 0.3, 0.8, 0.0), ltqr.rho_smooth(v, 0.3, 0.8))
    # Smoothing vanishes far from the kink.
    assert ltqr.rho_smooth(50.0, 0.7, 0.5) == pytest.approx(0.7 * 50.0)


def test_naive_qr_median_of_constant_design():
    b = np.array([1.0, 2.0, 3.0, 4.0, 10.0])
    x = np.ones((5, 1))
    assert ltqr.naive_qr(b, x, 0.5)[0] == pytest.approx(3.0)


def test_true_beta_median():
    beta = ltqr.true_beta("case1", 0.5)
    assert beta.shape == (3,)
    assert np.all(np.isfinite(beta))


def test_simulate_fit_resample_pipeline():
    sim = ltqr.simulate("case1", n=150, seed=11)
    data = sim["dataset"]
    assert len(data) == 150
    assert data.coefficient_names[0] == "intercept"

    taus = [0.2, 0.35, 0.5, 0.65, 0.8]
    res = ltqr.fit(data, tau_grid=taus, h=0.8, seed=3, workers=1)
    assert res.beta_hat.shape == (3, len(taus))
    assert all(res.converged)
    assert res.sigma2_hat > 0.0

    draws = ltqr.resample(res, n_b=30, seed=5, workers=1)
    assert draws.n_b_used + draws.n_b_dropped == 30
    assert np.all(draws.se > 0.0)
    assert np.all(draws.ci_lower <= draws.beta_hat)
    assert np.all(draws.beta_hat <= draws.ci_upper)

    again = ltqr.resample(res, n_b=30, seed=5, workers=2)
    np.testing.assert_array_equal(draws.se, again.se)

    test = ltqr.constancy_test(draws, 1, 0.2, 0.8)
    assert test["lower"] <= test["upper"]
    assert test["reject"] == (test["statistic"] < test["lower"] or test["statistic"] > test["upper"])

    est, se = ltqr.average_effect(draws, 0.2, 0.8)
    assert est.shape == (3,) and se.shape == (3,)


def test_select_bandwidth_identity():
    sim = ltqr.simulate("case1", n=200, seed=12)
    res = ltqr.fit(sim["dataset"], tau_grid=[0.5], h=0.8, workers=1)
    sel = ltqr.select_bandwidth(res, tau=0.5, h_grid=[0.6, 0.8, 1.0], n_c=4, seed=2, workers=1)
    assert sel["selected"] == ltqr.extrapolate_bandwidth(sel["h1"], sel["h2"])
    assert math.isclose(sel["selected"], sel["h1"] ** 2 / sel["h2"], rel_tol=1e-15)


def test_dataset_construction_and_errors():
    data = ltqr.Dataset(
        ids=["a", "b", "c", "d"],
        times=[[0, 1, 2]] * 4,
        y=[[1, 2, 3], [0, 1, 1], [2, 2, 5], [1, 0, 2]],
        covariates=np.array([[0.5], [1.0], [-0.2], [0.3]]),
        covariate_names=["x1"],
    )
    assert data.p == 2
    assert data.subject(0)["id"] == "a"

    with pytest.raises(ltqr.LtqrError):
        ltqr.Dataset(ids=["a"], times=[[0, 1]], y=[[1.0]], covariates=np.zeros((1, 1)))
    with pytest.raises(ValueError):
        ltqr.fit(data, tau_grid=[1.5])


def test_read_dataset(tmp_path):
    long_csv = tmp_path / "long.csv"
    cov_csv = tmp_path / "cov.csv"
    long_csv.write_text("subject_id,time,y\ns1,0,1\ns1,1,2\ns1,2,2.5\ns2,0,0\ns2,1,1\ns2,2,3\n")
    cov_csv.write_text("subject_id,x1\ns1,0.5\ns2,1.5\n")
    data, warnings = ltqr.read_dataset(str(long_csv), str(cov_csv))
    assert len(data) == 2
    assert data.coefficient_names == ["intercept", "x1"]
    assert warnings == []
    with pytest.raises(ltqr.LtqrError):
        ltqr.read_dataset(str(tmp_path / "missing.csv"), str(cov_csv))

import json

import numpy as np
import pytest

from multiform._validation import make_rng
from multiform.harness import ScanConfig, fit_exponent, run_scan


def test_fit_exact_power_law():
    N = np.array([8, 16, 32, 64])
    fit = fit_exponent(N, 3.0 * N**-0.5)
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.intercept == pytest.approx(np.log2(3.0), abs=1e-12)
    assert fit.ci[0] == pytest.approx(-0.5, abs=1e-9) and fit.ci[1] == pytest.approx(-0.5, abs=1e-9)


def test_fit_constant_slope_zero():
    fit = fit_exponent([4, 8, 16], [2.0, 2.0, 2.0])
    assert fit.slope == pytest.approx(0.0, abs=1e-12)


def test_fit_noisy_in_ci():
    rng = make_rng(1)
    N = 2.0 ** np.arange(3, 12)
    means = N**-0.7 * np.exp(rng.normal(0, 0.05, N.size))
    fit = fit_exponent(N, means)
    assert fit.ci[0] <= -0.7 <= fit.ci[1]


def test_fit_degenerate():
    assert np.isnan(fit_exponent([8], [1.0]).slope)
    two = fit_exponent([8, 16], [1.0, 0.5])
    assert two.slope == pytest.approx(-1.0) and np.isnan(two.ci[0])
    with pytest.warns(RuntimeWarning):
        fit = fit_exponent([4, 8, 16, 32], [1.0, 0.0, 0.25, 0.125])
    assert fit.excluded == 1 and fit.n_points == 3


def test_config_validation():
    with pytest.raises(ValueError):
        ScanConfig([8, 4], [0.0])
    with pytest.raises(ValueError):
        ScanConfig([4, 8], [0.0], trials=5)
    with pytest.raises(ValueError):
        ScanConfig([4, 8], [0.0], estimator="nope")
    with pytest.raises(ValueError):
        ScanConfig([4, 8], [0.0], estimator="ascent")
    with pytest.raises(ValueError):
        ScanConfig([4, 8], [0.0], estimator="ascent", family="1,-1; 1,1; 1,2", M=3)
    cfg = ScanConfig([4, 8], [0.0], estimator="maximal", family="1,-1; 1,1; 1,2")
    assert cfg.M == 2 and cfg.decay_threshold() == 2.0**-3
    assert ScanConfig([4, 8], [0.0], estimator="ascent", family="1,-1; 1,1; 1,2").decay_threshold() == 0.25
    assert ScanConfig([4, 8], [0.2]).reference_slope(0.2) == pytest.approx(-0.4)


def test_single_n_scan_nan():
    res = run_scan(ScanConfig([16], [0.0], trials=10, density=0.5), workers=1)
    assert np.isnan(res.fits[0.0]["slope"])
    assert len(res.rows) == 1


def test_scan_reproducible_and_thread_invariant(monkeypatch):
    cfg = ScanConfig([8, 16, 32], [0.0, 0.3], trials=10, seed=5, density=0.5)
    a = run_scan(cfg, workers=1)
    b = run_scan(cfg, workers=3)
    monkeypatch.setenv("MULTIFORM_THREADS", "2")
    c = run_scan(cfg)
    assert a.rows == b.rows == c.rows
    assert a.to_json() == b.to_json()


def test_scan_outputs():
    cfg = ScanConfig([8, 16, 32], [0.0], trials=10, density=0.5)
    res = run_scan(cfg, workers=1)
    lines = res.to_csv().strip().splitlines()
    assert lines[0] == "N,gamma,p,mean,median,stderr,trials" and len(lines) == 4
    summary = json.loads(res.to_json())
    assert summary["config"]["N_list"] == [8, 16, 32]
    fit = summary["fits"]["0.0"]
    assert fit["reference_slope"] == -0.5 and "decay_observed" in fit
    pd = res.plot_data()
    assert [p["log2_N"] for p in pd] == [3.0, 4.0, 5.0]


def test_ascent_scan_runs():
    cfg = ScanConfig([4, 6], [0.0], estimator="ascent", family="1,-1; 1,1; 1,2", trials=10,
                     restarts=2, iters=20, density=0.5)
    res = run_scan(cfg, workers=1)
    assert all(r["mean"] > 0 for r in res.rows)
    assert res.fits[0.0]["decay_predicted"]


def test_matrix_spectral_scan():
    cfg = ScanConfig([8, 16, 32], [0.0], estimator="matrix_spectral", trials=10, density=0.5)
    res = run_scan(cfg, workers=1)
    assert res.rows[0]["p"] == 0.5
    assert res.fits[0.0]["slope"] < 0

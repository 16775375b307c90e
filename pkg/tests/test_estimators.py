import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from multiform._validation import make_rng
from multiform.estimators import (
    BilinearNormEstimator,
    ExponentFit,
    OperatorNormEstimator,
    SpectralNormEstimator,
)
from multiform.linear_forms import FormFamily
from multiform.operator import MultilinearInstance, bilinear_norm_exact, op_norm_bruteforce
from multiform.random_measure import SelectorModel, SignedMeasure, sample_r


def kernels(N, k, seed=0):
    return np.array([sample_r(SelectorModel(N, p=0.5, seed=seed + i)).values for i in range(k)])


def test_bilinear_matches_function():
    X = kernels(6, 3)
    est = BilinearNormEstimator(oversample=4).fit(X)
    out = est.transform(X)
    assert out.shape == (3,)
    for row, v in zip(X, out):
        assert v == pytest.approx(bilinear_norm_exact(SignedMeasure(6, row), 4))


def test_rows_checked():
    with pytest.raises(ValueError):
        BilinearNormEstimator().fit(np.ones((2, 4)))
    est = BilinearNormEstimator().fit(np.ones((2, 5)))
    with pytest.raises(ValueError):
        est.transform(np.ones((2, 7)))
    with pytest.raises(NotFittedError):
        BilinearNormEstimator().transform(np.ones((1, 5)))


def test_operator_estimator_bruteforce_and_ascent():
    X = kernels(2, 2, seed=3)
    brute = OperatorNormEstimator("1,-1; 1,1; 1,2", N=2, method="bruteforce").fit_transform(X)
    low = OperatorNormEstimator("1,-1; 1,1; 1,2", N=2, method="ascent", restarts=5, iters=50).fit_transform(X)
    fam = FormFamily.parse("1,-1; 1,1; 1,2")
    for row, b in zip(X, brute):
        assert b == pytest.approx(op_norm_bruteforce(MultilinearInstance(fam, SignedMeasure(2, row), 2)))
    assert np.all(low <= brute + 1e-9)
    with pytest.raises(ValueError):
        OperatorNormEstimator(method="nope").fit(X)
    with pytest.raises(ValueError):
        OperatorNormEstimator("1,-1; 1,0; 1,1").fit(X)


def test_clone_and_params():
    est = OperatorNormEstimator(N=3, restarts=2)
    c = clone(est)
    assert c.get_params() == est.get_params()


def test_spectral_estimator():
    rng = make_rng(2)
    mats = rng.standard_normal((3, 4, 4))
    out = SpectralNormEstimator().fit_transform(mats.reshape(3, 16))
    np.testing.assert_allclose(out, [np.linalg.norm(m, 2) for m in mats])
    with pytest.raises(ValueError):
        SpectralNormEstimator().fit(np.ones((1, 15)))


def test_exponent_fit():
    N = np.array([8, 16, 32, 64])
    y = 5.0 * N**-0.25
    m = ExponentFit().fit(N, y)
    assert m.slope_ == pytest.approx(-0.25)
    np.testing.assert_allclose(m.predict(N), y)
    assert m.score(N, y) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ExponentFit().fit(N, y[:2])

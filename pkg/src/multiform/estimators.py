"""scikit-learn style wrappers for the norm estimators and the exponent fit.

Kernels are passed as rows of a 2-D array: row ``i`` holds a kernel's
values on ``[-W, W]`` (or a flattened square matrix for the spectral
estimator).  ``transform`` returns one norm per row.
"""
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .harness import fit_exponent
from .linear_forms import FormFamily, check_family
from .operator import (
    MultilinearInstance,
    bilinear_norm_exact,
    maximal_norm_lower,
    op_norm_bruteforce,
    op_norm_lower,
)
from .random_measure import SignedMeasure


class _KernelRows(TransformerMixin, BaseEstimator):
    def fit(self, X, y=None):
        X = check_array(X)
        if X.shape[1] % 2 == 0:
            raise ValueError("each row must have odd length 2W+1")
        self.n_features_in_ = X.shape[1]
        self.half_width_ = X.shape[1] // 2
        return self

    def _rows(self, X):
        check_is_fitted(self)
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        return [SignedMeasure(self.half_width_, row) for row in X]


class BilinearNormEstimator(_KernelRows):
    """Norm of convolution by each kernel, the supremum of its symbol on a grid."""

    def __init__(self, oversample=8):
        self.oversample = oversample

    def transform(self, X):
        return np.array([bilinear_norm_exact(k, self.oversample) for k in self._rows(X)])


class OperatorNormEstimator(_KernelRows):
    """``||T||_op`` for a fixed form family, one kernel per row.

    ``method`` is ``ascent`` (lower bound), ``maximal`` (lower bound for the
    maximal operator) or ``bruteforce`` (exact, tiny instances only).
    """

    def __init__(self, family="1,-1; 1,1", N=4, A=1, method="ascent", restarts=20, iters=200, seed=0):
        self.family = family
        self.N = N
        self.A = A
        self.method = method
        self.restarts = restarts
        self.iters = iters
        self.seed = seed

    def fit(self, X, y=None):
        if self.method not in ("ascent", "maximal", "bruteforce"):
            raise ValueError(f"unknown method {self.method!r}")
        self.family_ = check_family(FormFamily.parse(self.family), operator=True)
        return super().fit(X, y)

    def transform(self, X):
        out = []
        for k in self._rows(X):
            inst = MultilinearInstance(self.family_, k, self.N, self.A)
            if self.method == "ascent":
                out.append(op_norm_lower(inst, self.restarts, self.iters, self.seed).value)
            elif self.method == "maximal":
                out.append(maximal_norm_lower(inst, restarts=self.restarts, iters=self.iters, seed=self.seed).value)
            else:
                out.append(op_norm_bruteforce(inst))
        return np.array(out)


class SpectralNormEstimator(TransformerMixin, BaseEstimator):
    """Largest singular value of each row reshaped to a square matrix."""

    def fit(self, X, y=None):
        X = check_array(X)
        n = int(round(np.sqrt(X.shape[1])))
        if n * n != X.shape[1]:
            raise ValueError("rows must be flattened square matrices")
        self.n_features_in_ = X.shape[1]
        self.side_ = n
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_array(X)
        mats = X.reshape(-1, self.side_, self.side_)
        return np.linalg.norm(mats, 2, axis=(1, 2)) if len(mats) else np.zeros(0)


class ExponentFit(RegressorMixin, BaseEstimator):
    """Power law ``mean ~ c N^slope`` fitted on ``(log2 N, log2 mean)``."""

    def __init__(self, level=0.95):
        self.level = level

    def fit(self, X, y):
        X = check_array(X, ensure_2d=False).reshape(-1)
        y = np.asarray(y, dtype=float).reshape(-1)
        if X.shape != y.shape:
            raise ValueError("X and y must have the same length")
        res = fit_exponent(X, y, self.level)
        self.slope_ = res.slope
        self.intercept_ = res.intercept
        self.ci_ = res.ci
        self.stderr_ = res.stderr
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X, ensure_2d=False).reshape(-1)
        return 2.0 ** (self.intercept_ + self.slope_ * np.log2(X))

    def score(self, X, y, sample_weight=None):
        """R^2 in log-log coordinates."""
        y = np.log2(np.asarray(y, dtype=float))
        pred = np.log2(self.predict(X))
        ss = np.sum((y - y.mean()) ** 2)
        return 1.0 - np.sum((y - pred) ** 2) / ss if ss > 0 else 1.0

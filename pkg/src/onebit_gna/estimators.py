"""scikit-learn style wrappers around the decoders.

Each estimator is fitted on a sensing matrix ``X`` (rows = measurement
vectors) and sign labels ``y`` in ``{-1, +1}``; the decoded sparse vector is
``coef_``. ``predict`` returns ``sign(X @ coef_)`` so the estimators can be
scored and cross-validated like any linear classifier.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .baselines import BihtOptions, biht, lp_estimate
from .model import sign
from .solver import SolverOptions, run_gna

__all__ = ["check_sign_labels", "OneBitGNA", "BIHTDecoder", "LinearProjectionDecoder"]


def check_sign_labels(y) -> np.ndarray:
    """Return ``y`` as a float vector, raising unless every entry is -1 or +1."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"y must be one-dimensional, got shape {y.shape}")
    if not np.all((y == 1) | (y == -1)):
        bad = np.unique(y[(y != 1) & (y != -1)])[:5]
        raise ValueError(f"y must contain only -1 and +1, found {bad.tolist()}")
    return y.astype(float)


def _check_s(s, n_features):
    if not 1 <= int(s) <= n_features:
        raise ValueError(f"s must lie in [1, {n_features}], got {s}")
    return int(s)


class _SignDecoder(ClassifierMixin, BaseEstimator):

    def _validate_fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        y = check_sign_labels(y)
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array([-1, 1])
        return X, y, _check_s(self.s, X.shape[1])

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_

    def predict(self, X):
        return sign(self.decision_function(X)).astype(int)

    @property
    def support_(self):
        check_is_fitted(self, "coef_")
        return np.flatnonzero(self.coef_)


class OneBitGNA(_SignDecoder):
    """Sparse decoder for sign measurements using the generalized Newton algorithm.

    Parameters
    ----------
    s : int
        Number of nonzeros to recover.
    eta : float
        Step size used when ranking coordinates for the active set.
    max_iter : int
        Iteration cap.
    ls_ridge : float
        Ridge floor applied only when a restricted Gram matrix is singular.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    n_iter_ : int
    converged_ : bool
    active_history_ : list of tuple
    report_ : SolverReport
    """

    def __init__(self, s=5, eta=0.9, max_iter=5, ls_ridge=0.0):
        self.s = s
        self.eta = eta
        self.max_iter = max_iter
        self.ls_ridge = ls_ridge

    def fit(self, X, y, x0=None):
        X, y, s = self._validate_fit(X, y)
        opts = SolverOptions(s=s, eta=self.eta, max_iter=self.max_iter, ls_ridge=self.ls_ridge)
        report = run_gna(X, y, opts, x0=x0)
        self.report_ = report
        self.coef_ = report.x_hat
        self.n_iter_ = report.iterations
        self.converged_ = report.converged
        self.active_history_ = report.active_history
        return self


class BIHTDecoder(_SignDecoder):
    """Binary iterative hard thresholding as an estimator."""

    def __init__(self, s=5, step=None, max_iter=100, normalize_output=True):
        self.s = s
        self.step = step
        self.max_iter = max_iter
        self.normalize_output = normalize_output

    def fit(self, X, y):
        X, y, s = self._validate_fit(X, y)
        opts = BihtOptions(s=s, step=self.step, max_iter=self.max_iter,
                           normalize_output=self.normalize_output)
        self.coef_, info = biht(X, y, opts, return_info=True)
        self.n_iter_ = info["iterations"]
        self.converged_ = info["converged"]
        return self


class LinearProjectionDecoder(_SignDecoder):
    """Back-projection ``X^T y / m`` projected onto the l1/l2 ball intersection."""

    def __init__(self, s=5):
        self.s = s

    def fit(self, X, y):
        X, y, s = self._validate_fit(X, y)
        self.coef_ = lp_estimate(X, y, s)
        self.n_iter_ = 1
        return self

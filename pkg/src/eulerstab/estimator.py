"""scikit-learn style wrappers.

Nothing is learned from data here: ``fit`` only validates hyperparameters
and records input width, so the wrappers exist to batch flows or classes
through a familiar interface and to slot into pipelines.
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .linearization import ShearFlowParams
from .spectral import VERDICTS, classify_class, flow_verdict
from .validation import (
    check_index_triple,
    check_positive_float,
    check_positive_int,
    check_rows,
    check_triple,
)

__all__ = ["ShearFlowClassifier", "ClassSpectrumTransformer"]


def _snap(v: float):
    # integral floats become exact so lattice decisions stay exact
    return Fraction(int(v)) if float(v).is_integer() else float(v)


class ShearFlowClassifier(ClassifierMixin, BaseEstimator):
    """Predict the stability verdict of shear flows.

    Each row of ``X`` is ``(p_x, p_y, p_z, G_x, G_y, G_z, k_x, k_y, k_z)``
    with integer ``p`` indices.
    """

    def __init__(self, N=30, tol=1e-8, q_max=10**6, box=50, jobs=1):
        self.N = N
        self.tol = tol
        self.q_max = q_max
        self.box = box
        self.jobs = jobs

    def _check_params(self):
        check_positive_int(self.N, "N")
        check_positive_float(self.tol, "tol")
        check_positive_int(self.q_max, "q_max")
        check_positive_int(self.box, "box")
        check_positive_int(self.jobs, "jobs")

    def fit(self, X, y=None):
        self._check_params()
        X = check_rows(X, 9)
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array(VERDICTS)
        return self

    def _flows(self, X):
        check_is_fitted(self, "classes_")
        X = check_rows(X, 9)
        flows = []
        for row in X:
            p = check_index_triple(row[:3], "p")
            gamma = tuple(_snap(v) for v in row[3:6])
            kappa = tuple(_snap(v) for v in row[6:9])
            flows.append(ShearFlowParams.from_indices(p, gamma, kappa))
        return flows

    def analyze(self, X) -> list:
        return [
            flow_verdict(f, N=self.N, tol=self.tol, q_max=self.q_max, box=self.box, jobs=self.jobs)
            for f in self._flows(X)
        ]

    def predict(self, X) -> np.ndarray:
        return np.array([v.verdict for v in self.analyze(X)], dtype=object)


class ClassSpectrumTransformer(TransformerMixin, BaseEstimator):
    """Map class leaders of one flow to spectral features.

    ``transform`` returns columns ``(max_real_part, physical_bound, a_tilde_x,
    a_tilde_y, sin_theta)``; the bound is NaN when it does not apply.
    """

    feature_names = ("max_real_part", "physical_bound", "a_tilde_x", "a_tilde_y", "sin_theta")

    def __init__(self, p=(1, 0, 0), gamma=(0, 0, 1), kappa=(1, 1, 1), N=30, tol=1e-8):
        self.p = p
        self.gamma = gamma
        self.kappa = kappa
        self.N = N
        self.tol = tol

    def fit(self, X=None, y=None):
        check_positive_int(self.N, "N")
        check_positive_float(self.tol, "tol")
        self.flow_ = ShearFlowParams.from_indices(
            check_index_triple(self.p, "p"), check_triple(self.gamma, "gamma"), check_triple(self.kappa, "kappa")
        )
        if X is not None:
            self.n_features_in_ = check_rows(X, 3).shape[1]
        return self

    def _reports(self, X):
        check_is_fitted(self, "flow_")
        X = check_rows(X, 3)
        return [
            classify_class(check_index_triple(row, "a"), None, flow=self.flow_, N=self.N, tol=self.tol)
            for row in X
        ]

    def transform(self, X) -> np.ndarray:
        out = []
        for r in self._reports(X):
            bound = np.nan if r.physical_bound is None else r.physical_bound
            out.append([r.max_real_part, bound, r.a_tilde_x, r.a_tilde_y, r.sin_theta])
        return np.array(out, dtype=float)

    def predict(self, X) -> np.ndarray:
        return np.array([r.classification for r in self._reports(X)], dtype=object)

    def get_feature_names_out(self, input_features=None):
        return np.array(self.feature_names, dtype=object)

"""scikit-learn compatible wrappers for the two data-shaped steps.

Most of the package acts on operators, not on sample matrices, so only the
tail fit (radii against values) and the weighted norms (a batch of grid
functions to a table of norms) are exposed this way.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .decay import power_law_fit, shell_profile, weight_values
from .errors import ResolutionError


class TailExponentRegressor(RegressorMixin, BaseEstimator):
    """Power-law tail |phi| ~ c (1 + r)^slope from samples (r, phi(r)).

    X holds either radii (n, 1) or points (n, d), in which case the radius is
    the Euclidean norm. Samples are binned into shells of the given width
    between the quantiles lo and hi of the radius range.
    """

    def __init__(self, shell_width=None, lo=0.25, hi=0.75, min_shells=6):
        self.shell_width = shell_width
        self.lo = lo
        self.hi = hi
        self.min_shells = min_shells

    def fit(self, X, y):
        X = check_array(X)
        y = np.asarray(y, dtype=float).ravel()
        r = X[:, 0] if X.shape[1] == 1 else np.linalg.norm(X, axis=1)
        r_max = float(np.max(r))
        width = self.shell_width or (self.hi - self.lo) * r_max / (4 * self.min_shells)
        edges = np.arange(self.lo * r_max, self.hi * r_max + 0.5 * width, width)
        centers, rms = shell_profile(r, y, edges)
        if len(rms) < self.min_shells:
            raise ResolutionError(f"only {len(rms)} populated shells, need {self.min_shells}")
        self.slope_, self.band_, self.intercept_ = power_law_fit(centers, rms)
        self.shell_radii_, self.shell_rms_ = centers, rms
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "slope_")
        X = check_array(X)
        r = X[:, 0] if X.shape[1] == 1 else np.linalg.norm(X, axis=1)
        return np.exp(self.intercept_) * (1.0 + r) ** self.slope_


class WeightedNormTransformer(TransformerMixin, BaseEstimator):
    """Rows of grid functions to rows of weighted L2 norms, one column per alpha."""

    def __init__(self, grid=None, alphas=(0.45, 1.0), kind="power"):
        self.grid = grid
        self.alphas = alphas
        self.kind = kind

    def fit(self, X, y=None):
        X = check_array(X)
        if X.shape[1] != self.grid.n_unknowns:
            raise ValueError(f"rows must have {self.grid.n_unknowns} entries, got {X.shape[1]}")
        r = self.grid.radii()
        floor = 0.5 * self.grid.h if self.kind == "log" else 0.0
        self.weights_ = np.array([weight_values(r, a, self.kind, floor) for a in self.alphas])
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X)
        return np.sqrt(((X[:, None, :] * self.weights_[None]) ** 2).sum(axis=2) * self.grid.cell_volume)

"""Estimator-style facade over the model, encoder, and recovery pipeline.

These classes follow the scikit-learn conventions (constructor parameters
mirrored as attributes, ``fit`` returning self, fitted state in trailing-
underscore attributes, ``get_params``/``set_params`` inherited) so the
pieces compose with pipelines and model-selection tooling:

    model = MultiscaleManifoldModel(d=2, j_min=2, j_max=6).fit(X_train)
    encoder = OneBitEncoder(m=1000, seed=3).fit(X_train)
    bits = encoder.transform(X_test)
    decoder = OneBitDecoder(model=model, encoder=encoder, j=4).fit()
    X_hat = decoder.predict(bits)
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .gmra import audit_gmra, build_gmra, nearest_centers
from .measure import MeasurementEnsemble, quantize_rows
from .recovery import (
    CenterSignCache,
    oms,
    oms_simple,
    recover_center_only,
)
from .validation import as_matrix


def _check_fitted(obj, attr):
    if not hasattr(obj, attr):
        raise NotFittedError(
            f"{type(obj).__name__} is not fitted yet; call fit first"
        )


class MultiscaleManifoldModel(BaseEstimator, TransformerMixin):
    """Fit the multiscale piecewise-affine approximation of a point sample.

    Parameters
    ----------
    d : int
        Intrinsic dimension of the local fits.
    j_min, j_max : int or None
        Range of refinement levels to store (see :func:`build_gmra`).
    """

    def __init__(self, d=2, j_min=None, j_max=None):
        self.d = d
        self.j_min = j_min
        self.j_max = j_max

    def fit(self, X, y=None):
        X = as_matrix(X, name="X")
        self.model_ = build_gmra(X, self.d, j_min=self.j_min, j_max=self.j_max)
        self.scales_ = self.model_.scales()
        return self

    def transform(self, X, j=None):
        """Project rows onto their nearest cell's affine space at level j."""
        _check_fitted(self, "model_")
        X = as_matrix(X, name="X")
        level = self.model_.level(self.scales_[-1] if j is None else j)
        assign = nearest_centers(level, X)
        out = np.empty_like(X)
        for k in np.unique(assign):
            members = np.flatnonzero(assign == k)
            diff = X[members] - level.centers[k]
            out[members] = level.centers[k] + (diff @ level.bases[k].T) @ level.bases[k]
        return out

    def audit(self, X=None):
        _check_fitted(self, "model_")
        return audit_gmra(self.model_, X)


class OneBitEncoder(BaseEstimator, TransformerMixin):
    """Encode signals as signs of seeded Gaussian measurements."""

    def __init__(self, m=1024, seed=0):
        self.m = m
        self.seed = seed

    def fit(self, X, y=None):
        X = as_matrix(X, name="X")
        self.n_features_in_ = X.shape[1]
        self.ensemble_ = MeasurementEnsemble.generate(self.m, X.shape[1], self.seed)
        return self

    def transform(self, X):
        _check_fitted(self, "ensemble_")
        return quantize_rows(self.ensemble_, as_matrix(X, name="X"))


class OneBitDecoder(BaseEstimator):
    """Recover signals from one-bit measurement rows.

    Needs a fitted :class:`MultiscaleManifoldModel` (or raw training data to
    fit one) and the fitted :class:`OneBitEncoder` whose ensemble produced
    the bits. ``variant`` is one of ``oms`` (cap hull, linear objective),
    ``oms-plus`` (cap hull, hinge objective), ``oms-simple`` (radius-R
    disk), or ``center`` (step-I baseline).
    """

    def __init__(
        self,
        model=None,
        encoder=None,
        j=None,
        variant="oms",
        R=1.5,
        search="exhaustive",
        beam_width=10,
        d=2,
        j_min=None,
        j_max=None,
    ):
        self.model = model
        self.encoder = encoder
        self.j = j
        self.variant = variant
        self.R = R
        self.search = search
        self.beam_width = beam_width
        self.d = d
        self.j_min = j_min
        self.j_max = j_max

    def fit(self, X=None, y=None):
        if self.encoder is None:
            raise ValueError("OneBitDecoder needs the encoder that produced the bits")
        _check_fitted(self.encoder, "ensemble_")
        if self.model is not None:
            _check_fitted(self.model, "model_")
            self.gmra_ = self.model.model_
        else:
            if X is None:
                raise ValueError("pass training data or a fitted model")
            self.gmra_ = build_gmra(
                as_matrix(X, name="X"), self.d, j_min=self.j_min, j_max=self.j_max
            )
        self.level_ = self.gmra_.scales()[-1] if self.j is None else self.j
        self.gmra_.level(self.level_)  # fail fast if the level is absent
        self.cache_ = CenterSignCache(self.gmra_, self.encoder.ensemble_)
        return self

    def recover(self, bits):
        """Full recovery results for each row of bits."""
        _check_fitted(self, "gmra_")
        bits = np.asarray(bits)
        if bits.ndim == 1:
            bits = bits[None, :]
        ensemble = self.encoder.ensemble_
        results = []
        for row in bits:
            if self.variant == "oms":
                res = oms(
                    self.gmra_, self.level_, ensemble, row,
                    variant="linear", search=self.search,
                    beam_width=self.beam_width, cache=self.cache_,
                )
            elif self.variant == "oms-plus":
                res = oms(
                    self.gmra_, self.level_, ensemble, row,
                    variant="plus", search=self.search,
                    beam_width=self.beam_width, cache=self.cache_,
                )
            elif self.variant == "oms-simple":
                res = oms_simple(
                    self.gmra_, self.level_, ensemble, row, R=self.R,
                    search=self.search, beam_width=self.beam_width, cache=self.cache_,
                )
            elif self.variant == "center":
                res = recover_center_only(
                    self.gmra_, self.level_, ensemble, row,
                    search=self.search, beam_width=self.beam_width, cache=self.cache_,
                )
            else:
                raise ValueError(f"unknown variant {self.variant!r}")
            results.append(res)
        return results

    def predict(self, bits):
        """Recovered signals, one row per bit pattern; NaN rows when infeasible."""
        results = self.recover(bits)
        D = self.gmra_.D
        out = np.full((len(results), D), np.nan)
        for i, res in enumerate(results):
            if res.feasible:
                out[i] = res.x_star
        return out

"""scikit-learn style façade: fit parameters on an operator, transform state vectors."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .filters import OWNSPFilter, OWNSRFilter, exact_projection
from .selection import greedy_select, heuristic_select, minimal_set_ownsp, minimal_set_ownsr, objectives
from .spectral import Spectrum, full_spectrum


class OneWayFilter(TransformerMixin, BaseEstimator):
    """Select recursion parameters for an operator and apply the one-way filter.

    ``fit`` takes a classified :class:`Spectrum`, a testbed, or an operator factory
    ``s -> OperatorM`` (classified at ``s``).  ``transform`` filters the rows of
    ``X`` (shape ``(n_samples, n)``), so a batch of states goes through in one call.

    Parameters
    ----------
    method : {"ownsp", "ownsr", "exact"}
    n_beta : int
    selector : {"greedy", "heuristic", "minimal"}
    heuristic : dict, optional
        Heuristic config, required when ``selector="heuristic"``.
    """

    def __init__(self, method="ownsp", n_beta=10, selector="greedy", n_starts=8, seed=0,
                 c=1.0, heuristic=None, s=None):
        self.method = method
        self.n_beta = n_beta
        self.selector = selector
        self.n_starts = n_starts
        self.seed = seed
        self.c = c
        self.heuristic = heuristic
        self.s = s

    def _spectrum(self, X):
        if isinstance(X, Spectrum):
            return X
        if hasattr(X, "builder") and hasattr(X, "s"):
            return full_spectrum(X.builder(), X.s if self.s is None else self.s)
        if callable(X):
            if self.s is None:
                raise ValueError("s is required when fitting on an operator factory")
            return full_spectrum(X, self.s)
        raise TypeError("fit expects a Spectrum, a testbed or an operator factory")

    def fit(self, X, y=None):
        if self.method not in ("ownsp", "ownsr", "exact"):
            raise ValueError(f"unknown method {self.method!r}")
        spec = self._spectrum(X)
        self.spectrum_ = spec
        self.n_features_in_ = spec.n
        if self.method == "exact":
            P = exact_projection(spec)
            self.xi_ = None
            self._apply = lambda V: P @ V
            return self
        if self.selector == "greedy":
            xi = greedy_select(spec, self.n_beta, self.n_starts, self.seed, objective=self.method)
        elif self.selector == "heuristic":
            xi = heuristic_select(self.heuristic or {}, self.n_beta)
        elif self.selector == "minimal":
            xi = minimal_set_ownsp(spec) if self.method == "ownsp" else minimal_set_ownsr(spec)
        else:
            raise ValueError(f"unknown selector {self.selector!r}")
        self.xi_ = xi
        self.objectives_ = objectives(spec, xi)
        op = spec.operator if spec.operator is not None else spec.M
        if self.method == "ownsp":
            self._apply = OWNSPFilter(op, xi).apply
        else:
            self._apply = OWNSRFilter(op, xi, c=self.c).apply
        return self

    def transform(self, X):
        check_is_fitted(self, "spectrum_")
        X = np.asarray(X, dtype=complex)
        single = X.ndim == 1
        X2 = np.atleast_2d(X)
        if X2.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X2.shape[1]}")
        out = np.asarray(self._apply(X2.T)).T
        return out[0] if single else out

    def score(self, X=None, y=None):
        """Negative objective of the fitted parameters (higher is better)."""
        check_is_fitted(self, "spectrum_")
        if self.xi_ is None:
            return 0.0
        return -self.objectives_.value(self.method)

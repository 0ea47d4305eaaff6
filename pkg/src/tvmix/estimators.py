"""Estimator-style wrappers around the functional fits.

These follow scikit-learn conventions (constructor stores hyperparameters,
``fit`` sets trailing-underscore attributes and returns ``self``,
``get_params``/``set_params``/``clone`` work), so the models drop into
ecosystem tooling. The observation vector is the first ``fit`` argument with
an optional same-length ``groups`` key assigning each observation to a time
interval; interval-level predictors are passed as ``X``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import risk
from .em import EmConfig, _loglik_and_resp, fit_independent, fit_shared
from .exceptions import DataError
from .logistic import fisher_std_errors, fit_logistic, predict_weights
from .mcem import McemConfig, fit_mcem
from .series import as_exogenous, as_interval_series


class _MixtureBase(BaseEstimator):
    def __init__(self, max_iter=1000, loglik_rtol=1e-8, param_atol=1e-6,
                 newton_max_iter=50, newton_tol=1e-10, alpha_clamp=1e-6):
        self.max_iter = max_iter
        self.loglik_rtol = loglik_rtol
        self.param_atol = param_atol
        self.newton_max_iter = newton_max_iter
        self.newton_tol = newton_tol
        self.alpha_clamp = alpha_clamp

    def _config(self):
        return EmConfig(max_iter=self.max_iter, loglik_rtol=self.loglik_rtol,
                        param_atol=self.param_atol,
                        newton_max_iter=self.newton_max_iter,
                        newton_tol=self.newton_tol,
                        alpha_clamp=self.alpha_clamp)

    def var(self, levels=(0.01, 0.05)):
        """Per-interval VaR table from the fitted mixture."""
        check_is_fitted(self, "result_")
        return risk.var_report(self.result_, levels)


class IndependentIntervalMixture(_MixtureBase):
    """One independent five-parameter mixture per time interval.

    Attributes after ``fit``: ``results_`` (per-interval fit results),
    ``params_``, ``labels_``, ``converged_``, ``n_iter_``.
    """

    def fit(self, y, groups=None):
        series = as_interval_series(y, groups)
        self.results_ = fit_independent(series, self._config())
        self.result_ = self.results_
        self.params_ = [r.params for r in self.results_]
        self.labels_ = list(series.labels)
        self.converged_ = all(r.converged for r in self.results_)
        self.n_iter_ = max(r.iterations for r in self.results_)
        return self

    def var(self, levels=(0.01, 0.05)):
        check_is_fitted(self, "results_")
        return risk.var_report(self.results_, levels)


class SharedParameterMixture(_MixtureBase):
    """Shared Gaussian/Cauchy components, one free weight per interval.

    Attributes after ``fit``: ``params_``, ``weights_`` (per-interval Gaussian
    weights), ``labels_``, ``loglik_``, ``converged_``, ``n_iter_``.
    """

    def fit(self, y, groups=None):
        series = as_interval_series(y, groups)
        self.result_ = fit_shared(series, self._config())
        self.params_ = self.result_.params
        self.weights_ = self.result_.weights
        self.labels_ = list(series.labels)
        self.converged_ = self.result_.converged
        self.n_iter_ = self.result_.iterations
        self.loglik_ = self.result_.loglik
        return self

    def predict_proba(self, y, groups=None):
        """Gaussian responsibilities of new observations in fitted intervals."""
        check_is_fitted(self, "result_")
        series = as_interval_series(y, groups)
        lookup = dict(zip(self.labels_, self.params_.alphas))
        out = []
        for label, chunk in zip(series.labels, series.intervals):
            if label not in lookup:
                raise DataError(f"interval {label!r} was not seen during fit")
            _, p = _loglik_and_resp(chunk, self.params_.gaussian,
                                    self.params_.cauchy, float(lookup[label]))
            out.append(p)
        return np.concatenate(out)


class LogisticWeightMixture(_MixtureBase):
    """Shared components with weights tied to predictors by a logistic link.

    Attributes after ``fit``: ``params_``, ``coef_`` (intercept first when the
    predictor matrix carries one), ``weights_``, ``converged_``, ``n_iter_``.
    """

    def __init__(self, max_iter=1000, loglik_rtol=1e-8, param_atol=1e-6,
                 newton_max_iter=50, newton_tol=1e-10, alpha_clamp=1e-6,
                 standardize=True):
        super().__init__(max_iter, loglik_rtol, param_atol, newton_max_iter,
                         newton_tol, alpha_clamp)
        self.standardize = standardize

    def fit(self, y, X=None, groups=None):
        if X is None:
            raise DataError("the logistic-weight model needs interval "
                            "predictors X")
        series = as_interval_series(y, groups)
        X = as_exogenous(X, k=series.k)
        self.result_ = fit_logistic(series, X, self._config(),
                                    standardize=self.standardize)
        self.params_ = self.result_.params
        self.coef_ = self.result_.params.beta
        self.weights_ = self.result_.weights
        self.labels_ = list(series.labels)
        self.converged_ = self.result_.converged
        self.n_iter_ = self.result_.iterations
        self.loglik_ = self.result_.loglik
        self._train_series = series
        self._train_X = X
        return self

    def predict_weights(self, X_new):
        """Predicted Gaussian weights for new predictor rows."""
        check_is_fitted(self, "result_")
        return predict_weights(self.result_, X_new)

    def standard_errors(self, rel_step=1e-5):
        """Fisher-information standard errors at the fitted parameters."""
        check_is_fitted(self, "result_")
        return fisher_std_errors(self._train_series, self._train_X,
                                 self.result_, rel_step=rel_step)


class AutocorrelatedWeightMixture(BaseEstimator):
    """Latent AR(1) logit-weights estimated by Monte Carlo EM.

    Substantially heavier than the other models: every iteration samples a
    Markov chain over the latent weight vector.
    """

    def __init__(self, chain_length=2000, burn_in=500, thin=5, proposal_sd=0.5,
                 em_iters=30, stabilization_window=5, stabilization_tol=1e-3,
                 random_state=None):
        self.chain_length = chain_length
        self.burn_in = burn_in
        self.thin = thin
        self.proposal_sd = proposal_sd
        self.em_iters = em_iters
        self.stabilization_window = stabilization_window
        self.stabilization_tol = stabilization_tol
        self.random_state = random_state

    def fit(self, y, X=None, groups=None):
        if X is None:
            raise DataError("the autocorrelated-weight model needs interval "
                            "predictors X")
        series = as_interval_series(y, groups)
        X = as_exogenous(X, k=series.k)
        config = McemConfig(
            chain_length=self.chain_length, burn_in=self.burn_in,
            thin=self.thin, proposal_sd=self.proposal_sd,
            em_iters=self.em_iters,
            stabilization_window=self.stabilization_window,
            stabilization_tol=self.stabilization_tol)
        self.result_ = fit_mcem(series, X, config, seed=self.random_state)
        self.params_ = self.result_.params
        self.coef_ = self.result_.params.beta
        self.ar1_ = self.result_.params.ar1
        self.weights_ = self.result_.weights
        self.labels_ = list(series.labels)
        self.converged_ = self.result_.converged
        self.n_iter_ = self.result_.iterations
        return self

    def var(self, levels=(0.01, 0.05)):
        check_is_fitted(self, "result_")
        return risk.var_report(self.result_, levels)

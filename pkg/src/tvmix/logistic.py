"""Mixture with constant components and logistic-regression interval weights.

The Gaussian weight of interval ``i`` is tied to exogenous predictors through
``alpha_i = logistic(x_i . beta)``, so the weights can be *predicted* for
intervals whose returns have not been observed yet. Supports mixed sampling
frequencies: predictors live at the interval level (e.g. monthly) while
observations fill each interval at a faster cadence (e.g. weekly), with ragged
interval sizes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr
from scipy.special import expit
from sklearn.exceptions import ConvergenceWarning

from .distributions import CauchyParams, GaussianParams
from .em import (
    EmConfig,
    FitResult,
    _converged,
    _iqr,
    _LOGISTIC_CAUCHY_BUDGET,
    _loglik_and_resp,
    _SIGMA_FLOOR_FRAC,
    _weighted_logpdfs,
    fit_weighted_cauchy,
    init_estimates,
)
from .exceptions import DataError, NumericalError
from .series import ExogenousMatrix, WeightSeries, as_exogenous, as_interval_series

# Coefficients are clamped at this magnitude; fractional responsibilities make
# true perfect separation rare, but saturated weights can still push beta out.
_BETA_CLAMP = 1e3

_GRAD_TOL = 1e-8


@dataclass(frozen=True)
class LogisticMixtureParams:
    """Shared components plus logistic-link coefficients for the weights."""

    gaussian: GaussianParams
    cauchy: CauchyParams
    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).ravel()
        if not np.all(np.isfinite(beta)):
            raise DataError("beta must be finite")
        beta.flags.writeable = False
        object.__setattr__(self, "beta", beta)

    @property
    def n_parameters(self):
        return 4 + self.beta.size


def logistic_weights(X, beta, provenance="estimated", labels=None):
    """Interval weights ``logistic(x_i . beta)`` as a :class:`WeightSeries`.

    Uses the overflow-safe logistic evaluation, so arbitrarily large linear
    predictors saturate cleanly instead of overflowing.
    """
    X = as_exogenous(X)
    beta = np.asarray(beta, dtype=float).ravel()
    design = X.design()
    if design.shape[1] != beta.size:
        raise DataError(f"beta has {beta.size} entries but the design matrix "
                        f"has {design.shape[1]} columns")
    return WeightSeries(expit(design @ beta), provenance=provenance,
                        labels=labels)


def _check_full_rank(design, coef_names):
    _, r, piv = qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(design.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < design.shape[1]:
        bad = sorted(coef_names[j] for j in piv[rank:])
        raise DataError("predictor matrix is rank deficient; offending "
                        f"column(s): {', '.join(map(str, bad))}")


def fit_fractional_logit(resp_by_interval, X, start=None, coef_names=None):
    """Maximize the fractional-target logistic log-likelihood over beta.

    The objective ``sum_ij (x_i.beta * p_ij - log(1 + exp(x_i.beta)))`` is the
    usual logistic log-likelihood with the 0/1 targets replaced by per
    observation responsibilities; it is concave, so damped Newton steps always
    ascend. Returns when the gradient infinity-norm falls below 1e-8.
    Coefficients reaching magnitude 1e3 are clamped with a warning
    (quasi-separation).
    """
    if isinstance(X, ExogenousMatrix):
        design = X.design()
        coef_names = X.coef_names
    else:
        design = np.asarray(X, dtype=float)
        if coef_names is None:
            coef_names = tuple(f"x{j}" for j in range(design.shape[1]))
    sums = np.array([float(np.sum(p)) for p in resp_by_interval])
    counts = np.array([np.size(p) for p in resp_by_interval], dtype=float)
    if design.shape[0] != sums.size:
        raise DataError("responsibility groups and design rows disagree")
    _check_full_rank(design, coef_names)

    beta = np.zeros(design.shape[1]) if start is None \
        else np.asarray(start, dtype=float).copy()

    def objective(b):
        eta = design @ b
        return float(sums @ eta - counts @ np.logaddexp(0.0, eta))

    obj = objective(beta)
    for _ in range(100):
        eta = design @ beta
        fitted = expit(eta)
        grad = design.T @ (sums - counts * fitted)
        if np.max(np.abs(grad)) < _GRAD_TOL:
            break
        weight = counts * fitted * (1.0 - fitted)
        hess = design.T @ (design * weight[:, None])
        try:
            direction = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            ridge = 1e-10 * max(1.0, np.trace(hess) / hess.shape[0])
            direction = np.linalg.solve(hess + ridge * np.eye(hess.shape[0]),
                                        grad)
        decrement = float(grad @ direction)
        if decrement <= 1e-11 * (1.0 + abs(obj)):
            # Ascent left is below the objective's float resolution; inside
            # the quadratic basin an undamped Newton step still contracts the
            # gradient, which is what the stopping rule watches.
            beta = beta + direction
            obj = objective(beta)
        else:
            scale, improved = 1.0, False
            for _ in range(60):
                cand = beta + scale * direction
                cand_obj = objective(cand)
                if cand_obj > obj:
                    beta, obj, improved = cand, cand_obj, True
                    break
                scale *= 0.5
            if not improved:
                raise NumericalError("logistic weight update failed to ascend "
                                     "a concave objective; data is pathological")
        if np.max(np.abs(beta)) >= _BETA_CLAMP:
            warnings.warn("weight regression coefficients hit the separation "
                          "clamp at 1e3; estimates are boundary values",
                          ConvergenceWarning)
            beta = np.clip(beta, -_BETA_CLAMP, _BETA_CLAMP)
            break
    return beta


class _Standardizer:
    """Center/scale predictor columns for optimizer conditioning.

    Centering is only valid when an intercept column can absorb it, so
    intercept-free designs are scaled but not centered. Coefficients are mapped
    back to the original predictor scale after fitting.
    """

    def __init__(self, X: ExogenousMatrix, enabled=True):
        rows = X.rows
        if enabled:
            self.center = rows.mean(axis=0) if X.intercept else np.zeros(X.p)
            scale = rows.std(axis=0)
            self.scale = np.where(scale > 0, scale, 1.0)
        else:
            self.center = np.zeros(X.p)
            self.scale = np.ones(X.p)
        self.intercept = X.intercept
        z = (rows - self.center) / self.scale
        self.design = np.hstack([np.ones((X.k, 1)), z]) if X.intercept else z

    def to_original(self, beta_internal):
        b = np.asarray(beta_internal, dtype=float)
        if self.intercept:
            slope = b[1:] / self.scale
            inter = b[0] - float(slope @ self.center)
            return np.concatenate([[inter], slope])
        return b / self.scale


def fit_logistic(series, X, config: EmConfig | None = None, standardize=True):
    """EM fit of shared components with logistic-link interval weights.

    Alternates responsibilities, the fractional-target weight regression, the
    closed-form Gaussian moments and the Newton Cauchy update. Needs at least
    one interval more than the number of coefficients. Coefficients are
    standardized internally and reported on the original predictor scale.
    """
    series = as_interval_series(series)
    X = as_exogenous(X, k=series.k)
    config = config or EmConfig()
    if series.k < X.n_coef + 1:
        raise DataError(f"{series.k} intervals cannot identify {X.n_coef} "
                        "weight coefficients plus the mixture; need "
                        f"k >= {X.n_coef + 1}")

    std = _Standardizer(X, enabled=standardize)
    _check_full_rank(std.design, X.coef_names)

    y = series.flatten()
    counts = series.counts
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    start = init_estimates(y)
    gaussian, cauchy = start.gaussian, start.cauchy
    beta = np.zeros(std.design.shape[1])
    sigma_floor = _SIGMA_FLOOR_FRAC * _iqr(y)
    budget = config.cauchy_budget(_LOGISTIC_CAUCHY_BUDGET)

    def loglik_resp(gauss, cau, b):
        alphas = config.clip_alpha(expit(std.design @ b))
        wg, wc = _weighted_logpdfs(y, gauss, cau, np.repeat(alphas, counts))
        total = np.logaddexp(wg, wc)
        return float(total.sum()), np.exp(wg - total)

    ll, _ = loglik_resp(gaussian, cauchy, beta)
    trace = [ll]
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iter + 1):
        _, p = loglik_resp(gaussian, cauchy, beta)
        grouped = [p[o:o + c] for o, c in zip(offsets, counts)]
        beta_new = fit_fractional_logit(grouped, std.design, start=beta,
                                        coef_names=X.coef_names)
        sp = float(p.sum())
        if sp < 1e-10:
            gaussian_new = gaussian
        else:
            mu_new = float(p @ y / sp)
            sigma_new = max(float(np.sqrt(p @ (y - mu_new) ** 2 / sp)),
                            sigma_floor)
            gaussian_new = GaussianParams(mu_new, sigma_new)
        if y.size - sp < 1e-10 or iterations > budget:
            cauchy_new = cauchy
        else:
            cauchy_new = fit_weighted_cauchy(y, 1.0 - p, cauchy, config)

        dparam = max(
            abs(gaussian_new.mu - gaussian.mu),
            abs(gaussian_new.sigma - gaussian.sigma),
            abs(cauchy_new.theta - cauchy.theta),
            abs(cauchy_new.delta - cauchy.delta),
            float(np.max(np.abs(beta_new - beta))),
        )
        gaussian, cauchy, beta = gaussian_new, cauchy_new, beta_new
        ll_new, _ = loglik_resp(gaussian, cauchy, beta)
        trace.append(ll_new)
        if _converged(ll_new, trace[-2], dparam, config):
            converged = True
            break

    params = LogisticMixtureParams(gaussian, cauchy, std.to_original(beta))
    # Weights recomputed from the original-scale design so that predicting on
    # the training predictors reproduces them bit for bit.
    weights = logistic_weights(X, params.beta, provenance="estimated",
                               labels=series.labels)
    resp = []
    for y_i, a_i in zip(series.intervals, config.clip_alpha(weights.values)):
        _, p_i = _loglik_and_resp(y_i, gaussian, cauchy, float(a_i))
        resp.append(p_i)
    return FitResult(
        params=params,
        loglik_trace=np.asarray(trace),
        iterations=iterations,
        converged=converged,
        responsibilities=resp,
        weights=weights,
        degenerate=gaussian.sigma <= sigma_floor * (1.0 + 1e-12),
    )


def predict_weights(fit, X_new):
    """Weights implied by fitted coefficients on new predictor rows."""
    params = fit.params if isinstance(fit, FitResult) else fit
    X_new = as_exogenous(X_new)
    return logistic_weights(X_new, params.beta, provenance="predicted")


def _observed_loglik_internal(series, design, vec):
    """Observed-data log-likelihood at the internal parameter vector.

    Layout: ``(mu, log sigma, theta, log delta, beta...)``. Weights are kept a
    hair inside (0, 1) so saturated linear predictors do not send the
    log-likelihood to -inf during differencing.
    """
    mu, log_sigma, theta, log_delta = vec[:4]
    beta = vec[4:]
    gaussian = GaussianParams(float(mu), float(np.exp(log_sigma)))
    cauchy = CauchyParams(float(theta), float(np.exp(log_delta)))
    alphas = np.clip(expit(design @ beta), 1e-300, 1.0 - 1e-16)
    total = 0.0
    for y_i, a_i in zip(series.intervals, alphas):
        ll, _ = _loglik_and_resp(y_i, gaussian, cauchy, float(a_i))
        total += ll
    return total


def fisher_std_errors(series, X, fit, rel_step=1e-5):
    """Standard errors from the observed Fisher information at the fit.

    The Hessian of the observed-data log-likelihood is computed by central
    finite differences on the internal scale ``(mu, log sigma, theta,
    log delta, beta)`` with per-parameter relative step ``rel_step``, then
    inverted; scale-parameter errors are mapped back with the delta method.
    Directions in which the information matrix is not positive definite are
    flagged and reported as NaN rather than silently inverted.
    """
    if isinstance(fit, FitResult):
        if not fit.converged:
            raise DataError("standard errors require a converged fit")
        params = fit.params
    else:
        params = fit
    series = as_interval_series(series)
    X = as_exogenous(X, k=series.k)
    design = X.design()
    if design.shape[1] != params.beta.size:
        raise DataError("fit and predictors disagree on coefficient count")

    vec = np.concatenate([
        [params.gaussian.mu, np.log(params.gaussian.sigma),
         params.cauchy.theta, np.log(params.cauchy.delta)],
        params.beta,
    ])
    n = vec.size
    h = rel_step * np.maximum(1.0, np.abs(vec))

    def f(v):
        return _observed_loglik_internal(series, design, v)

    f0 = f(vec)
    hess = np.empty((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        hess[i, i] = (f(vec + ei) - 2.0 * f0 + f(vec - ei)) / h[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h[j]
            hess[i, j] = hess[j, i] = (
                f(vec + ei + ej) - f(vec + ei - ej)
                - f(vec - ei + ej) + f(vec - ei - ej)
            ) / (4.0 * h[i] * h[j])

    info = -hess
    keep = list(range(n))
    names = ["mu", "log_sigma", "theta", "log_delta"] + list(X.coef_names)
    while keep:
        sub = info[np.ix_(keep, keep)]
        eigvals, eigvecs = np.linalg.eigh(sub)
        if eigvals[0] > 0:
            break
        worst = keep[int(np.argmax(np.abs(eigvecs[:, 0])))]
        warnings.warn(f"observed information is not positive definite along "
                      f"{names[worst]}; its standard error is reported as NaN",
                      ConvergenceWarning)
        keep.remove(worst)

    se_internal = np.full(n, np.nan)
    if keep:
        sub_cov = np.linalg.inv(info[np.ix_(keep, keep)])
        se_internal[keep] = np.sqrt(np.diag(sub_cov))

    return {
        "mu": se_internal[0],
        "sigma": params.gaussian.sigma * se_internal[1],
        "theta": se_internal[2],
        "delta": params.cauchy.delta * se_internal[3],
        "beta": se_internal[4:].copy(),
    }

"""Exact EM estimation for Gaussian-Cauchy mixtures.

Two variants share the machinery here:

* independent per-interval fits: every interval gets its own
  ``(mu, sigma, theta, delta, alpha)``;
* shared distribution parameters: one ``(mu, sigma, theta, delta)`` for the
  whole series with a free weight ``alpha_i`` per interval, cutting the
  parameter count from ``5k`` to ``k + 4``.

The weight and Gaussian updates are closed-form; the Cauchy location/scale
update has no closed form and is solved by a damped Newton iteration in
``(theta, log delta)`` with analytic derivatives.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.exceptions import ConvergenceWarning

from .distributions import (
    CauchyParams,
    GaussianParams,
    MixtureParams,
    cauchy_logpdf,
    gaussian_logpdf,
)
from .exceptions import (
    DataError,
    DegenerateDataError,
    TooFewObservationsError,
)
from .series import WeightSeries, as_interval_series

# Effective-sample threshold below which a component's parameters are frozen
# for the step instead of being updated from numerically empty weights.
_EMPTY_WEIGHT = 1e-10

# sigma is floored at this multiple of the data IQR so the Gaussian component
# cannot collapse onto a single observation.
_SIGMA_FLOOR_FRAC = 1e-8

# Default fat-tail update budgets per model family (see EmConfig.cauchy_update).
# Pooled fits tolerate more re-estimation before drifting than per-interval
# fits; these are calibrated against the reference simulation studies.
_SHARED_CAUCHY_BUDGET = 12
_LOGISTIC_CAUCHY_BUDGET = 16


@dataclass(frozen=True)
class EmConfig:
    """Convergence and numerical knobs shared by the EM fits.

    Iteration stops once the relative log-likelihood change
    ``|ll_t - ll_{t-1}| / (1 + |ll_{t-1}|)`` drops below ``loglik_rtol`` *and*
    the largest absolute parameter change drops below ``param_atol``, or after
    ``max_iter`` steps.

    ``cauchy_update`` is the fat-tail re-estimation budget: ``"every"``
    re-solves ``(theta, delta)`` at each step, ``"first"`` only at the first
    step (the anchored fit), an integer ``n`` during the first ``n`` steps,
    and ``None`` (default) lets each model-level fit pick its calibrated
    budget. A budget exists because the mixture likelihood is unbounded
    (a vanishing fat-tail scale centered on one observation); fully
    re-estimated small-sample fits demonstrably drift into those spikes,
    while the frozen steps still maximize the reduced model exactly, so the
    ascent property is preserved either way.
    """

    max_iter: int = 1000
    loglik_rtol: float = 1e-8
    param_atol: float = 1e-6
    newton_max_iter: int = 50
    newton_tol: float = 1e-10
    alpha_clamp: float = 1e-6
    cauchy_update: object = None

    def __post_init__(self):
        for name in ("max_iter", "loglik_rtol", "param_atol", "newton_max_iter",
                     "newton_tol", "alpha_clamp"):
            if getattr(self, name) <= 0:
                raise DataError(f"{name} must be positive")
        if self.alpha_clamp >= 0.5:
            raise DataError("alpha_clamp must be below 0.5")
        cu = self.cauchy_update
        if cu is not None and cu not in ("first", "every") \
                and not (isinstance(cu, int) and cu >= 1):
            raise DataError("cauchy_update must be None, 'first', 'every' or "
                            "a positive integer budget")

    def clip_alpha(self, alpha):
        return np.clip(alpha, self.alpha_clamp, 1.0 - self.alpha_clamp)

    def cauchy_budget(self, default):
        """Resolve the fat-tail update budget against a model-level default."""
        cu = default if self.cauchy_update is None else self.cauchy_update
        if cu == "first":
            return 1
        if cu == "every":
            return np.inf
        return int(cu)


@dataclass(frozen=True)
class SharedMixtureParams:
    """One Gaussian and one Cauchy component shared by ``k`` intervals."""

    gaussian: GaussianParams
    cauchy: CauchyParams
    alphas: np.ndarray

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=float).ravel()
        if np.any(alphas < 0) or np.any(alphas > 1) or not np.all(np.isfinite(alphas)):
            raise DataError("interval weights must lie in [0, 1]")
        alphas.flags.writeable = False
        object.__setattr__(self, "alphas", alphas)

    @property
    def k(self):
        return self.alphas.size

    @property
    def n_parameters(self):
        return self.k + 4

    def interval_params(self, i):
        return MixtureParams(self.gaussian, self.cauchy, float(self.alphas[i]))


@dataclass
class FitResult:
    """Outcome of one fit: parameters, likelihood path, diagnostics."""

    params: object
    loglik_trace: np.ndarray
    iterations: int
    converged: bool
    responsibilities: object = None
    std_errors: dict | None = None
    weights: WeightSeries | None = None
    label: object = None
    degenerate: bool = False
    error: str | None = None

    @property
    def loglik(self):
        return float(self.loglik_trace[-1]) if len(self.loglik_trace) else np.nan


def _iqr(y):
    q1, q3 = np.percentile(y, [25.0, 75.0])  # linear-interpolation quartiles
    return q3 - q1


def init_estimates(y):
    """Starting values: median location, IQR scale for both components, alpha 1/2.

    Both scales start at the raw IQR; the fat-tailed component is deliberately
    not rescaled even though its theoretical IQR is twice its scale parameter.
    """
    y = np.asarray(y, dtype=float).ravel()
    if y.size < 2:
        raise DataError("need at least 2 observations for initial estimates")
    spread = _iqr(y)
    if spread <= 0:
        raise DegenerateDataError(
            "interquartile range is zero; data carries no scale information")
    m = float(np.median(y))
    return MixtureParams(GaussianParams(m, float(spread)),
                         CauchyParams(m, float(spread)), 0.5)


def _weighted_logpdfs(y, gaussian, cauchy, alpha):
    with np.errstate(divide="ignore"):
        wg = gaussian_logpdf(y, gaussian) + np.log(alpha)
        wc = cauchy_logpdf(y, cauchy) + np.log1p(-alpha)
    return wg, wc


def _loglik_and_resp(y, gaussian, cauchy, alpha):
    wg, wc = _weighted_logpdfs(y, gaussian, cauchy, alpha)
    total = np.logaddexp(wg, wc)
    return float(total.sum()), np.exp(wg - total)


def observed_loglik(series, params):
    """Sum of per-observation log mixture densities for the whole series.

    ``params`` may be a single :class:`MixtureParams` (applied to every
    interval), a sequence of them (one per interval), or a
    :class:`SharedMixtureParams`.
    """
    series = as_interval_series(series)
    if isinstance(params, MixtureParams):
        per_interval = [params] * series.k
    elif isinstance(params, SharedMixtureParams):
        if params.k != series.k:
            raise DataError("parameter record and series disagree on k")
        per_interval = [params.interval_params(i) for i in range(series.k)]
    else:
        per_interval = list(params)
        if len(per_interval) != series.k:
            raise DataError("parameter record and series disagree on k")
    total = 0.0
    for y, p in zip(series.intervals, per_interval):
        ll, _ = _loglik_and_resp(y, p.gaussian, p.cauchy, p.alpha)
        total += ll
    return total


# ---------------------------------------------------------------------------
# Weighted Cauchy maximum likelihood (the non-closed-form M-step)
# ---------------------------------------------------------------------------

def _cauchy_objective(y, w, theta, s):
    r = (y - theta) * np.exp(-s)
    return -s - float(w @ np.log1p(r * r))


def _cauchy_grad_hess(y, w, theta, s):
    inv_delta = np.exp(-s)
    r = (y - theta) * inv_delta
    t = 1.0 + r * r
    rt = r / t
    g_theta = 2.0 * inv_delta * float(w @ rt)
    g_s = 2.0 * float(w @ (r * rt)) - 1.0
    h_tt = -2.0 * inv_delta * inv_delta * float(w @ ((1.0 - r * r) / (t * t)))
    h_ts = -4.0 * inv_delta * float(w @ (rt / t))
    h_ss = -4.0 * float(w @ (rt * rt))
    return np.array([g_theta, g_s]), np.array([[h_tt, h_ts], [h_ts, h_ss]])


def _golden_max(f, lo, hi, tol=1e-10, max_iter=200):
    """Plain golden-section search for the maximum of a unimodal f on [lo, hi]."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) < tol:
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def fit_weighted_cauchy(y, weights, start: CauchyParams, config: EmConfig | None = None):
    """Maximize the weighted Cauchy log-likelihood over location and scale.

    Solves ``argmax over (theta, delta)`` of
    ``sum_i w_i * (-log delta - log(1 + ((y_i - theta)/delta)^2))`` by Newton
    steps in ``(theta, log delta)`` with analytic gradient and Hessian and
    step-halving. If Newton cannot make progress the routine falls back to
    coordinate-wise golden-section search; the returned objective is never
    below the objective at ``start``.
    """
    config = config or EmConfig()
    y = np.asarray(y, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if y.shape != w.shape:
        raise DataError("y and weights must have the same length")
    total = w.sum()
    if total <= _EMPTY_WEIGHT:
        raise DegenerateDataError(
            "effective sample for the fat-tailed component is empty")
    w = w / total  # scale-free gradient tolerances

    theta, s = float(start.theta), float(np.log(start.delta))
    obj = _cauchy_objective(y, w, theta, s)
    converged = False
    for _ in range(config.newton_max_iter):
        grad, hess = _cauchy_grad_hess(y, w, theta, s)
        if np.max(np.abs(grad)) < config.newton_tol:
            converged = True
            break
        det = hess[0, 0] * hess[1, 1] - hess[0, 1] * hess[1, 0]
        if det > 0 and hess[0, 0] < 0:  # negative definite: Newton is ascent
            step = np.array([
                -(hess[1, 1] * grad[0] - hess[0, 1] * grad[1]) / det,
                -(hess[0, 0] * grad[1] - hess[1, 0] * grad[0]) / det,
            ])
        else:
            step = grad / max(1.0, np.max(np.abs(grad)))
        improved = False
        scale = 1.0
        for _ in range(30):
            cand_theta = theta + scale * step[0]
            cand_s = float(np.clip(s + scale * step[1], -350.0, 350.0))
            cand = _cauchy_objective(y, w, cand_theta, cand_s)
            if cand > obj:
                theta, s, obj = cand_theta, cand_s, cand
                improved = True
                break
            scale *= 0.5
        if not improved:
            # Newton stalled; sweep coordinates with golden-section instead.
            # The location maximizer cannot leave the hull of the data.
            span = float(np.max(np.abs(y - theta))) + np.exp(min(s, 300.0)) + 1.0
            cand_theta, cand_s = theta, s
            for _ in range(3):
                cand_theta = _golden_max(
                    lambda t: _cauchy_objective(y, w, t, cand_s),
                    cand_theta - span, cand_theta + span)
                cand_s = _golden_max(
                    lambda v: _cauchy_objective(y, w, cand_theta, v),
                    cand_s - 8.0, cand_s + 8.0)
            cand = _cauchy_objective(y, w, cand_theta, cand_s)
            if cand <= obj:
                break  # keep the best point found so far
            theta, s, obj = cand_theta, cand_s, cand
    if not converged:
        grad, _ = _cauchy_grad_hess(y, w, theta, s)
        if np.max(np.abs(grad)) > 1e3 * config.newton_tol:
            warnings.warn(
                "weighted Cauchy update stopped before reaching gradient "
                "tolerance; returning best iterate", ConvergenceWarning)
    return CauchyParams(theta, float(np.exp(s)))


# ---------------------------------------------------------------------------
# EM for a single interval (independent fits)
# ---------------------------------------------------------------------------

def em_step(y, current: MixtureParams, config: EmConfig | None = None,
            sigma_floor=None, update_cauchy=True):
    """One full EM update of ``(mu, sigma, theta, delta, alpha)`` on one sample.

    Weight and Gaussian updates are the closed-form weighted moments; the
    Cauchy update runs the Newton solver on the complementary responsibilities
    (skipped when ``update_cauchy`` is false, the anchored-fit mode). A
    component whose total responsibility underflows is frozen for the step.
    """
    config = config or EmConfig()
    y = np.asarray(y, dtype=float).ravel()
    if sigma_floor is None:
        sigma_floor = _SIGMA_FLOOR_FRAC * max(_iqr(y), np.finfo(float).tiny)
    _, p = _loglik_and_resp(y, current.gaussian, current.cauchy, current.alpha)
    sp = float(p.sum())
    sq = float(y.size - sp)

    alpha_new = float(config.clip_alpha(sp / y.size))

    if sp < _EMPTY_WEIGHT:
        gauss_new = current.gaussian
    else:
        mu_new = float(p @ y / sp)
        var_new = float(p @ (y - mu_new) ** 2 / sp)
        sigma_new = max(float(np.sqrt(var_new)), float(sigma_floor))
        gauss_new = GaussianParams(mu_new, sigma_new)

    if sq < _EMPTY_WEIGHT or not update_cauchy:
        cauchy_new = current.cauchy
    else:
        cauchy_new = fit_weighted_cauchy(y, 1.0 - p, current.cauchy, config)

    return MixtureParams(gauss_new, cauchy_new, alpha_new)


def _param_delta(a: MixtureParams, b: MixtureParams):
    return max(abs(x - y) for x, y in zip(a.as_tuple(), b.as_tuple()))


def _converged(ll_new, ll_old, dparam, config):
    rel = abs(ll_new - ll_old) / (1.0 + abs(ll_old))
    return rel < config.loglik_rtol and dparam < config.param_atol


def fit_single_mixture(y, config: EmConfig | None = None):
    """Fit one five-parameter mixture to a single batch of observations."""
    config = config or EmConfig()
    y = np.asarray(y, dtype=float).ravel()
    params = init_estimates(y)
    sigma_floor = _SIGMA_FLOOR_FRAC * _iqr(y)
    budget = config.cauchy_budget("first")
    ll, _ = _loglik_and_resp(y, params.gaussian, params.cauchy, params.alpha)
    trace = [ll]
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iter + 1):
        new_params = em_step(y, params, config, sigma_floor=sigma_floor,
                             update_cauchy=iterations <= budget)
        ll_new, _ = _loglik_and_resp(y, new_params.gaussian, new_params.cauchy,
                                     new_params.alpha)
        dparam = _param_delta(new_params, params)
        trace.append(ll_new)
        params = new_params
        if _converged(ll_new, trace[-2], dparam, config):
            converged = True
            break
    _, resp = _loglik_and_resp(y, params.gaussian, params.cauchy, params.alpha)
    return FitResult(
        params=params,
        loglik_trace=np.asarray(trace),
        iterations=iterations,
        converged=converged,
        responsibilities=resp,
        degenerate=params.gaussian.sigma <= sigma_floor * (1.0 + 1e-12),
    )


def fit_independent(series, config: EmConfig | None = None):
    """Independent mixture fit per interval; one :class:`FitResult` each.

    Intervals with fewer than five observations (one per free parameter) are
    refused. A failing interval is reported in its own result's ``error`` field
    without aborting the rest; if every interval fails, the first error is
    raised.
    """
    series = as_interval_series(series)
    config = config or EmConfig()
    results, errors = [], []
    for label, y in zip(series.labels, series.intervals):
        try:
            if y.size < 5:
                raise TooFewObservationsError(
                    f"interval {label!r} has {y.size} observations; at least 5 "
                    "are needed for a five-parameter fit")
            result = fit_single_mixture(y, config)
            result.label = label
        except DataError as exc:
            errors.append(exc)
            result = FitResult(params=None, loglik_trace=np.empty(0),
                               iterations=0, converged=False, label=label,
                               error=str(exc))
        results.append(result)
    if errors and len(errors) == len(results):
        raise errors[0]
    return results


# ---------------------------------------------------------------------------
# EM with shared distribution parameters and free per-interval weights
# ---------------------------------------------------------------------------

def fit_shared(series, config: EmConfig | None = None,
               allow_single_interval=False):
    """Fit shared ``(mu, sigma, theta, delta)`` with one weight per interval.

    Initialization pools all observations into a single five-parameter fit,
    then the EM loop re-estimates interval weights as per-interval mean
    responsibilities while the distribution parameters are updated from the
    pooled weighted moments. With ``k = 1`` this coincides with the independent
    fit, which is why single-interval input is refused unless explicitly
    allowed.
    """
    series = as_interval_series(series)
    config = config or EmConfig()
    if series.k < 2 and not allow_single_interval:
        raise DataError("need at least 2 intervals; fit a single interval with "
                        "fit_independent instead")

    y = series.flatten()
    counts = series.counts
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    pooled = fit_single_mixture(y, config)
    gaussian, cauchy = pooled.params.gaussian, pooled.params.cauchy
    alphas = np.full(series.k, config.clip_alpha(pooled.params.alpha))
    sigma_floor = _SIGMA_FLOOR_FRAC * _iqr(y)
    budget = config.cauchy_budget(_SHARED_CAUCHY_BUDGET)

    def loglik_resp(gauss, cau, alph):
        wg, wc = _weighted_logpdfs(y, gauss, cau, np.repeat(alph, counts))
        total = np.logaddexp(wg, wc)
        return float(total.sum()), np.exp(wg - total)

    ll, _ = loglik_resp(gaussian, cauchy, alphas)
    trace = [ll]
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iter + 1):
        _, p = loglik_resp(gaussian, cauchy, alphas)
        alphas_new = config.clip_alpha(np.add.reduceat(p, offsets) / counts)
        sp = float(p.sum())
        if sp < _EMPTY_WEIGHT:
            gaussian_new = gaussian
        else:
            mu_new = float(p @ y / sp)
            sigma_new = max(float(np.sqrt(p @ (y - mu_new) ** 2 / sp)),
                            sigma_floor)
            gaussian_new = GaussianParams(mu_new, sigma_new)
        if y.size - sp < _EMPTY_WEIGHT or iterations > budget:
            cauchy_new = cauchy
        else:
            cauchy_new = fit_weighted_cauchy(y, 1.0 - p, cauchy, config)

        dparam = max(
            abs(gaussian_new.mu - gaussian.mu),
            abs(gaussian_new.sigma - gaussian.sigma),
            abs(cauchy_new.theta - cauchy.theta),
            abs(cauchy_new.delta - cauchy.delta),
            float(np.max(np.abs(alphas_new - alphas))),
        )
        gaussian, cauchy, alphas = gaussian_new, cauchy_new, alphas_new
        ll_new, _ = loglik_resp(gaussian, cauchy, alphas)
        trace.append(ll_new)
        if _converged(ll_new, trace[-2], dparam, config):
            converged = True
            break

    _, p = loglik_resp(gaussian, cauchy, alphas)
    resp = [p[o:o + c] for o, c in zip(offsets, counts)]
    params = SharedMixtureParams(gaussian, cauchy, alphas)
    return FitResult(
        params=params,
        loglik_trace=np.asarray(trace),
        iterations=iterations,
        converged=converged,
        responsibilities=resp,
        weights=WeightSeries(alphas, provenance="estimated",
                             labels=series.labels),
        degenerate=gaussian.sigma <= sigma_floor * (1.0 + 1e-12),
    )

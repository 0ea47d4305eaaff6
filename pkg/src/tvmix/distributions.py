"""Gaussian, Cauchy and two-component mixture primitives.

Densities, log-densities, CDFs, responsibilities and sampling for the mixture

    f(y) = alpha * N(y; mu, sigma) + (1 - alpha) * Cauchy(y; theta, delta).

All likelihood arithmetic is done in log space: the ratio of a Gaussian and a
Cauchy density spans hundreds of orders of magnitude in the tails, so naive
density ratios underflow long before the quantities of interest do.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .exceptions import DataError

_LOG_2PI = np.log(2.0 * np.pi)
_LOG_PI = np.log(np.pi)


def _require_finite(name, value):
    if not np.all(np.isfinite(value)):
        raise DataError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class GaussianParams:
    """Location/scale of the thin-tailed component."""

    mu: float
    sigma: float

    def __post_init__(self):
        _require_finite("mu", self.mu)
        _require_finite("sigma", self.sigma)
        if self.sigma <= 0:
            raise DataError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class CauchyParams:
    """Location/scale of the fat-tailed component."""

    theta: float
    delta: float

    def __post_init__(self):
        _require_finite("theta", self.theta)
        _require_finite("delta", self.delta)
        if self.delta <= 0:
            raise DataError(f"delta must be positive, got {self.delta}")


@dataclass(frozen=True)
class MixtureParams:
    """Full parameter set of a two-component mixture for one time interval."""

    gaussian: GaussianParams
    cauchy: CauchyParams
    alpha: float

    def __post_init__(self):
        _require_finite("alpha", self.alpha)
        if not 0.0 <= self.alpha <= 1.0:
            raise DataError(f"alpha must lie in [0, 1], got {self.alpha}")

    def as_tuple(self):
        """(mu, sigma, theta, delta, alpha)."""
        g, c = self.gaussian, self.cauchy
        return (g.mu, g.sigma, c.theta, c.delta, self.alpha)


def _checked_y(y):
    y = np.asarray(y, dtype=float)
    _require_finite("y", y)
    return y


def gaussian_logpdf(y, p: GaussianParams):
    y = _checked_y(y)
    z = (y - p.mu) / p.sigma
    return -0.5 * z * z - np.log(p.sigma) - 0.5 * _LOG_2PI


def gaussian_pdf(y, p: GaussianParams):
    return np.exp(gaussian_logpdf(y, p))


def cauchy_logpdf(y, p: CauchyParams):
    y = _checked_y(y)
    z = (y - p.theta) / p.delta
    return -np.log1p(z * z) - np.log(p.delta) - _LOG_PI


def cauchy_pdf(y, p: CauchyParams):
    return np.exp(cauchy_logpdf(y, p))


def _component_logpdfs(y, p: MixtureParams):
    """Weighted component log-densities (log alpha + log f_g, log(1-alpha) + log f_c)."""
    lg = gaussian_logpdf(y, p.gaussian)
    lc = cauchy_logpdf(y, p.cauchy)
    with np.errstate(divide="ignore"):
        return lg + np.log(p.alpha), lc + np.log1p(-p.alpha)


def mixture_logpdf(y, p: MixtureParams):
    wg, wc = _component_logpdfs(y, p)
    return np.logaddexp(wg, wc)


def mixture_pdf(y, p: MixtureParams):
    return np.exp(mixture_logpdf(y, p))


def mixture_cdf(y, p: MixtureParams):
    """alpha * Phi((y-mu)/sigma) + (1-alpha) * (1/2 + arctan((y-theta)/delta)/pi)."""
    y = np.asarray(y, dtype=float)
    if np.any(np.isnan(y)):
        raise DataError("y must not contain NaN")
    cdf_g = ndtr((y - p.gaussian.mu) / p.gaussian.sigma)
    cdf_c = 0.5 + np.arctan((y - p.cauchy.theta) / p.cauchy.delta) / np.pi
    return p.alpha * cdf_g + (1.0 - p.alpha) * cdf_c


def gaussian_quantile(q, p: GaussianParams):
    return p.mu + p.sigma * ndtri(q)


def cauchy_quantile(q, p: CauchyParams):
    q = np.asarray(q, dtype=float)
    return p.theta + p.delta * np.tan(np.pi * (q - 0.5))


def responsibilities(y, p: MixtureParams):
    """Posterior probability that each observation came from the Gaussian component.

    Evaluated in log space so the ratio survives tail observations where both
    weighted densities underflow; never divides by zero.
    """
    wg, wc = _component_logpdfs(y, p)
    return np.exp(wg - np.logaddexp(wg, wc))


def sample_mixture(n, p: MixtureParams, seed, scheme="deterministic-count",
                   return_labels=False):
    """Draw ``n`` variates from a Gaussian-Cauchy mixture.

    ``deterministic-count`` draws exactly ``round(alpha * n)`` Gaussian variates
    (round-half-to-even) and the rest Cauchy, then shuffles; ``bernoulli`` draws
    i.i.d. component labels instead. A fixed ``seed`` makes the output
    bit-reproducible. ``seed`` may be anything ``numpy.random.default_rng``
    accepts, including a ``SeedSequence`` spawn for parallel replication.
    """
    if n < 1:
        raise DataError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    g, c = p.gaussian, p.cauchy
    if scheme == "deterministic-count":
        n_gauss = int(np.rint(p.alpha * n))
        labels = np.zeros(n, dtype=bool)
        labels[:n_gauss] = True
        rng.shuffle(labels)
    elif scheme == "bernoulli":
        labels = rng.random(n) < p.alpha
    else:
        raise DataError(f"unknown sampling scheme {scheme!r}")
    out = np.empty(n)
    n_gauss = int(labels.sum())
    out[labels] = g.mu + g.sigma * rng.standard_normal(n_gauss)
    out[~labels] = c.theta + c.delta * rng.standard_cauchy(n - n_gauss)
    if return_labels:
        return out, labels
    return out

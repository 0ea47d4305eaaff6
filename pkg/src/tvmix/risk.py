"""Value-at-risk from fitted mixtures.

VaR at level ``q`` is reported as the loss ``-F^{-1}(q)`` of the return
distribution, so a 1% VaR of 0.20 means a one-in-a-hundred weekly loss of 20%.

Expected shortfall is deliberately absent: any mixture with a nonzero Cauchy
weight has a divergent tail expectation, so ES is not a finite number here.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .distributions import (
    MixtureParams,
    cauchy_quantile,
    gaussian_quantile,
    mixture_cdf,
)
from .em import FitResult, SharedMixtureParams
from .exceptions import DataError

EXPECTED_SHORTFALL_REFUSAL = (
    "expected shortfall is not reported: the Cauchy component has no finite "
    "mean, so the tail expectation diverges for any mixture weight below 1; "
    "use VaR quantiles instead")

_CDF_TOL = 1e-10


def mixture_quantile(q, p: MixtureParams):
    """Unique ``y`` with ``mixture_cdf(y) = q``, to 1e-10 in CDF units.

    The component quantiles bracket the mixture quantile (the mixture CDF is a
    convex combination of the component CDFs), so root-finding starts from an
    exact bracket.
    """
    if not 0.0 < q < 1.0:
        raise DataError(f"quantile level must lie in (0, 1), got {q}")
    lo = hi = None
    if p.alpha > 0.0:
        lo = hi = float(gaussian_quantile(q, p.gaussian))
    if p.alpha < 1.0:
        qc = float(cauchy_quantile(q, p.cauchy))
        lo = qc if lo is None else min(lo, qc)
        hi = qc if hi is None else max(hi, qc)
    if lo == hi:
        return lo
    # Each component CDF equals q at its own quantile, so F(lo) <= q <= F(hi):
    # the component quantiles are an exact starting bracket.
    mid = 0.5 * (lo + hi)
    for _ in range(2000):
        gap = float(mixture_cdf(mid, p)) - q
        if abs(gap) <= _CDF_TOL:
            break
        if gap < 0.0:
            lo = mid
        else:
            hi = mid
        nxt = 0.5 * (lo + hi)
        if nxt == mid:  # float resolution exhausted
            break
        mid = nxt
    return float(mid)


def _interval_mixtures(fit):
    """(label, MixtureParams) per interval from any fit shape."""
    if isinstance(fit, (list, tuple)):
        bad = [r.label for r in fit if not r.converged]
        if bad:
            raise DataError(f"refusing VaR from non-converged interval fits: {bad}")
        return [(r.label, r.params) for r in fit]
    if not isinstance(fit, FitResult):
        raise DataError("expected a FitResult or a list of per-interval results")
    if not fit.converged:
        raise DataError("refusing VaR from a non-converged fit")
    params = fit.params
    if isinstance(params, MixtureParams):
        return [(fit.label, params)]
    if isinstance(params, SharedMixtureParams):
        labels = fit.weights.labels if fit.weights is not None else None
        labels = labels or range(params.k)
        return [(lab, params.interval_params(i))
                for i, lab in zip(range(params.k), labels)]
    if fit.weights is None:
        raise DataError("fit carries no per-interval weights; cannot build "
                        "interval VaR")
    labels = fit.weights.labels or range(len(fit.weights))
    return [(lab, MixtureParams(params.gaussian, params.cauchy, float(a)))
            for lab, a in zip(labels, fit.weights.values)]


def var_report(fit, levels):
    """Per-interval VaR table: one row per (interval, level).

    ``fit`` may be a single fit with per-interval weights or the list of
    independent per-interval fits; only converged fits are accepted.
    """
    levels = [float(q) for q in np.atleast_1d(levels)]
    for q in levels:
        if not 0.0 < q < 1.0:
            raise DataError(f"VaR level must lie in (0, 1), got {q}")
    rows = []
    for label, params in _interval_mixtures(fit):
        for q in levels:
            rows.append({
                "interval": label,
                "level": q,
                "var": -mixture_quantile(q, params),
                "alpha": params.alpha,
            })
    return pd.DataFrame(rows)

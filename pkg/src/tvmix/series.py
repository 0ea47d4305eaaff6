"""Data containers: ragged interval series, predictor matrices, weight tracks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError


class IntervalSeries:
    """Observations grouped into ordered time intervals.

    Interval sizes may be ragged (e.g. 4 or 5 weeks per month). Labels carry
    the calendar key of each interval (a year, a "YYYY-MM" string, or a plain
    index) and travel with every fit and report built from the series.
    """

    def __init__(self, intervals, labels=None):
        arrays = []
        for i, values in enumerate(intervals):
            a = np.array(values, dtype=float).ravel()
            if a.size == 0:
                raise DataError(f"interval {i} is empty")
            if not np.all(np.isfinite(a)):
                raise DataError(f"interval {i} contains non-finite values")
            a.flags.writeable = False
            arrays.append(a)
        if not arrays:
            raise DataError("an IntervalSeries needs at least one interval")
        if labels is None:
            labels = range(len(arrays))
        labels = tuple(labels)
        if len(labels) != len(arrays):
            raise DataError(
                f"{len(labels)} labels for {len(arrays)} intervals")
        self.intervals = tuple(arrays)
        self.labels = labels

    @classmethod
    def from_flat(cls, values, groups):
        """Build from a flat observation vector and a same-length group key vector.

        Groups are kept in order of first appearance, so callers control the
        time ordering by ordering their rows.
        """
        values = np.asarray(values, dtype=float).ravel()
        groups = np.asarray(groups).ravel()
        if values.shape != groups.shape:
            raise DataError("values and groups must have the same length")
        labels, order = [], {}
        for g in groups:
            if g not in order:
                order[g] = len(labels)
                labels.append(g)
        chunks = [values[groups == g] for g in labels]
        return cls(chunks, labels=labels)

    @property
    def k(self):
        return len(self.intervals)

    @property
    def counts(self):
        return np.array([a.size for a in self.intervals])

    @property
    def n_obs(self):
        return int(self.counts.sum())

    def flatten(self):
        return np.concatenate(self.intervals)

    def pooled(self):
        """All observations collapsed into a single interval."""
        return IntervalSeries([self.flatten()], labels=["pooled"])

    def subset(self, indices):
        indices = list(indices)
        return IntervalSeries([self.intervals[i] for i in indices],
                              labels=[self.labels[i] for i in indices])

    def __len__(self):
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def __getitem__(self, i):
        return self.intervals[i]

    def __repr__(self):
        return f"IntervalSeries(k={self.k}, n_obs={self.n_obs})"


def as_interval_series(y, groups=None, labels=None):
    """Validation helper: coerce user input to an :class:`IntervalSeries`.

    Accepts an existing series, a flat vector plus ``groups``, or a sequence
    of per-interval arrays.
    """
    if isinstance(y, IntervalSeries):
        return y
    if groups is not None:
        return IntervalSeries.from_flat(y, groups)
    first = np.asarray(y, dtype=object)
    if first.ndim == 1 and np.isscalar(first[0]):
        return IntervalSeries([np.asarray(y, dtype=float)], labels=labels)
    return IntervalSeries(y, labels=labels)


class ExogenousMatrix:
    """Per-interval predictor rows, optionally with a leading intercept column."""

    def __init__(self, rows, intercept=True, columns=None):
        rows = np.array(rows, dtype=float)
        if rows.ndim == 1:
            rows = rows[:, None]
        if rows.ndim != 2 or rows.shape[1] < 1:
            raise DataError("predictor rows must form a (k, p) matrix with p >= 1")
        if not np.all(np.isfinite(rows)):
            raise DataError("predictors contain non-finite values")
        rows.flags.writeable = False
        self.rows = rows
        self.intercept = bool(intercept)
        if columns is None:
            columns = [f"x{j}" for j in range(rows.shape[1])]
        columns = tuple(str(c) for c in columns)
        if len(columns) != rows.shape[1]:
            raise DataError(f"{len(columns)} column names for {rows.shape[1]} columns")
        self.columns = columns

    @property
    def k(self):
        return self.rows.shape[0]

    @property
    def p(self):
        return self.rows.shape[1]

    @property
    def n_coef(self):
        """Number of regression coefficients (predictors plus intercept if any)."""
        return self.p + (1 if self.intercept else 0)

    @property
    def coef_names(self):
        if self.intercept:
            return ("intercept",) + self.columns
        return self.columns

    def design(self):
        """The (k, n_coef) design matrix with the intercept column prepended."""
        if self.intercept:
            return np.hstack([np.ones((self.k, 1)), self.rows])
        return self.rows.copy()

    def __repr__(self):
        return f"ExogenousMatrix(k={self.k}, p={self.p}, intercept={self.intercept})"


def as_exogenous(X, k=None):
    """Validation helper: coerce to :class:`ExogenousMatrix` and check row count."""
    if not isinstance(X, ExogenousMatrix):
        X = ExogenousMatrix(X)
    if k is not None and X.k != k:
        raise DataError(f"predictor matrix has {X.k} rows but the series has "
                        f"{k} intervals")
    return X


@dataclass(frozen=True)
class WeightSeries:
    """Per-interval Gaussian-component weights with provenance.

    ``provenance`` records whether the weights were estimated in-sample,
    predicted from held-out predictors, or fixed as simulation ground truth.
    """

    values: np.ndarray
    provenance: str = "estimated"
    labels: tuple = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(values)):
            raise DataError("weights contain non-finite values")
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise DataError("weights must lie in [0, 1]")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != values.size:
                raise DataError(f"{len(labels)} labels for {values.size} weights")
            object.__setattr__(self, "labels", labels)

    @property
    def k(self):
        return self.values.size

    def __len__(self):
        return self.values.size

"""Data ingestion: price CSVs to log returns, calendar grouping, macro panels.

File conventions: CSV with a header row, ISO-8601 dates, decimal points. Lines
starting with ``#`` are provenance headers written by the CLI and are skipped
on re-ingestion. No network access: users download data themselves.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .exceptions import DataError
from .series import ExogenousMatrix, IntervalSeries

_PRICE_COLUMN_CANDIDATES = ("Adj Close", "AdjClose", "adj_close", "Close",
                            "close", "Price", "price")


@dataclass(frozen=True)
class PriceSeries:
    """Dated positive prices, strictly increasing in time."""

    dates: pd.DatetimeIndex
    prices: np.ndarray

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        if len(self.dates) != prices.size:
            raise DataError("dates and prices must have the same length")
        if prices.size < 1:
            raise DataError("price series is empty")
        bad = np.flatnonzero(~(np.isfinite(prices) & (prices > 0)))
        if bad.size:
            i = int(bad[0])
            raise DataError(f"nonpositive or non-finite price at row {i} "
                            f"({self.dates[i].date()}): {prices[i]}")
        diffs = np.diff(self.dates.values.astype("datetime64[ns]"))
        if np.any(diffs <= np.timedelta64(0, "ns")):
            i = int(np.flatnonzero(diffs <= np.timedelta64(0, "ns"))[0]) + 1
            raise DataError(f"dates must be strictly increasing; row {i} "
                            f"({self.dates[i].date()}) does not advance")
        prices.flags.writeable = False
        object.__setattr__(self, "prices", prices)


def read_price_csv(path, date_column="Date", price_column=None):
    """Load a price CSV (header required) into a :class:`PriceSeries`.

    ``price_column`` defaults to the first match among common adjusted-close /
    close column names.
    """
    frame = pd.read_csv(path, comment="#")
    if date_column not in frame.columns:
        raise DataError(f"no {date_column!r} column in {path}; "
                        f"columns: {list(frame.columns)}")
    if price_column is None:
        for cand in _PRICE_COLUMN_CANDIDATES:
            if cand in frame.columns:
                price_column = cand
                break
        else:
            raise DataError(f"no price column found in {path}; "
                            f"pass one of {list(frame.columns)} explicitly")
    elif price_column not in frame.columns:
        raise DataError(f"no {price_column!r} column in {path}")
    try:
        dates = pd.DatetimeIndex(pd.to_datetime(frame[date_column],
                                                format="ISO8601"))
    except (ValueError, TypeError) as exc:
        raise DataError(f"unparseable ISO dates in {path}: {exc}") from exc
    prices = pd.to_numeric(frame[price_column], errors="coerce").to_numpy()
    return PriceSeries(dates=dates, prices=prices)


def log_returns(prices: PriceSeries):
    """``r_t = log(P_t / P_{t-1})``, dated at ``t``; a pandas Series."""
    if prices.prices.size < 2:
        raise DataError("need at least 2 prices to compute returns")
    values = np.diff(np.log(prices.prices))
    return pd.Series(values, index=prices.dates[1:], name="log_return")


def group_by_interval(returns, rule="year"):
    """Group a dated return series into calendar intervals.

    ``rule`` is ``"year"`` (labels are ints) or ``"month"`` (labels are
    ``"YYYY-MM"`` strings). Calendar keys missing inside the span are reported
    with a warning and skipped, so interval sizes stay ragged but honest.
    """
    if not isinstance(returns, pd.Series) or len(returns) == 0:
        raise DataError("expected a nonempty pandas Series of dated returns")
    idx = pd.DatetimeIndex(returns.index)
    if rule == "year":
        keys = idx.year
        span = range(int(keys.min()), int(keys.max()) + 1)
        labels_all = list(span)
    elif rule == "month":
        periods = idx.to_period("M")
        keys = periods.astype(str)
        span = pd.period_range(periods.min(), periods.max(), freq="M")
        labels_all = [str(p) for p in span]
    else:
        raise DataError(f"unknown grouping rule {rule!r}; use 'year' or 'month'")

    groups = {}
    for key, value in zip(keys, returns.to_numpy()):
        groups.setdefault(key, []).append(value)
    labels, chunks = [], []
    for lab in labels_all:
        if lab in groups:
            labels.append(lab)
            chunks.append(np.asarray(groups[lab]))
        else:
            warnings.warn(f"interval {lab} has no observations inside the "
                          "span; dropped")
    return IntervalSeries(chunks, labels=labels)


@dataclass(frozen=True)
class MacroPanel:
    """Monthly macro predictors: strictly increasing months without gaps."""

    months: pd.PeriodIndex
    values: np.ndarray
    columns: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != len(self.months):
            raise DataError("values must be a (months, columns) matrix")
        if len(self.columns) != values.shape[1]:
            raise DataError("column names do not match the value matrix")
        if not np.all(np.isfinite(values)):
            raise DataError("macro panel contains missing or non-finite values")
        if len(self.months) < 1:
            raise DataError("macro panel is empty")
        diffs = np.diff(self.months.asi8)
        if np.any(diffs <= 0):
            raise DataError("panel months must be strictly increasing")
        if np.any(diffs > 1):
            i = int(np.flatnonzero(diffs > 1)[0])
            raise DataError(f"panel has a gap after {self.months[i]}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "columns", tuple(self.columns))

    def frame(self):
        return pd.DataFrame(self.values, index=self.months,
                            columns=list(self.columns))


def read_macro_csv(path, date_column="Date"):
    """Load a monthly macro CSV; every non-date column becomes a predictor."""
    frame = pd.read_csv(path, comment="#")
    if date_column not in frame.columns:
        raise DataError(f"no {date_column!r} column in {path}")
    months = pd.PeriodIndex(pd.to_datetime(frame[date_column],
                                           format="ISO8601"), freq="M")
    cols = [c for c in frame.columns if c != date_column]
    if not cols:
        raise DataError(f"{path} has no predictor columns")
    values = frame[cols].apply(pd.to_numeric, errors="coerce").to_numpy()
    return MacroPanel(months=months, values=values, columns=tuple(cols))


def align_macro(series: IntervalSeries, panel: MacroPanel, transforms=None,
                drop=(), correlation_threshold=0.95):
    """One predictor row per monthly interval, with optional transforms.

    ``transforms`` maps column names to ``"level"`` (default) or
    ``"first-difference"``. Returns ``(ExogenousMatrix, correlation frame)``;
    predictor pairs whose correlation exceeds the threshold are flagged with a
    warning so the operator can drop one (``drop`` removes columns by name).
    """
    transforms = dict(transforms or {})
    drop = set(drop)
    for name in set(transforms) | drop:
        if name not in panel.columns:
            raise DataError(f"unknown macro column {name!r}; "
                            f"panel has {list(panel.columns)}")
    for name, kind in transforms.items():
        if kind not in ("level", "first-difference"):
            raise DataError(f"unknown transform {kind!r} for column {name!r}")

    frame = panel.frame().copy()
    for name, kind in transforms.items():
        if kind == "first-difference":
            frame[name] = frame[name].diff()
    frame = frame.drop(columns=list(drop))

    try:
        wanted = pd.PeriodIndex([pd.Period(str(lab), freq="M")
                                 for lab in series.labels])
    except Exception as exc:
        raise DataError("interval labels must be year-month keys to align "
                        f"with a monthly panel: {exc}") from exc
    missing = [str(m) for m in wanted
               if m not in frame.index or frame.loc[m].isna().any()]
    if missing:
        raise DataError("macro panel does not cover the return span; missing "
                        f"months: {', '.join(missing)}")
    rows = frame.loc[wanted]
    corr = rows.corr()
    names = list(rows.columns)
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            c = corr.iloc[i, j]
            if np.isfinite(c) and abs(c) > correlation_threshold:
                warnings.warn(f"predictors {names[i]!r} and {names[j]!r} are "
                              f"strongly correlated ({c:.2f}); consider "
                              "dropping one")
    X = ExogenousMatrix(rows.to_numpy(), intercept=True, columns=names)
    return X, corr


def write_interval_csv(series: IntervalSeries, path, header_lines=()):
    """Grouped observations as (interval, value) rows at 15 significant digits."""
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("interval,value\n")
        for label, chunk in zip(series.labels, series.intervals):
            for v in chunk:
                fh.write(f"{label},{v:.15g}\n")


def read_interval_csv(path):
    """Inverse of :func:`write_interval_csv`."""
    frame = pd.read_csv(path, comment="#", dtype={"interval": str})
    if not {"interval", "value"} <= set(frame.columns):
        raise DataError(f"{path} is not a grouped interval CSV")
    labels, chunks = [], []
    for lab, sub in frame.groupby("interval", sort=False):
        labels.append(lab)
        chunks.append(sub["value"].to_numpy(dtype=float))
    return IntervalSeries(chunks, labels=labels)

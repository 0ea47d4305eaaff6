"""Exception types shared across the package.

``DataError`` subclasses ``ValueError`` so callers that only know numpy/sklearn
conventions can still catch invalid-input failures the usual way. ``NumericalError``
marks failures of the fitting machinery itself (as opposed to bad inputs) and maps
to a distinct CLI exit code.
"""


class DataError(ValueError):
    """Invalid or unusable input data."""


class DegenerateDataError(DataError):
    """Data that admits no meaningful fit (e.g. zero interquartile range)."""


class TooFewObservationsError(DataError):
    """More free parameters than observations can support."""


class NumericalError(RuntimeError):
    """An estimation routine failed for numerical reasons."""

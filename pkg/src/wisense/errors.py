"""Typed error hierarchy shared across the toolkit.

Every error the library raises deliberately derives from WisenseError, so
callers (and the CLI) can distinguish bad usage, bad data, and numerical
failure by class. ``exit_code`` is what the CLI process returns.
"""
from __future__ import annotations


class WisenseError(Exception):
    exit_code = 2


class UsageError(WisenseError):
    """Caller misuse: bad arguments, bad configuration, contract violation."""

    exit_code = 1


class DataError(WisenseError):
    """Malformed, inconsistent, or insufficient input data."""

    exit_code = 2


class NumericError(WisenseError):
    """A numerical routine failed; results would be meaningless."""

    exit_code = 3


# ---- core types / matrix ops


class EmptyInput(DataError):
    pass


class TooFewSubcarriers(DataError):
    pass


class TooFewFrames(DataError):
    pass


class TooFewRows(DataError):
    pass


class SingleAntenna(DataError):
    pass


# ---- capture / file parsing


class TruncatedRecord(DataError):
    pass


class PayloadSizeMismatch(DataError):
    pass


class UnsupportedDimensions(DataError):
    pass


class HeaderMissing(DataError):
    pass


class RowArityMismatch(DataError):
    pass


class NonMonotoneTimestamps(DataError):
    pass


class WindowOutOfRange(DataError):
    pass


# ---- simulation


class AliasedDoppler(DataError):
    pass


# ---- preprocessing / features


class InvalidCutoff(UsageError):
    pass


class DegenerateInput(DataError):
    pass


class IndexOutOfRange(UsageError):
    pass


class SeriesTooShort(DataError):
    pass


class SpanTooLong(UsageError):
    pass


# ---- gesture


class NoSegments(DataError):
    pass


# ---- classifiers


class EmptyClass(DataError):
    pass


class DegenerateLabels(DataError):
    pass


class ShapeMismatch(UsageError):
    pass


class NonFiniteLoss(NumericError):
    pass


class NumericalUnderflow(NumericError):
    pass


# ---- evaluation / configuration


class SplitImpossible(DataError):
    pass


class ConfigError(UsageError):
    pass

"""Compensated floating-point accumulation.

Return times grow with the number of base-map crossings, so every running sum
of roof values in this package goes through a compensated accumulator rather
than bare ``+=``. The scheme is Neumaier's variant of Kahan summation: the
compensation term also captures the case where the incoming term is larger
than the running sum.
"""

from __future__ import annotations

import numpy as np


class CompensatedSum:
    """Running Neumaier-compensated sum of scalars."""

    __slots__ = ("hi", "lo")

    def __init__(self, value: float = 0.0):
        self.hi = float(value)
        self.lo = 0.0

    def add(self, value: float) -> None:
        t = self.hi + value
        if abs(self.hi) >= abs(value):
            self.lo += (self.hi - t) + value
        else:
            self.lo += (value - t) + self.hi
        self.hi = t

    @property
    def value(self) -> float:
        return self.hi + self.lo

    def residual_from(self, total: float) -> float:
        """total - (current sum), evaluated with the split representation."""
        return (total - self.hi) - self.lo


def compensated_sum(values) -> float:
    """Neumaier sum of an iterable of floats."""
    acc = CompensatedSum()
    for v in values:
        acc.add(float(v))
    return acc.value


def vector_add(hi: np.ndarray, lo: np.ndarray, v: np.ndarray):
    """One elementwise Neumaier step: (hi, lo) += v. Returns the new (hi, lo).

    One lane per Monte Carlo sample; callers keep only active lanes, so the
    arrays shrink as orbits complete.
    """
    t = hi + v
    big = np.abs(hi) >= np.abs(v)
    lo = lo + np.where(big, (hi - t) + v, (v - t) + hi)
    return t, lo


def vector_residual(hi: np.ndarray, lo: np.ndarray, totals: np.ndarray) -> np.ndarray:
    """Elementwise totals - sums, using the split representation."""
    return (totals - hi) - lo

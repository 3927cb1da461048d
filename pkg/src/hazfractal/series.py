"""Series types, profile construction, bidirectional windowing and local trends."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidInput, InvalidWindowSize, UnderdeterminedFit


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """Finite real-valued series ``r_1..r_l``; the input of the analysis."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values)
        if arr.size == 0:
            raise InvalidInput("time series must contain at least one value")
        if not np.all(np.isfinite(arr)):
            raise InvalidInput("time series contains NaN or infinite values")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size

    @property
    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True)
class ProfileSeries:
    """Cumulative sum of the mean-centred series."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class WindowGrid:
    """Non-overlapping windows of length ``s`` tiled from both ends.

    ``starts`` holds the first index of every window: the ``count`` forward
    windows come first, then the ``count`` backward windows, the n-th of which
    covers ``[l - n*s, l - (n-1)*s)``.
    """

    s: int
    count: int
    length: int
    starts: np.ndarray

    @property
    def forward_starts(self) -> np.ndarray:
        return self.starts[: self.count]

    @property
    def backward_starts(self) -> np.ndarray:
        return self.starts[self.count:]

    @property
    def windows(self) -> list[range]:
        return [range(int(a), int(a) + self.s) for a in self.starts]

    def __len__(self) -> int:
        return self.starts.size

    def take(self, values: np.ndarray) -> np.ndarray:
        """Gather ``values`` into a ``(2*count, s)`` array, one row per window."""
        values = np.asarray(values)
        if values.shape[-1] != self.length:
            raise InvalidInput(f"expected length {self.length}, got {values.shape[-1]}")
        idx = self.starts[:, None] + np.arange(self.s)[None, :]
        return values[..., idx]


@dataclass(frozen=True)
class LocalTrend:
    coefficients: np.ndarray  # highest degree first
    fitted: np.ndarray

    @property
    def order(self) -> int:
        return self.coefficients.size - 1


def as_series(series) -> TimeSeries:
    return series if isinstance(series, TimeSeries) else TimeSeries(series)


def profile(series) -> ProfileSeries:
    """Cumulative sum of ``r_i - mean(r)``; the last element telescopes to 0."""
    r = as_series(series).values
    return ProfileSeries(np.cumsum(r - r.mean()))


def window_count(l: int, s: int) -> int:
    if s < 2 or l < s:
        raise InvalidWindowSize(f"window length {s} invalid for series length {l}")
    return l // s


def segment_bidirectional(prof, s: int) -> WindowGrid:
    length = len(prof)
    if not 2 <= s <= length:
        raise InvalidWindowSize(f"window length {s} outside [2, {length}]")
    count = window_count(length, s)
    forward = np.arange(count) * s
    backward = length - (np.arange(count) + 1) * s
    starts = np.concatenate([forward, backward]).astype(np.int64)
    starts.setflags(write=False)
    return WindowGrid(s=s, count=count, length=length, starts=starts)


def _vandermonde(s: int, m: int) -> np.ndarray:
    k = np.arange(1, s + 1, dtype=np.float64)
    return np.vander(k, m + 1)


def local_trend(window_values, m: int = 2) -> LocalTrend:
    """Least-squares polynomial of order ``m`` against abscissae ``k = 1..s``.

    Solved by SVD (``lstsq``); a rank-deficient system yields the minimum-norm
    solution instead of an error.
    """
    y = np.asarray(window_values, dtype=np.float64).reshape(-1)
    if m < 1:
        raise InvalidInput("polynomial order must be >= 1")
    if y.size <= m:
        raise UnderdeterminedFit(f"{y.size} points cannot determine an order-{m} fit")
    V = _vandermonde(y.size, m)
    coef, *_ = np.linalg.lstsq(V, y, rcond=None)
    return LocalTrend(coefficients=coef, fitted=V @ coef)


@lru_cache(maxsize=256)
def _trend_basis(s: int, m: int) -> np.ndarray:
    # Orthonormal basis of the polynomial column space. Rescaling k to (0, 1]
    # leaves the space unchanged but keeps QR well conditioned for large s.
    k = np.arange(1, s + 1, dtype=np.float64) / s
    q, _ = np.linalg.qr(np.vander(k, m + 1))
    q.setflags(write=False)
    return q


def fit_windows(windows: np.ndarray, m: int) -> np.ndarray:
    """Fitted trend for every row of ``windows`` (shape ``(..., s)``)."""
    s = windows.shape[-1]
    if s <= m:
        raise UnderdeterminedFit(f"{s} points cannot determine an order-{m} fit")
    q = _trend_basis(s, m)
    return (windows @ q) @ q.T
